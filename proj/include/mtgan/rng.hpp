#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <vector>

namespace mtgan {

// Counter-based random stream. Draw i of stream (seed, stream) is a pure
// function of (seed, stream, i), so work that gives every batch item its own
// stream produces the same numbers regardless of scheduling.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u64(); }
  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal by Box-Muller; consumes two draws per call.
  double normal();
  // Uniform on {0, ..., n-1}; n > 0.
  std::uint64_t uniform_int(std::uint64_t n);
  // Inverse-CDF draw from unnormalized nonnegative weights.
  int categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Folds a tuple of identifiers (purpose tag, iteration, item index, ...)
// into a single stream id.
std::uint64_t stream_id(std::initializer_list<std::uint64_t> parts);

// Purpose tags for stream_id; values are part of the reproducibility
// contract and must not be renumbered.
enum class Purpose : std::uint64_t {
  kInit = 1,
  kCorpus = 2,
  kSplit = 3,
  kEmbedding = 4,
  kSample = 5,
  kRollout = 6,
  kDropout = 7,
  kShuffle = 8,
  kLabels = 9,
  kEval = 10,
  kGradCheck = 11,
};

inline std::uint64_t tag(Purpose p) { return static_cast<std::uint64_t>(p); }

}  // namespace mtgan
