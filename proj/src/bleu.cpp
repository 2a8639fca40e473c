#include "mtgan/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>

#include "mtgan/errors.hpp"

namespace mtgan {
namespace {

using NgramCounts = std::unordered_map<std::uint64_t, int>;

std::vector<int> strip_pad(std::span<const int> tokens) {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (int t : tokens) {
    if (t != kPadId) out.push_back(t);
  }
  return out;
}

// 15 bits per token, shifted by one so that n-grams of different orders never
// collide.
std::uint64_t ngram_key(const std::vector<int>& tokens, std::size_t start, int n) {
  std::uint64_t key = 0;
  for (int k = 0; k < n; ++k) {
    const int t = tokens[start + static_cast<std::size_t>(k)];
    if (t < 0 || t >= (1 << 15) - 1) throw ValidationError("bleu: token id out of range");
    key = (key << 15) | static_cast<std::uint64_t>(t + 1);
  }
  return key;
}

// counts[n - 1] holds the n-gram counts of order n.
std::vector<NgramCounts> count_ngrams(const std::vector<int>& tokens, int max_n) {
  std::vector<NgramCounts> counts(static_cast<std::size_t>(max_n));
  for (int n = 1; n <= max_n; ++n) {
    if (tokens.size() < static_cast<std::size_t>(n)) break;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
      ++counts[static_cast<std::size_t>(n - 1)][ngram_key(tokens, i, n)];
    }
  }
  return counts;
}

double brevity_penalty(std::size_t candidate_len, std::span<const std::size_t> reference_lens) {
  if (reference_lens.empty()) return 0.0;
  // Closest reference length, ties broken toward the shorter one.
  std::size_t best = reference_lens[0];
  for (auto r : reference_lens) {
    const auto d = [&](std::size_t x) { return x > candidate_len ? x - candidate_len : candidate_len - x; };
    if (d(r) < d(best) || (d(r) == d(best) && r < best)) best = r;
  }
  if (candidate_len >= best) return 1.0;
  return std::exp(1.0 - static_cast<double>(best) / static_cast<double>(candidate_len));
}

// max_ref(gram) gives the largest count of a gram in any reference.
template <typename MaxRef>
double combine(const std::vector<NgramCounts>& cand, std::size_t cand_len, int max_n, MaxRef&& max_ref,
               std::span<const std::size_t> reference_lens) {
  const int orders = std::min<int>(max_n, static_cast<int>(cand_len));
  double log_sum = 0.0;
  for (int n = 1; n <= orders; ++n) {
    int clipped = 0;
    int total = 0;
    for (const auto& [gram, count] : cand[static_cast<std::size_t>(n - 1)]) {
      total += count;
      clipped += std::min(count, max_ref(n, gram));
    }
    const double p = clipped > 0 ? static_cast<double>(clipped) / total : kBleuEpsilon;
    log_sum += std::log(p);
  }
  return brevity_penalty(cand_len, reference_lens) * std::exp(log_sum / orders);
}

}  // namespace

double bleu(std::span<const int> candidate, std::span<const std::vector<int>> references, int max_n) {
  if (max_n < 1) throw ValidationError("bleu: max_n must be >= 1");
  const auto cand = strip_pad(candidate);
  if (cand.empty()) return 0.0;
  if (references.empty()) throw ValidationError("bleu: no references");
  const auto cand_counts = count_ngrams(cand, max_n);

  std::vector<std::size_t> lens;
  std::vector<NgramCounts> max_counts(static_cast<std::size_t>(max_n));
  for (const auto& r : references) {
    const auto ref = strip_pad(r);
    lens.push_back(ref.size());
    const auto rc = count_ngrams(ref, max_n);
    for (std::size_t n = 0; n < rc.size(); ++n) {
      for (const auto& [gram, count] : rc[n]) {
        auto& m = max_counts[n][gram];
        m = std::max(m, count);
      }
    }
  }
  auto max_ref = [&](int n, std::uint64_t gram) {
    const auto& m = max_counts[static_cast<std::size_t>(n - 1)];
    const auto it = m.find(gram);
    return it == m.end() ? 0 : it->second;
  };
  return combine(cand_counts, cand.size(), max_n, max_ref, lens);
}

double bleu(std::string_view candidate, std::span<const std::string_view> references, int max_n) {
  std::map<std::string, int> ids;
  auto encode = [&](std::string_view text) {
    std::istringstream in{std::string(text)};
    std::vector<int> out;
    std::string word;
    // Offset past the reserved ids so no word is mistaken for PAD.
    while (in >> word) out.push_back(ids.emplace(word, static_cast<int>(ids.size()) + 2).first->second);
    return out;
  };
  const auto cand = encode(candidate);
  std::vector<std::vector<int>> refs;
  for (auto r : references) refs.push_back(encode(r));
  return bleu(cand, refs, max_n);
}

double self_bleu(std::span<const std::vector<int>> samples, int max_n) {
  if (samples.size() < 2) throw ValidationError("self_bleu: need at least 2 samples");
  if (max_n < 1) throw ValidationError("bleu: max_n must be >= 1");
  const std::size_t n = samples.size();
  std::vector<std::vector<int>> stripped(n);
  std::vector<std::vector<NgramCounts>> counts(n);
  std::vector<std::size_t> lens(n);
  for (std::size_t i = 0; i < n; ++i) {
    stripped[i] = strip_pad(samples[i]);
    counts[i] = count_ngrams(stripped[i], max_n);
    lens[i] = stripped[i].size();
  }

  // For every gram keep the two largest counts and the owner of the largest,
  // so "max over all other samples" is O(1).
  struct Top2 {
    int first = 0;
    int second = 0;
    std::size_t owner = std::numeric_limits<std::size_t>::max();
  };
  std::vector<std::unordered_map<std::uint64_t, Top2>> top(static_cast<std::size_t>(max_n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < counts[i].size(); ++k) {
      for (const auto& [gram, c] : counts[i][k]) {
        auto& t = top[k][gram];
        if (c > t.first) {
          t.second = t.first;
          t.first = c;
          t.owner = i;
        } else if (c > t.second) {
          t.second = c;
        }
      }
    }
  }

  double total = 0.0;
  std::vector<std::size_t> other_lens;
  other_lens.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (stripped[i].empty()) continue;
    other_lens.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) other_lens.push_back(lens[j]);
    }
    auto max_ref = [&](int order, std::uint64_t gram) {
      const auto& t = top[static_cast<std::size_t>(order - 1)].at(gram);
      return t.owner == i ? t.second : t.first;
    };
    total += combine(counts[i], lens[i], max_n, max_ref, other_lens);
  }
  return total / static_cast<double>(n);
}

double self_bleu(std::span<const LabeledSequence> samples, int max_n) {
  std::vector<std::vector<int>> tokens;
  tokens.reserve(samples.size());
  for (const auto& s : samples) tokens.push_back(s.tokens);
  return self_bleu(tokens, max_n);
}

}  // namespace mtgan
