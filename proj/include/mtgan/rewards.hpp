#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtgan/corpus.hpp"
#include "mtgan/discriminator.hpp"
#include "mtgan/generator.hpp"

namespace mtgan {

enum class RescaleKind { kNone, kOda, kBra };

struct RescaleMode {
  RescaleKind kind = RescaleKind::kOda;
  double delta = 12.0;  // BRA smoothness
};

std::string to_string(const RescaleMode& mode);
// "none", "oda", "bra" or "bra:<delta>".
RescaleMode parse_rescale_mode(std::string_view text);

enum class BaselineMode { kOff, kBatchMean };

// Per-(sequence, timestep) rewards. Column t holds the reward for the action
// at position t.
struct RewardTable {
  Tensor values;
  RescaleMode rescale{RescaleKind::kNone, 0.0};
  bool rescaled = false;
  BaselineMode baseline_mode = BaselineMode::kOff;
  RowVector baseline;  // per-column value subtracted, empty when off
};

// Input is clamped to [0, 1 - 1e-6] before computing r / (1 - r).
double rescale_oda(double reward);
// sigmoid(delta * (0.5 - rank / B)) where rank 1 is the highest reward and
// ties keep input order. Requires B >= 2.
std::vector<double> rescale_bra(std::span<const double> rewards, double delta);

void apply_rescale(RewardTable& table, const RescaleMode& mode);
void subtract_baseline(RewardTable& table, BaselineMode mode);

struct RolloutOptions {
  int rollouts = 16;
  // Replace Monte Carlo sampling with the exact expectation over every
  // completion (tiny vocabularies only).
  bool enumerate = false;
  std::uint64_t seed = 0;
  std::uint64_t stream_base = 0;
};

// K completions of the first `prefix_len` tokens of `seq`, sampled from the
// rollout network. Completion k uses stream
// (seed, stream_id({kRollout, stream_base, item, prefix_len, k})).
Corpus mc_rollout(const LabeledSequence& seq, int prefix_len, int rollouts, const Generator& rollout,
                  std::uint64_t seed, std::uint64_t stream_base, std::uint64_t item = 0);

// Raw rewards in [0, 1]: for t < T the mean discriminator score over the
// rollouts of prefix x_1..x_t, and D(X) itself at t = T.
RewardTable compute_rewards(std::span<const LabeledSequence> batch, const Discriminator& discriminator,
                            const Generator& rollout, const RolloutOptions& options);

}  // namespace mtgan
