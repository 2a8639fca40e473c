#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtgan/corpus.hpp"
#include "mtgan/lstm.hpp"
#include "mtgan/numerics.hpp"

namespace mtgan {

struct GeneratorConfig {
  int vocab_size = 0;
  int seq_len = 20;
  int embed_dim = 32;
  int hidden_dim = 32;
  int cond_dim = 8;
  int num_labels = 2;
  double grad_clip = 5.0;
  // Inverted dropout on the LSTM output before the vocabulary projection,
  // applied only by training calls that pass a dropout stream.
  double output_dropout = 0.0;
};

enum class PadMasking { kExcludePad, kIncludePad };

// Conditional LSTM language model G(x_t | x_{<t}, y). The label embedding is
// concatenated to the token embedding at every step; BOS feeds step 1.
//
// Parameters: "embedding" (V x d_e), "condition" (labels x d_c),
// "lstm.W" ((d_h + d_e + d_c) x 4 d_h), "lstm.b" (1 x 4 d_h),
// "out.W" (d_h x V), "out.b" (1 x V).
class Generator {
 public:
  Generator() = default;
  Generator(const GeneratorConfig& config, std::uint64_t seed);
  // Every parameter zero: a uniform next-token distribution.
  static Generator zeros(const GeneratorConfig& config);

  const GeneratorConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  LstmState initial_state(Eigen::Index batch) const;
  // Feeds one input token per row and returns next-token logits (batch x V).
  Tensor step(LstmState& state, std::span<const int> inputs, std::span<const int> labels) const;

  // log G(x_t | x_{<t}, y) for every position (batch x T).
  Tensor step_log_probs(const TokenMatrix& tokens, std::span<const int> labels) const;
  double sequence_log_prob(const LabeledSequence& seq, PadMasking masking = PadMasking::kExcludePad) const;
  std::vector<double> per_step_log_probs(const LabeledSequence& seq) const;

  // loss = -sum_{b,t} weights(b,t) * log G(x_bt | ...). Accumulates the exact
  // gradient into params() when requested.
  double weighted_nll(const TokenMatrix& tokens, std::span<const int> labels, const Tensor& weights,
                      bool accumulate_grad, RngStream* dropout_rng = nullptr);
  // Mean per-sequence NLL with PAD targets excluded.
  double mle_loss(std::span<const LabeledSequence> batch, bool accumulate_grad, RngStream* dropout_rng = nullptr);
  // One clipped optimizer step on the MLE objective; returns the pre-update
  // mean NLL.
  double mle_step(std::span<const LabeledSequence> batch, AdamState& optimizer, RngStream* dropout_rng = nullptr);
  // Ascends (1/B) sum_{b,t} R(b,t) log G(x_bt | ...), PAD targets excluded.
  // Returns the pre-update objective. An all-zero reward table is a no-op.
  double policy_gradient_step(std::span<const LabeledSequence> batch, const Tensor& rewards,
                              AdamState& optimizer);
  // Gradient of the policy-gradient loss without stepping (for analysis).
  double policy_gradient_loss(std::span<const LabeledSequence> batch, const Tensor& rewards, bool accumulate_grad);

  LabeledSequence sample(int label, RngStream& rng) const;
  // Row r uses rngs[r]. Positions [0, prefix_len) of `tokens` are kept and
  // the rest is sampled ancestrally, starting from `state` (the state after
  // consuming the prefix). Pass prefix_len = 0 and an initial state to sample
  // from scratch.
  void continue_sampling(TokenMatrix& tokens, std::span<const int> labels, int prefix_len, LstmState state,
                         std::span<RngStream> rngs) const;
  // Item i uses stream (seed, stream_id({kSample, stream_base, i})).
  Corpus sample_batch(std::span<const int> labels, std::uint64_t seed, std::uint64_t stream_base) const;

  // states[t] is the state after consuming the first t inputs (BOS, x_1, ...,
  // x_{t-1}); states[0] is the initial state. Size T.
  std::vector<LstmState> prefix_states(const TokenMatrix& tokens, std::span<const int> labels) const;

 private:
  Tensor step_inputs(std::span<const int> inputs, std::span<const int> labels) const;
  void check_batch(const TokenMatrix& tokens, std::span<const int> labels) const;

  GeneratorConfig config_;
  ParamStore params_;
};

// Weights selecting non-PAD targets, scaled by 1/B.
Tensor mle_weights(const TokenMatrix& tokens);

}  // namespace mtgan
