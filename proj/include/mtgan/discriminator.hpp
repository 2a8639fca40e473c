#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtgan/corpus.hpp"
#include "mtgan/numerics.hpp"

namespace mtgan {

enum class DiscriminatorKind { kFastText, kCnn, kBiRnnAttention };

std::string to_string(DiscriminatorKind kind);
DiscriminatorKind parse_discriminator_kind(std::string_view name);

struct DiscriminatorConfig {
  DiscriminatorKind kind = DiscriminatorKind::kCnn;
  int vocab_size = 0;
  int seq_len = 20;
  int embed_dim = 32;
  int num_labels = 2;
  // When false the head ignores y (plain classifier).
  bool conditional = true;
  double dropout = 0.2;
  double l2 = 0.1;
  // fastText
  int bigram_buckets = 4096;
  bool use_bigrams = true;
  // CNN
  std::vector<int> filter_widths = {2, 3, 4};
  int filters_per_width = 16;
  // BiRNN-attention
  int rnn_hidden = 32;
  int attention_dim = 32;
};

// Binary sequence classifier D(X, y) in (0, 1) over a frozen word embedding.
// Subclasses produce a feature vector per sequence; the shared head applies
// dropout to the features, appends one-hot(y) and maps to a logit:
//   p = sigmoid([dropout(features), onehot(y)] . head.W + head.b)
// The training loss is mean binary cross-entropy plus (l2 / 2) ||head.W||^2.
class Discriminator {
 public:
  virtual ~Discriminator() = default;

  static std::unique_ptr<Discriminator> create(const DiscriminatorConfig& config, Tensor embedding,
                                               std::uint64_t seed);
  virtual std::unique_ptr<Discriminator> clone() const = 0;

  const DiscriminatorConfig& config() const { return config_; }
  DiscriminatorKind kind() const { return config_.kind; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Tensor& embedding() const { return embedding_; }
  int feature_dim() const { return feature_dim_; }

  // Evaluation-mode probabilities, one per row.
  Vector predict(const TokenMatrix& tokens, std::span<const int> labels) const;
  Vector predict(std::span<const LabeledSequence> seqs) const;
  double probability(const LabeledSequence& seq) const;
  // Penultimate features (before dropout and the condition head).
  Tensor features(const TokenMatrix& tokens) const { return compute_features(tokens, nullptr); }

  // When dropout_rng is null dropout is disabled.
  double loss(const TokenMatrix& tokens, std::span<const int> labels, const Vector& targets, bool accumulate_grad,
              RngStream* dropout_rng);
  // One optimizer step; returns the pre-update loss.
  double train_step(const TokenMatrix& tokens, std::span<const int> labels, const Vector& targets,
                    AdamState& optimizer, RngStream* dropout_rng);
  // Real rows target 1, synthetic rows target 0.
  double train_step(std::span<const LabeledSequence> real, std::span<const LabeledSequence> synthetic,
                    AdamState& optimizer, RngStream* dropout_rng);

 protected:
  struct Cache {
    virtual ~Cache() = default;
  };

  Discriminator(const DiscriminatorConfig& config, Tensor embedding);
  void add_head(int feature_dim);

  virtual Tensor compute_features(const TokenMatrix& tokens, std::unique_ptr<Cache>* cache) const = 0;
  virtual void backward_features(const TokenMatrix& tokens, const Cache& cache, const Tensor& dfeatures) = 0;

  void check_tokens(const TokenMatrix& tokens) const;

  DiscriminatorConfig config_;
  Tensor embedding_;
  ParamStore params_;
  int feature_dim_ = 0;
};

// Attention pooling over per-step hidden states (each batch x d):
//   u_t = tanh(H_t W + b), a_t = softmax_t(u_t . u), s = sum_t a_t H_t.
struct AttentionResult {
  Tensor pooled;   // batch x d
  Tensor weights;  // batch x T
  std::vector<Tensor> u;
};
AttentionResult attention_pool(const std::vector<Tensor>& hidden, const Tensor& w, const Tensor& b, const Tensor& u);

// y = t * relu(x Wh + bh) + (1 - t) * x with t = sigmoid(x Wt + bt).
Tensor highway(const Tensor& x, const Tensor& wh, const Tensor& bh, const Tensor& wt, const Tensor& bt);

// Bucket of the bigram (a, b) in a table of `buckets` rows.
int bigram_bucket(int a, int b, int buckets);

}  // namespace mtgan
