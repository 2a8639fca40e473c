#include "mtgan/generator.hpp"

#include <cmath>

namespace mtgan {

Tensor mle_weights(const TokenMatrix& tokens) {
  Tensor w(tokens.rows(), tokens.cols());
  const double scale = tokens.rows() > 0 ? 1.0 / static_cast<double>(tokens.rows()) : 0.0;
  for (Eigen::Index b = 0; b < tokens.rows(); ++b) {
    for (Eigen::Index t = 0; t < tokens.cols(); ++t) w(b, t) = tokens(b, t) == kPadId ? 0.0 : scale;
  }
  return w;
}

Generator::Generator(const GeneratorConfig& config, std::uint64_t seed) : config_(config) {
  if (config.vocab_size < 2) throw ValidationError("generator: vocab_size must be at least 2");
  RngStream rng(seed, stream_id({tag(Purpose::kInit), 1}));
  const int in = config.hidden_dim + config.embed_dim + config.cond_dim;
  params_.add("embedding", fan_in_normal_tensor(config.vocab_size, config.embed_dim, config.embed_dim, rng));
  params_.add("condition", fan_in_normal_tensor(config.num_labels, config.cond_dim, config.cond_dim, rng));
  params_.add("lstm.W", uniform_tensor(in, 4 * config.hidden_dim, 0.08, rng));
  params_.add("lstm.b", Tensor::Zero(1, 4 * config.hidden_dim));
  params_.add("out.W", fan_in_normal_tensor(config.hidden_dim, config.vocab_size, config.hidden_dim, rng));
  params_.add("out.b", Tensor::Zero(1, config.vocab_size));
}

Generator Generator::zeros(const GeneratorConfig& config) {
  Generator g(config, 0);
  for (auto& p : g.params_) p.value.setZero();
  return g;
}

LstmState Generator::initial_state(Eigen::Index batch) const { return LstmState::zeros(batch, config_.hidden_dim); }

Tensor Generator::step_inputs(std::span<const int> inputs, std::span<const int> labels) const {
  if (inputs.size() != labels.size()) throw DimensionError("generator: inputs and labels differ in batch size");
  const Tensor& emb = params_["embedding"].value;
  const Tensor& cond = params_["condition"].value;
  Tensor x(static_cast<Eigen::Index>(inputs.size()), config_.embed_dim + config_.cond_dim);
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    const int tok = inputs[r];
    const int y = labels[r];
    if (tok < 0 || tok >= config_.vocab_size) throw IndexError("generator: token id " + std::to_string(tok) + " out of range");
    if (y < 0 || y >= config_.num_labels) throw IndexError("generator: label " + std::to_string(y) + " out of range");
    const auto row = static_cast<Eigen::Index>(r);
    x.row(row).head(config_.embed_dim) = emb.row(tok);
    x.row(row).tail(config_.cond_dim) = cond.row(y);
  }
  return x;
}

Tensor Generator::step(LstmState& state, std::span<const int> inputs, std::span<const int> labels) const {
  lstm_forward(params_["lstm.W"].value, params_["lstm.b"].value, step_inputs(inputs, labels), state);
  Tensor logits = state.h * params_["out.W"].value;
  logits.rowwise() += params_["out.b"].value.row(0);
  return logits;
}

void Generator::check_batch(const TokenMatrix& tokens, std::span<const int> labels) const {
  if (tokens.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw DimensionError("generator: " + std::to_string(tokens.rows()) + " sequences but " +
                         std::to_string(labels.size()) + " labels");
  }
  for (Eigen::Index i = 0; i < tokens.size(); ++i) {
    const int tok = tokens.data()[i];
    if (tok < 0 || tok >= config_.vocab_size) throw IndexError("generator: token id " + std::to_string(tok) + " out of range");
  }
}

namespace {

std::vector<int> column_inputs(const TokenMatrix& tokens, Eigen::Index t) {
  std::vector<int> out(static_cast<std::size_t>(tokens.rows()));
  for (Eigen::Index b = 0; b < tokens.rows(); ++b) out[static_cast<std::size_t>(b)] = t == 0 ? kBosId : tokens(b, t - 1);
  return out;
}

}  // namespace

Tensor Generator::step_log_probs(const TokenMatrix& tokens, std::span<const int> labels) const {
  check_batch(tokens, labels);
  Tensor out(tokens.rows(), tokens.cols());
  LstmState state = initial_state(tokens.rows());
  for (Eigen::Index t = 0; t < tokens.cols(); ++t) {
    const auto inputs = column_inputs(tokens, t);
    const Tensor logp = log_softmax_rows(step(state, inputs, labels));
    for (Eigen::Index b = 0; b < tokens.rows(); ++b) out(b, t) = logp(b, tokens(b, t));
  }
  return out;
}

double Generator::sequence_log_prob(const LabeledSequence& seq, PadMasking masking) const {
  const auto steps = per_step_log_probs(seq);
  double total = 0.0;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    if (masking == PadMasking::kExcludePad && seq.tokens[t] == kPadId) continue;
    total += steps[t];
  }
  return total;
}

std::vector<double> Generator::per_step_log_probs(const LabeledSequence& seq) const {
  const std::array<LabeledSequence, 1> one = {seq};
  const Tensor lp = step_log_probs(to_token_matrix(one), std::array<int, 1>{seq.label});
  return std::vector<double>(lp.data(), lp.data() + lp.size());
}

std::vector<LstmState> Generator::prefix_states(const TokenMatrix& tokens, std::span<const int> labels) const {
  check_batch(tokens, labels);
  std::vector<LstmState> states;
  states.reserve(static_cast<std::size_t>(tokens.cols()));
  LstmState state = initial_state(tokens.rows());
  states.push_back(state);
  for (Eigen::Index t = 0; t + 1 < tokens.cols(); ++t) {
    const auto inputs = column_inputs(tokens, t);
    lstm_forward(params_["lstm.W"].value, params_["lstm.b"].value, step_inputs(inputs, labels), state);
    states.push_back(state);
  }
  return states;
}

double Generator::weighted_nll(const TokenMatrix& tokens, std::span<const int> labels, const Tensor& weights,
                               bool accumulate_grad, RngStream* dropout_rng) {
  check_batch(tokens, labels);
  if (weights.rows() != tokens.rows() || weights.cols() != tokens.cols()) {
    throw DimensionError("weighted_nll: weights " + shape_string(weights.rows(), weights.cols()) +
                         " do not match batch " + shape_string(tokens.rows(), tokens.cols()));
  }
  const Eigen::Index batch = tokens.rows();
  const Eigen::Index steps = tokens.cols();
  const Tensor& W = params_["lstm.W"].value;
  const Tensor& b = params_["lstm.b"].value;
  const Tensor& out_w = params_["out.W"].value;
  const Tensor& out_b = params_["out.b"].value;

  std::vector<LstmCache> caches(accumulate_grad ? static_cast<std::size_t>(steps) : 0);
  std::vector<Tensor> hiddens(caches.size());
  std::vector<Tensor> probs(caches.size());
  const double drop = dropout_rng ? config_.output_dropout : 0.0;
  std::vector<Tensor> masks(drop > 0.0 ? static_cast<std::size_t>(steps) : 0);
  std::vector<std::vector<int>> inputs(static_cast<std::size_t>(steps));

  LstmState state = initial_state(batch);
  double loss = 0.0;
  for (Eigen::Index t = 0; t < steps; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    inputs[ti] = column_inputs(tokens, t);
    lstm_forward(W, b, step_inputs(inputs[ti], labels), state, accumulate_grad ? &caches[ti] : nullptr);
    Tensor h = state.h;
    if (drop > 0.0) {
      masks[ti] = Tensor(batch, config_.hidden_dim);
      for (Eigen::Index i = 0; i < masks[ti].size(); ++i) {
        masks[ti].data()[i] = dropout_rng->uniform() < drop ? 0.0 : 1.0 / (1.0 - drop);
      }
      h = h.cwiseProduct(masks[ti]);
    }
    Tensor logits = h * out_w;
    logits.rowwise() += out_b.row(0);
    const Tensor logp = log_softmax_rows(logits);
    for (Eigen::Index r = 0; r < batch; ++r) loss -= weights(r, t) * logp(r, tokens(r, t));
    if (accumulate_grad) {
      hiddens[ti] = std::move(h);
      probs[ti] = logp.array().exp().matrix();
    }
  }
  if (!std::isfinite(loss)) throw NumericError("generator: non-finite loss");
  if (!accumulate_grad) return loss;

  Tensor& g_emb = params_["embedding"].grad;
  Tensor& g_cond = params_["condition"].grad;
  Tensor& g_w = params_["lstm.W"].grad;
  Tensor& g_b = params_["lstm.b"].grad;
  Tensor& g_out_w = params_["out.W"].grad;
  Tensor& g_out_b = params_["out.b"].grad;

  Tensor dh_next = Tensor::Zero(batch, config_.hidden_dim);
  Tensor dc = Tensor::Zero(batch, config_.hidden_dim);
  Tensor dx;
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const auto ti = static_cast<std::size_t>(t);
    Tensor dlogits = std::move(probs[ti]);
    for (Eigen::Index r = 0; r < batch; ++r) {
      dlogits(r, tokens(r, t)) -= 1.0;
      dlogits.row(r) *= weights(r, t);
    }
    g_out_w.noalias() += hiddens[ti].transpose() * dlogits;
    g_out_b.row(0) += dlogits.colwise().sum();
    Tensor dh = dlogits * out_w.transpose();
    if (drop > 0.0) dh = dh.cwiseProduct(masks[ti]);
    dh += dh_next;
    lstm_backward(W, caches[ti], dh, dc, &dx, g_w, g_b);
    dh_next = std::move(dh);
    for (Eigen::Index r = 0; r < batch; ++r) {
      g_emb.row(inputs[ti][static_cast<std::size_t>(r)]) += dx.row(r).head(config_.embed_dim);
      g_cond.row(labels[static_cast<std::size_t>(r)]) += dx.row(r).tail(config_.cond_dim);
    }
  }
  return loss;
}

double Generator::mle_loss(std::span<const LabeledSequence> batch, bool accumulate_grad, RngStream* dropout_rng) {
  if (batch.empty()) throw ValidationError("mle: empty batch");
  const TokenMatrix tokens = to_token_matrix(batch);
  return weighted_nll(tokens, labels_of(batch), mle_weights(tokens), accumulate_grad, dropout_rng);
}

double Generator::mle_step(std::span<const LabeledSequence> batch, AdamState& optimizer, RngStream* dropout_rng) {
  params_.zero_grad();
  const double loss = mle_loss(batch, true, dropout_rng);
  if (!std::isfinite(params_.grad_norm())) throw NumericError("mle_step: non-finite gradient");
  params_.clip_grad_norm(config_.grad_clip);
  adam_step(params_, optimizer);
  return loss;
}

double Generator::policy_gradient_loss(std::span<const LabeledSequence> batch, const Tensor& rewards,
                                       bool accumulate_grad) {
  if (batch.empty()) throw ValidationError("policy gradient: empty batch");
  const TokenMatrix tokens = to_token_matrix(batch);
  if (rewards.rows() != tokens.rows() || rewards.cols() != tokens.cols()) {
    throw DimensionError("policy gradient: rewards " + shape_string(rewards.rows(), rewards.cols()) +
                         " do not match batch " + shape_string(tokens.rows(), tokens.cols()));
  }
  if (!rewards.allFinite()) throw NumericError("policy gradient: non-finite rewards");
  Tensor weights = rewards.cwiseProduct(mle_weights(tokens));
  return weighted_nll(tokens, labels_of(batch), weights, accumulate_grad);
}

double Generator::policy_gradient_step(std::span<const LabeledSequence> batch, const Tensor& rewards,
                                       AdamState& optimizer) {
  params_.zero_grad();
  const double objective = -policy_gradient_loss(batch, rewards, true);
  if (rewards.isZero(0.0)) {
    params_.zero_grad();
    return objective;
  }
  if (!std::isfinite(params_.grad_norm())) throw NumericError("policy_gradient_step: non-finite gradient");
  params_.clip_grad_norm(config_.grad_clip);
  adam_step(params_, optimizer);
  return objective;
}

void Generator::continue_sampling(TokenMatrix& tokens, std::span<const int> labels, int prefix_len,
                                  LstmState state, std::span<RngStream> rngs) const {
  const Eigen::Index rows = tokens.rows();
  if (static_cast<Eigen::Index>(labels.size()) != rows || static_cast<Eigen::Index>(rngs.size()) != rows ||
      state.h.rows() != rows) {
    throw DimensionError("continue_sampling: tokens, labels, rngs and state must agree in batch size");
  }
  std::vector<int> inputs(static_cast<std::size_t>(rows));
  for (Eigen::Index t = prefix_len; t < tokens.cols(); ++t) {
    for (Eigen::Index r = 0; r < rows; ++r) inputs[static_cast<std::size_t>(r)] = t == 0 ? kBosId : tokens(r, t - 1);
    const Tensor p = softmax_rows(step(state, inputs, labels));
    for (Eigen::Index r = 0; r < rows; ++r) {
      tokens(r, t) = rngs[static_cast<std::size_t>(r)].categorical(
          std::span<const double>(p.row(r).data(), static_cast<std::size_t>(p.cols())));
    }
  }
}

LabeledSequence Generator::sample(int label, RngStream& rng) const {
  TokenMatrix tokens(1, config_.seq_len);
  const std::array<int, 1> labels = {label};
  continue_sampling(tokens, labels, 0, initial_state(1), std::span<RngStream>(&rng, 1));
  return LabeledSequence{label, std::vector<int>(tokens.data(), tokens.data() + tokens.size())};
}

Corpus Generator::sample_batch(std::span<const int> labels, std::uint64_t seed, std::uint64_t stream_base) const {
  const auto n = static_cast<Eigen::Index>(labels.size());
  Corpus out;
  if (n == 0) return out;
  std::vector<RngStream> rngs;
  rngs.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) rngs.emplace_back(seed, stream_id({tag(Purpose::kSample), stream_base, i}));
  TokenMatrix tokens(n, config_.seq_len);
  continue_sampling(tokens, labels, 0, initial_state(n), rngs);
  out.reserve(labels.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    out.push_back(LabeledSequence{labels[static_cast<std::size_t>(r)],
                                  std::vector<int>(tokens.row(r).data(), tokens.row(r).data() + tokens.cols())});
  }
  return out;
}

}  // namespace mtgan
