#include "mtgan/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtgan/parallel.hpp"

namespace mtgan {

std::string to_string(const RescaleMode& mode) {
  switch (mode.kind) {
    case RescaleKind::kNone:
      return "none";
    case RescaleKind::kOda:
      return "oda";
    case RescaleKind::kBra:
      return "bra:" + std::to_string(mode.delta);
  }
  return "none";
}

RescaleMode parse_rescale_mode(std::string_view text) {
  if (text == "none") return {RescaleKind::kNone, 0.0};
  if (text == "oda") return {RescaleKind::kOda, 0.0};
  if (text == "bra") return {RescaleKind::kBra, 12.0};
  if (text.starts_with("bra:")) {
    double delta = 0.0;
    try {
      delta = std::stod(std::string(text.substr(4)));
    } catch (const std::exception&) {
      throw ValidationError("bad BRA delta in '" + std::string(text) + "'");
    }
    if (!(delta > 0.0)) throw ValidationError("BRA delta must be positive");
    return {RescaleKind::kBra, delta};
  }
  throw ValidationError("unknown rescale mode '" + std::string(text) + "' (expected none, oda or bra[:delta])");
}

double rescale_oda(double reward) {
  const double r = std::clamp(reward, 0.0, 1.0 - 1e-6);
  // Same as r / (1 - r); this form maps decimal inputs such as 0.8 to exact
  // outputs (4.0) because 1/r rounds back onto the decimal grid.
  return 1.0 / (1.0 / r - 1.0);
}

std::vector<double> rescale_bra(std::span<const double> rewards, double delta) {
  const std::size_t b = rewards.size();
  if (b < 2) throw ValidationError("BRA needs a batch of at least 2");
  std::vector<std::size_t> order(b);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return rewards[i] > rewards[j]; });
  std::vector<double> out(b);
  for (std::size_t rank = 0; rank < b; ++rank) {
    const double x = delta * (0.5 - static_cast<double>(rank + 1) / static_cast<double>(b));
    out[order[rank]] = sigmoid(x);
  }
  return out;
}

void apply_rescale(RewardTable& table, const RescaleMode& mode) {
  table.rescale = mode;
  table.rescaled = true;
  switch (mode.kind) {
    case RescaleKind::kNone:
      break;
    case RescaleKind::kOda:
      table.values = table.values.unaryExpr([](double r) { return rescale_oda(r); });
      break;
    case RescaleKind::kBra:
      for (Eigen::Index t = 0; t < table.values.cols(); ++t) {
        std::vector<double> column(static_cast<std::size_t>(table.values.rows()));
        for (Eigen::Index b = 0; b < table.values.rows(); ++b) column[static_cast<std::size_t>(b)] = table.values(b, t);
        const auto ranked = rescale_bra(column, mode.delta);
        for (Eigen::Index b = 0; b < table.values.rows(); ++b) table.values(b, t) = ranked[static_cast<std::size_t>(b)];
      }
      break;
  }
  if (!table.values.allFinite()) throw NumericError("reward rescaling produced non-finite values");
}

void subtract_baseline(RewardTable& table, BaselineMode mode) {
  table.baseline_mode = mode;
  if (mode == BaselineMode::kOff || table.values.rows() == 0) {
    table.baseline.resize(0);
    return;
  }
  table.baseline = table.values.colwise().mean();
  table.values.rowwise() -= table.baseline;
}

namespace {

// Completions for every (row, k) of a prefix length; row-major in (row, k).
TokenMatrix rollout_rows(const TokenMatrix& tokens, std::span<const int> labels, const LstmState& prefix_state,
                         int prefix_len, int rollouts, const Generator& rollout, std::uint64_t seed,
                         std::uint64_t stream_base, std::uint64_t first_item) {
  const Eigen::Index n = tokens.rows();
  const Eigen::Index rows = n * rollouts;
  TokenMatrix out(rows, tokens.cols());
  LstmState state{Tensor(rows, prefix_state.h.cols()), Tensor(rows, prefix_state.c.cols())};
  std::vector<int> row_labels(static_cast<std::size_t>(rows));
  std::vector<RngStream> rngs;
  rngs.reserve(static_cast<std::size_t>(rows));
  for (Eigen::Index b = 0; b < n; ++b) {
    for (int k = 0; k < rollouts; ++k) {
      const Eigen::Index r = b * rollouts + k;
      out.row(r) = tokens.row(b);
      state.h.row(r) = prefix_state.h.row(b);
      state.c.row(r) = prefix_state.c.row(b);
      row_labels[static_cast<std::size_t>(r)] = labels[static_cast<std::size_t>(b)];
      rngs.emplace_back(seed, stream_id({tag(Purpose::kRollout), stream_base, first_item + static_cast<std::uint64_t>(b),
                                         static_cast<std::uint64_t>(prefix_len), static_cast<std::uint64_t>(k)}));
    }
  }
  rollout.continue_sampling(out, row_labels, prefix_len, std::move(state), rngs);
  return out;
}

// Exact E[D] over all completions of one prefix under the rollout network.
double enumerated_reward(const LabeledSequence& seq, int prefix_len, const Discriminator& d, const Generator& rollout) {
  const int len = static_cast<int>(seq.tokens.size());
  const int vocab = rollout.config().vocab_size;
  const int free = len - prefix_len;
  const double count_d = std::pow(static_cast<double>(vocab), free);
  if (count_d > 2e6) throw ValidationError("enumeration mode: too many completions");
  const auto count = static_cast<Eigen::Index>(count_d);
  TokenMatrix all(count, len);
  for (Eigen::Index i = 0; i < count; ++i) {
    Eigen::Index code = i;
    for (int t = 0; t < len; ++t) {
      if (t < prefix_len) {
        all(i, t) = seq.tokens[static_cast<std::size_t>(t)];
      } else {
        all(i, t) = static_cast<int>(code % vocab);
        code /= vocab;
      }
    }
  }
  const std::vector<int> labels(static_cast<std::size_t>(count), seq.label);
  const Tensor logp = rollout.step_log_probs(all, labels);
  const Vector scores = d.predict(all, labels);
  double expectation = 0.0;
  for (Eigen::Index i = 0; i < count; ++i) {
    expectation += std::exp(logp.row(i).tail(free).sum()) * scores(i);
  }
  return expectation;
}

}  // namespace

Corpus mc_rollout(const LabeledSequence& seq, int prefix_len, int rollouts, const Generator& rollout,
                  std::uint64_t seed, std::uint64_t stream_base, std::uint64_t item) {
  const int len = static_cast<int>(seq.tokens.size());
  if (prefix_len < 1 || prefix_len > len) throw ValidationError("mc_rollout: prefix length out of range");
  if (rollouts < 1) throw ValidationError("mc_rollout: need at least one rollout");
  const std::array<LabeledSequence, 1> one = {seq};
  const TokenMatrix tokens = to_token_matrix(one);
  const std::array<int, 1> labels = {seq.label};
  Corpus out;
  if (prefix_len == len) {
    out.assign(static_cast<std::size_t>(rollouts), seq);
    return out;
  }
  const auto states = rollout.prefix_states(tokens, labels);
  const TokenMatrix rows = rollout_rows(tokens, labels, states[static_cast<std::size_t>(prefix_len)], prefix_len,
                                        rollouts, rollout, seed, stream_base, item);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    out.push_back(LabeledSequence{seq.label, std::vector<int>(rows.row(r).data(), rows.row(r).data() + rows.cols())});
  }
  return out;
}

RewardTable compute_rewards(std::span<const LabeledSequence> batch, const Discriminator& discriminator,
                            const Generator& rollout, const RolloutOptions& options) {
  if (batch.empty()) throw ValidationError("compute_rewards: empty batch");
  if (options.rollouts < 1) throw ValidationError("compute_rewards: need at least one rollout");
  const TokenMatrix tokens = to_token_matrix(batch);
  const auto labels = labels_of(batch);
  const Eigen::Index n = tokens.rows();
  const Eigen::Index len = tokens.cols();

  RewardTable table;
  table.values = Tensor::Zero(n, len);
  table.values.col(len - 1) = discriminator.predict(tokens, labels);

  if (options.enumerate) {
    parallel_for(static_cast<std::size_t>(n * (len - 1)), [&](std::size_t job) {
      const auto b = static_cast<Eigen::Index>(job) / (len - 1);
      const auto t = static_cast<Eigen::Index>(job) % (len - 1);
      table.values(b, t) = enumerated_reward(batch[static_cast<std::size_t>(b)], static_cast<int>(t + 1), discriminator, rollout);
    });
    return table;
  }

  const auto states = rollout.prefix_states(tokens, labels);
  // One job per prefix length; the job partition does not depend on the
  // worker count, so results are identical for any --threads.
  parallel_for(static_cast<std::size_t>(len - 1), [&](std::size_t job) {
    const int prefix_len = static_cast<int>(job) + 1;
    const TokenMatrix rows = rollout_rows(tokens, labels, states[static_cast<std::size_t>(prefix_len)], prefix_len,
                                          options.rollouts, rollout, options.seed, options.stream_base, 0);
    std::vector<int> row_labels(static_cast<std::size_t>(rows.rows()));
    for (Eigen::Index r = 0; r < rows.rows(); ++r) row_labels[static_cast<std::size_t>(r)] = labels[static_cast<std::size_t>(r / options.rollouts)];
    const Vector scores = discriminator.predict(rows, row_labels);
    for (Eigen::Index b = 0; b < n; ++b) {
      table.values(b, prefix_len - 1) = scores.segment(b * options.rollouts, options.rollouts).mean();
    }
  });
  return table;
}

}  // namespace mtgan
