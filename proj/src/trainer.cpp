#include "mtgan/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace mtgan {
namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  RngStream rng(seed, stream_id(key));
  rng.shuffle(idx);
  return idx;
}

Corpus gather(std::span<const LabeledSequence> data, std::span<const std::size_t> idx) {
  Corpus out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(data[i]);
  return out;
}

[[noreturn]] void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const NumericError& e) {
    throw NumericError(context + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(context + ": " + e.what());
  } catch (const Error& e) {
    throw Error(context + ": " + e.what());
  }
}

}  // namespace

double mean_sequence_nll(const Generator& generator, std::span<const LabeledSequence> seqs) {
  if (seqs.empty()) throw ValidationError("nll: empty sequence set");
  constexpr std::size_t kChunk = 512;
  double total = 0.0;
  for (std::size_t begin = 0; begin < seqs.size(); begin += kChunk) {
    const auto chunk = seqs.subspan(begin, std::min(kChunk, seqs.size() - begin));
    const TokenMatrix tokens = to_token_matrix(chunk);
    const Tensor lp = generator.step_log_probs(tokens, labels_of(chunk));
    for (Eigen::Index b = 0; b < tokens.rows(); ++b) {
      for (Eigen::Index t = 0; t < tokens.cols(); ++t) {
        if (tokens(b, t) != kPadId) total -= lp(b, t);
      }
    }
  }
  return total / static_cast<double>(seqs.size());
}

std::vector<EpochRecord> pretrain_generator(
    Generator& generator, AdamState& optimizer, GeneratorPretrainState& state, std::span<const LabeledSequence> train,
    std::span<const LabeledSequence> valid, const GeneratorPretrainOptions& options, std::uint64_t seed,
    const std::function<void(const GeneratorPretrainState&, const EpochRecord&)>& on_epoch) {
  if (train.empty()) throw ValidationError("pretrain_generator: empty training set");
  if (options.batch_size < 1) throw ValidationError("pretrain_generator: batch size must be positive");
  if (state.best.size() == 0) {
    state.best = generator.params();
    state.best_epoch = state.epoch;
    state.best_valid_nll = valid.empty() ? INFINITY : mean_sequence_nll(generator, valid);
    state.since_best = 0;
  }
  std::vector<EpochRecord> history;
  while (!state.stopped && state.epoch < options.max_epochs) {
    const int epoch = state.epoch + 1;
    const auto order = shuffled_indices(train.size(), seed, {tag(Purpose::kShuffle), 1, static_cast<std::uint64_t>(epoch)});
    RngStream dropout(seed, stream_id({tag(Purpose::kDropout), 1, static_cast<std::uint64_t>(epoch)}));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(options.batch_size)) {
      const auto end = std::min(order.size(), begin + static_cast<std::size_t>(options.batch_size));
      const Corpus batch = gather(train, std::span(order).subspan(begin, end - begin));
      try {
        loss_sum += generator.mle_step(batch, optimizer, &dropout);
      } catch (const Error&) {
        rethrow_with_context("generator pretraining epoch " + std::to_string(epoch));
      }
      ++batches;
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(batches), valid.empty() ? NAN : mean_sequence_nll(generator, valid)};
    state.epoch = epoch;
    if (!valid.empty()) {
      if (!std::isfinite(rec.valid_nll)) throw NumericError("generator pretraining: non-finite validation NLL");
      if (rec.valid_nll < state.best_valid_nll) {
        state.best_valid_nll = rec.valid_nll;
        state.best_epoch = epoch;
        state.best = generator.params();
        state.since_best = 0;
      } else if (options.patience > 0 && ++state.since_best >= options.patience) {
        state.stopped = true;
      }
    }
    history.push_back(rec);
    if (on_epoch) on_epoch(state, rec);
  }
  if (!valid.empty()) generator.params() = state.best;
  return history;
}

std::vector<double> fit_classifier(Discriminator& model, AdamState& optimizer, std::span<const LabeledSequence> inputs,
                                   std::span<const double> targets, int epochs, int batch_size, std::uint64_t seed,
                                   std::uint64_t stream_base) {
  if (inputs.empty()) throw ValidationError("fit_classifier: no training data");
  if (inputs.size() != targets.size()) throw DimensionError("fit_classifier: inputs and targets differ in size");
  std::vector<double> losses;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto order = shuffled_indices(inputs.size(), seed,
                                        {tag(Purpose::kShuffle), 2, stream_base, static_cast<std::uint64_t>(epoch)});
    RngStream dropout(seed, stream_id({tag(Purpose::kDropout), stream_base, static_cast<std::uint64_t>(epoch)}));
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
      const auto end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
      const auto idx = std::span(order).subspan(begin, end - begin);
      const Corpus batch = gather(inputs, idx);
      Vector t(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t i = 0; i < idx.size(); ++i) t(static_cast<Eigen::Index>(i)) = targets[idx[i]];
      sum += model.train_step(to_token_matrix(batch), labels_of(batch), t, optimizer, &dropout);
      ++batches;
    }
    losses.push_back(sum / static_cast<double>(batches));
  }
  return losses;
}

std::vector<double> train_discriminator_against(Discriminator& discriminator, AdamState& optimizer,
                                                const Generator& generator, std::span<const LabeledSequence> real,
                                                const DiscriminatorTrainOptions& options, std::uint64_t seed,
                                                std::uint64_t stream_base) {
  if (real.empty()) throw ValidationError("discriminator training: no real data");
  const std::size_t n =
      options.samples > 0 ? std::min(real.size(), static_cast<std::size_t>(options.samples)) : real.size();
  auto idx = shuffled_indices(real.size(), seed, {tag(Purpose::kShuffle), 3, stream_base});
  idx.resize(n);
  Corpus positives = gather(real, idx);
  const auto labels = labels_of(positives);
  Corpus negatives = generator.sample_batch(labels, seed, stream_id({tag(Purpose::kSample), 3, stream_base}));

  Corpus inputs = positives;
  inputs.insert(inputs.end(), negatives.begin(), negatives.end());
  std::vector<double> targets(inputs.size(), 0.0);
  std::fill(targets.begin(), targets.begin() + static_cast<std::ptrdiff_t>(positives.size()), 1.0);
  return fit_classifier(discriminator, optimizer, inputs, targets, options.epochs, options.batch_size, seed, stream_base);
}

void TrainSchedule::validate() const {
  if (iterations < 0) throw ValidationError("schedule: iterations must be >= 0");
  if (g_steps < 1 || d_steps < 1 || d_epochs < 1 || rollouts < 1) {
    throw ValidationError("schedule: g_steps, d_steps, d_epochs and rollouts must be >= 1");
  }
  if (soft_update_rate < 0.0 || soft_update_rate > 1.0) throw ValidationError("schedule: soft-update rate must be in [0, 1]");
  if (batch_size < 2 || d_samples < 1 || d_batch_size < 1) throw ValidationError("schedule: bad batch sizes");
  if (rescale.kind == RescaleKind::kBra && !(rescale.delta > 0.0)) throw ValidationError("schedule: BRA delta must be > 0");
}

double teacher_forcing_step(Generator& generator, std::span<const LabeledSequence> real, AdamState& optimizer,
                            RngStream* dropout_rng) {
  return generator.mle_step(real, optimizer, dropout_rng);
}

GeneratorStepResult adversarial_generator_step(AdversarialState& state, const TrainSchedule& schedule,
                                               std::span<const LabeledSequence> train, std::uint64_t seed,
                                               std::int64_t iteration, int g_step) {
  const auto it = static_cast<std::uint64_t>(iteration);
  const auto gs = static_cast<std::uint64_t>(g_step);
  const int num_labels = state.generator.config().num_labels;

  RngStream label_rng(seed, stream_id({tag(Purpose::kLabels), it, gs}));
  std::vector<int> labels(static_cast<std::size_t>(schedule.batch_size));
  for (auto& y : labels) y = static_cast<int>(label_rng.uniform_int(static_cast<std::uint64_t>(num_labels)));
  const Corpus batch = state.generator.sample_batch(labels, seed, stream_id({tag(Purpose::kSample), 1, it, gs}));

  RolloutOptions rollout_options;
  rollout_options.rollouts = schedule.rollouts;
  rollout_options.seed = seed;
  rollout_options.stream_base = stream_id({it, gs});
  RewardTable rewards = compute_rewards(batch, *state.discriminator, state.rollout, rollout_options);

  GeneratorStepResult result;
  result.mean_raw_reward = rewards.values.mean();
  apply_rescale(rewards, schedule.rescale);
  subtract_baseline(rewards, schedule.baseline);
  result.objective = state.generator.policy_gradient_step(batch, rewards.values, state.g_adv);

  if (schedule.teacher_forcing) {
    auto idx = shuffled_indices(train.size(), seed, {tag(Purpose::kShuffle), 4, it, gs});
    idx.resize(std::min(idx.size(), static_cast<std::size_t>(schedule.batch_size)));
    RngStream dropout(seed, stream_id({tag(Purpose::kDropout), 2, it, gs}));
    teacher_forcing_step(state.generator, gather(train, idx), state.g_mle, &dropout);
    ++state.teacher_forcing_steps;
  }
  return result;
}

std::vector<IterationMetrics> adversarial_train(
    AdversarialState& state, const TrainSchedule& schedule, std::span<const LabeledSequence> train,
    std::span<const LabeledSequence> test, std::uint64_t seed,
    const std::function<void(const AdversarialState&, const IterationMetrics&)>& on_iteration) {
  schedule.validate();
  if (!state.discriminator) throw ValidationError("adversarial_train: no discriminator");
  if (train.empty() || test.empty()) throw ValidationError("adversarial_train: empty train or test set");

  std::vector<IterationMetrics> log;
  const auto start = std::chrono::steady_clock::now();
  while (state.iteration < schedule.iterations) {
    const std::int64_t iteration = state.iteration + 1;
    const auto it = static_cast<std::uint64_t>(iteration);
    IterationMetrics m;
    m.iteration = iteration;
    try {
      for (int g = 0; g < schedule.g_steps; ++g) {
        const auto r = adversarial_generator_step(state, schedule, train, seed, iteration, g);
        m.mean_reward += r.mean_raw_reward / schedule.g_steps;
        m.g_objective += r.objective / schedule.g_steps;
      }
      DiscriminatorTrainOptions d_options{schedule.d_epochs, schedule.d_samples, schedule.d_batch_size};
      for (int d = 0; d < schedule.d_steps; ++d) {
        const auto losses = train_discriminator_against(*state.discriminator, state.d_opt, state.generator, train,
                                                        d_options, seed, stream_id({5, it, static_cast<std::uint64_t>(d)}));
        m.d_loss = losses.back();
      }
      soft_update(state.generator.params(), state.rollout.params(), schedule.soft_update_rate);
      m.nll_test = mean_sequence_nll(state.generator, test);
    } catch (const Error&) {
      rethrow_with_context("adversarial iteration " + std::to_string(iteration));
    }
    if (!std::isfinite(m.nll_test)) {
      throw NumericError("adversarial iteration " + std::to_string(iteration) + ": non-finite NLL-test");
    }
    if (schedule.record_wall_time) {
      m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    state.iteration = iteration;
    log.push_back(m);
    if (on_iteration) on_iteration(state, m);
  }
  return log;
}

}  // namespace mtgan
