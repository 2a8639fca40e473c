#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mtgan/corpus.hpp"
#include "mtgan/discriminator.hpp"
#include "mtgan/generator.hpp"
#include "mtgan/rewards.hpp"

namespace mtgan {

// Mean over sequences of -sum_t log G(x_t | x_{<t}, y), PAD targets excluded.
double mean_sequence_nll(const Generator& generator, std::span<const LabeledSequence> seqs);

struct GeneratorPretrainOptions {
  int max_epochs = 1000;
  int patience = 20;  // 0 disables early stopping
  int batch_size = 64;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_nll = 0.0;
};

// Early-stopping bookkeeping; persisted by checkpoints so a resumed run
// continues the same epoch counter and patience window.
struct GeneratorPretrainState {
  int epoch = 0;
  int best_epoch = 0;
  double best_valid_nll = 0.0;
  int since_best = 0;
  bool stopped = false;
  ParamStore best;  // empty until the first call
};

// MLE pretraining with early stopping on validation NLL. Runs epochs
// state.epoch + 1 .. options.max_epochs unless patience runs out; on return
// the generator holds the best parameters seen. Epoch e shuffles with stream
// (seed, kShuffle, 1, e). on_epoch sees the current (not best) parameters.
std::vector<EpochRecord> pretrain_generator(
    Generator& generator, AdamState& optimizer, GeneratorPretrainState& state, std::span<const LabeledSequence> train,
    std::span<const LabeledSequence> valid, const GeneratorPretrainOptions& options, std::uint64_t seed,
    const std::function<void(const GeneratorPretrainState&, const EpochRecord&)>& on_epoch = {});

struct DiscriminatorTrainOptions {
  int epochs = 10;
  int samples = 0;  // real items per round; 0 = all of `real`
  int batch_size = 64;
};

// Trains on `real` (target 1) versus fresh generator samples carrying the same
// labels (target 0). Returns the mean loss of each epoch.
std::vector<double> train_discriminator_against(Discriminator& discriminator, AdamState& optimizer,
                                                const Generator& generator, std::span<const LabeledSequence> real,
                                                const DiscriminatorTrainOptions& options, std::uint64_t seed,
                                                std::uint64_t stream_base);

// Generic minibatch training of a classifier on explicit targets. Returns the
// mean loss of each epoch.
std::vector<double> fit_classifier(Discriminator& model, AdamState& optimizer, std::span<const LabeledSequence> inputs,
                                   std::span<const double> targets, int epochs, int batch_size, std::uint64_t seed,
                                   std::uint64_t stream_base);

struct TrainSchedule {
  int iterations = 30;
  int g_steps = 5;
  int d_steps = 5;
  int d_epochs = 3;
  int rollouts = 16;
  double soft_update_rate = 0.8;
  RescaleMode rescale{RescaleKind::kOda, 12.0};
  BaselineMode baseline = BaselineMode::kBatchMean;
  bool teacher_forcing = true;
  int batch_size = 64;
  int d_samples = 256;
  int d_batch_size = 64;
  bool record_wall_time = true;

  void validate() const;
};

// Everything the adversarial loop mutates; persisted whole by checkpoints.
struct AdversarialState {
  Generator generator;
  Generator rollout;
  std::unique_ptr<Discriminator> discriminator;
  AdamState g_mle = AdamState::with_learning_rate(1e-4);  // teacher forcing
  AdamState g_adv = AdamState::with_learning_rate(1e-4);
  AdamState d_opt = AdamState::with_learning_rate(1e-3);
  std::int64_t iteration = 0;
  std::int64_t teacher_forcing_steps = 0;
};

struct IterationMetrics {
  std::int64_t iteration = 0;
  double nll_test = 0.0;
  double mean_reward = 0.0;
  double d_loss = 0.0;
  double g_objective = 0.0;
  double wall_seconds = 0.0;
};

// Runs iterations state.iteration + 1 .. schedule.iterations. Each iteration:
// g_steps x (sample with random labels, rollout rewards, rescale, baseline,
// policy-gradient step, optional teacher-forcing step), then d_steps x (fresh
// negatives, d_epochs epochs), then the rollout soft update. All randomness is
// keyed by (seed, iteration, step), so a resumed run matches an uninterrupted
// one.
std::vector<IterationMetrics> adversarial_train(
    AdversarialState& state, const TrainSchedule& schedule, std::span<const LabeledSequence> train,
    std::span<const LabeledSequence> test, std::uint64_t seed,
    const std::function<void(const AdversarialState&, const IterationMetrics&)>& on_iteration = {});

// One MLE step on real text; the adversarial loop's stabilizer.
double teacher_forcing_step(Generator& generator, std::span<const LabeledSequence> real, AdamState& optimizer,
                            RngStream* dropout_rng = nullptr);

// One generator update block from the loop above (exposed for tests).
struct GeneratorStepResult {
  double mean_raw_reward = 0.0;
  double objective = 0.0;
};
GeneratorStepResult adversarial_generator_step(AdversarialState& state, const TrainSchedule& schedule,
                                               std::span<const LabeledSequence> train, std::uint64_t seed,
                                               std::int64_t iteration, int g_step);

}  // namespace mtgan
