#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtgan/corpus.hpp"
#include "mtgan/discriminator.hpp"
#include "mtgan/errors.hpp"
#include "mtgan/generator.hpp"

namespace mtgan {

// A metric could not be computed because its inputs are too small.
class InsufficientDataError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Mean per-sequence negative log-likelihood of held-out data, in nats.
double nll_test(const Generator& generator, std::span<const LabeledSequence> test);

// Settings for the freshly trained evaluators and downstream classifiers.
struct EvaluatorConfig {
  DiscriminatorConfig model;  // kind CNN unless overridden
  Tensor embedding;           // frozen word vectors shared with the training run
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 1e-3;
  int seeds = 3;             // independent evaluators; the median is reported
  double threshold = 0.5;    // output above this means "real"
  double test_fraction = 0.3;
  int min_items = 10;        // per class, below this the suite is skipped
};

struct AdversarialEvalResult {
  double adver_suc = 0.0;
  std::vector<double> per_seed;
};

// Trains a fresh evaluator on part of real-vs-synthetic and reports the
// fraction of held-out synthetic items it scores as real.
AdversarialEvalResult adversarial_eval(std::span<const LabeledSequence> real, std::span<const LabeledSequence> synthetic,
                                       const EvaluatorConfig& config, std::uint64_t seed);

struct EreResult {
  double ere1 = 0.0;
  double ere2 = 0.0;
  double ere3 = 0.0;
  double mean() const { return (ere1 + ere2 + ere3) / 3.0; }
};

// Evaluator reliability probes: real vs. real split (ideal accuracy 0.5),
// synthetic vs. synthetic split (0.5) and real vs. uniformly random token
// sequences (1.0).
EreResult ere_suite(std::span<const LabeledSequence> real, std::span<const LabeledSequence> synthetic,
                    const EvaluatorConfig& config, std::uint64_t seed);

// Held-out accuracy of a fresh evaluator separating `positives` from
// `negatives`; the median over config.seeds evaluators.
double discrimination_accuracy(std::span<const LabeledSequence> positives, std::span<const LabeledSequence> negatives,
                               const EvaluatorConfig& config, std::uint64_t seed);

// Sequences of length `seq_len` whose tokens are uniform over the non-reserved
// ids; labels copied from `labels`.
Corpus random_token_sequences(std::span<const int> labels, int seq_len, int vocab_size, std::uint64_t seed);

struct DownstreamResult {
  double real = 0.0;
  double synthetic = 0.0;
  double mix = 0.0;
  std::vector<std::string> warnings;
};

// One fresh unconditional classifier (label as target) per training source,
// scored on `test`. Binary labels only.
DownstreamResult downstream_classification(std::span<const LabeledSequence> real_train,
                                           std::span<const LabeledSequence> synthetic_train,
                                           std::span<const LabeledSequence> test, const EvaluatorConfig& config,
                                           std::uint64_t seed);

// Test accuracy of a fresh classifier trained on (train, label) pairs.
double classification_accuracy(std::span<const LabeledSequence> train, std::span<const LabeledSequence> test,
                               const EvaluatorConfig& config, std::uint64_t seed);

double median(std::vector<double> values);

enum class Suite { kMicro, kMacro, kApplication };
std::vector<Suite> parse_suites(std::string_view name);  // micro, macro, application or all
std::string to_string(Suite suite);

struct MetricsReport {
  std::string run_id;
  std::uint64_t seed = 0;
  std::vector<Suite> suites;
  std::map<std::string, std::string> skipped;  // suite name -> reason

  std::optional<double> nll_test;
  std::optional<double> self_bleu;
  std::optional<double> adver_suc;
  std::optional<EreResult> ere;
  std::optional<DownstreamResult> classification;

  // Header and value columns for the requested suites only.
  std::vector<std::string> csv_header() const;
  std::vector<std::string> csv_values() const;
};

void write_report_csv(std::ostream& os, const MetricsReport& report);
void write_report_text(std::ostream& os, const MetricsReport& report);

// Locale-independent shortest round-trip decimal.
std::string format_number(double value);

}  // namespace mtgan
