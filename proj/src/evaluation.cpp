#include "mtgan/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>

#include "mtgan/trainer.hpp"

namespace mtgan {
namespace {

// Salts separating the independent evaluator jobs of one seed.
enum Salt : std::uint64_t { kAdverSuc = 1, kEre1 = 2, kEre2 = 3, kEre3 = 4, kDownstream = 5, kHalves = 6 };

std::vector<std::size_t> permutation(std::size_t n, RngStream rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  return idx;
}

std::unique_ptr<Discriminator> fresh_model(const DiscriminatorConfig& model, const EvaluatorConfig& config,
                                           std::uint64_t seed) {
  if (config.embedding.rows() != model.vocab_size) {
    throw ValidationError("evaluator embedding has " + std::to_string(config.embedding.rows()) + " rows, vocabulary has " +
                          std::to_string(model.vocab_size));
  }
  return Discriminator::create(model, config.embedding, seed);
}

struct HeldOut {
  Corpus train;
  std::vector<double> targets;
  Corpus test_pos;
  Corpus test_neg;
};

HeldOut hold_out(std::span<const LabeledSequence> pos, std::span<const LabeledSequence> neg, double test_fraction,
                 std::uint64_t seed, std::uint64_t stream) {
  HeldOut h;
  auto split = [&](std::span<const LabeledSequence> items, double target, Corpus& test, std::uint64_t side) {
    const auto order = permutation(items.size(), RngStream(seed, stream_id({tag(Purpose::kEval), stream, side})));
    const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(test_fraction * items.size())));
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (k < n_test) {
        test.push_back(items[order[k]]);
      } else {
        h.train.push_back(items[order[k]]);
        h.targets.push_back(target);
      }
    }
  };
  split(pos, 1.0, h.test_pos, 1);
  split(neg, 0.0, h.test_neg, 2);
  return h;
}

std::unique_ptr<Discriminator> train_evaluator(const HeldOut& h, const EvaluatorConfig& config, std::uint64_t seed,
                                               std::uint64_t stream) {
  auto model = fresh_model(config.model, config, stream_id({seed, stream}));
  AdamState adam = AdamState::with_learning_rate(config.learning_rate);
  fit_classifier(*model, adam, h.train, h.targets, config.epochs, config.batch_size, seed, stream);
  return model;
}

double fraction_above(const Vector& scores, double threshold) {
  if (scores.size() == 0) return 0.0;
  return static_cast<double>((scores.array() > threshold).count()) / static_cast<double>(scores.size());
}

void require_items(std::span<const LabeledSequence> items, const EvaluatorConfig& config, const char* what) {
  if (static_cast<int>(items.size()) < std::max(config.min_items, 4)) {
    throw InsufficientDataError(std::string(what) + ": " + std::to_string(items.size()) + " items, need at least " +
                                std::to_string(std::max(config.min_items, 4)));
  }
}

double single_accuracy(std::span<const LabeledSequence> pos, std::span<const LabeledSequence> neg,
                       const EvaluatorConfig& config, std::uint64_t seed, std::uint64_t stream) {
  const HeldOut h = hold_out(pos, neg, config.test_fraction, seed, stream);
  const auto model = train_evaluator(h, config, seed, stream);
  const Vector p = model->predict(h.test_pos);
  const Vector n = model->predict(h.test_neg);
  const double correct = fraction_above(p, config.threshold) * static_cast<double>(p.size()) +
                         (1.0 - fraction_above(n, config.threshold)) * static_cast<double>(n.size());
  return correct / static_cast<double>(p.size() + n.size());
}

// Accuracy of telling two random halves of `items` apart.
double split_accuracy(std::span<const LabeledSequence> items, const EvaluatorConfig& config, std::uint64_t seed,
                      std::uint64_t stream) {
  const auto order = permutation(items.size(), RngStream(seed, stream_id({tag(Purpose::kEval), kHalves, stream})));
  Corpus a;
  Corpus b;
  for (std::size_t k = 0; k < order.size(); ++k) (k % 2 == 0 ? a : b).push_back(items[order[k]]);
  return single_accuracy(a, b, config, seed, stream);
}

std::uint64_t job_stream(Salt salt, int s) { return stream_id({tag(Purpose::kEval), salt, static_cast<std::uint64_t>(s)}); }

void check_seeds(const EvaluatorConfig& config) {
  if (config.seeds < 1) throw ValidationError("evaluator seeds must be >= 1");
  if (!(config.test_fraction > 0.0 && config.test_fraction < 1.0)) {
    throw ValidationError("evaluator test fraction must be in (0, 1)");
  }
}

std::string imbalance_warning(std::span<const LabeledSequence> items, const std::string& source) {
  std::map<int, std::size_t> counts;
  for (const auto& s : items) ++counts[s.label];
  std::size_t lo = items.size();
  std::size_t hi = 0;
  for (int y = 0; y < 2; ++y) {
    lo = std::min(lo, counts[y]);
    hi = std::max(hi, counts[y]);
  }
  if (lo == 0 || static_cast<double>(hi) / static_cast<double>(lo) > 9.0) {
    return source + " training labels imbalanced (" + std::to_string(counts[0]) + ":" + std::to_string(counts[1]) + ")";
  }
  return {};
}

}  // namespace

double nll_test(const Generator& generator, std::span<const LabeledSequence> test) {
  return mean_sequence_nll(generator, test);
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

Corpus random_token_sequences(std::span<const int> labels, int seq_len, int vocab_size, std::uint64_t seed) {
  if (vocab_size <= kPadId + 1) throw ValidationError("random sequences need a non-reserved token");
  Corpus out;
  out.reserve(labels.size());
  const auto span = static_cast<std::uint64_t>(vocab_size - kPadId - 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    RngStream rng(seed, stream_id({tag(Purpose::kEval), 99, i}));
    LabeledSequence s{labels[i], std::vector<int>(static_cast<std::size_t>(seq_len))};
    for (auto& t : s.tokens) t = kPadId + 1 + static_cast<int>(rng.uniform_int(span));
    out.push_back(std::move(s));
  }
  return out;
}

double discrimination_accuracy(std::span<const LabeledSequence> positives, std::span<const LabeledSequence> negatives,
                               const EvaluatorConfig& config, std::uint64_t seed) {
  check_seeds(config);
  require_items(positives, config, "positives");
  require_items(negatives, config, "negatives");
  std::vector<double> acc;
  for (int s = 0; s < config.seeds; ++s) acc.push_back(single_accuracy(positives, negatives, config, seed, job_stream(kEre3, s)));
  return median(acc);
}

AdversarialEvalResult adversarial_eval(std::span<const LabeledSequence> real, std::span<const LabeledSequence> synthetic,
                                       const EvaluatorConfig& config, std::uint64_t seed) {
  check_seeds(config);
  require_items(real, config, "adversarial evaluation real set");
  require_items(synthetic, config, "adversarial evaluation synthetic set");
  AdversarialEvalResult result;
  for (int s = 0; s < config.seeds; ++s) {
    const auto stream = job_stream(kAdverSuc, s);
    const HeldOut h = hold_out(real, synthetic, config.test_fraction, seed, stream);
    const auto evaluator = train_evaluator(h, config, seed, stream);
    result.per_seed.push_back(fraction_above(evaluator->predict(h.test_neg), config.threshold));
  }
  result.adver_suc = median(result.per_seed);
  return result;
}

EreResult ere_suite(std::span<const LabeledSequence> real, std::span<const LabeledSequence> synthetic,
                    const EvaluatorConfig& config, std::uint64_t seed) {
  check_seeds(config);
  require_items(real, config, "ERE real set");
  require_items(synthetic, config, "ERE synthetic set");
  if (real.size() < 2 * static_cast<std::size_t>(config.min_items) ||
      synthetic.size() < 2 * static_cast<std::size_t>(config.min_items)) {
    throw InsufficientDataError("ERE: sets too small to split in halves");
  }
  const Corpus noise = random_token_sequences(labels_of(real), static_cast<int>(real.front().tokens.size()),
                                              config.model.vocab_size, seed);
  std::vector<double> e1;
  std::vector<double> e2;
  std::vector<double> e3;
  for (int s = 0; s < config.seeds; ++s) {
    e1.push_back(std::abs(split_accuracy(real, config, seed, job_stream(kEre1, s)) - 0.5));
    e2.push_back(std::abs(split_accuracy(synthetic, config, seed, job_stream(kEre2, s)) - 0.5));
    e3.push_back(std::abs(single_accuracy(real, noise, config, seed, job_stream(kEre3, s)) - 1.0));
  }
  return {median(e1), median(e2), median(e3)};
}

double classification_accuracy(std::span<const LabeledSequence> train, std::span<const LabeledSequence> test,
                               const EvaluatorConfig& config, std::uint64_t seed) {
  check_seeds(config);
  require_items(train, config, "classifier training set");
  if (test.empty()) throw InsufficientDataError("classifier test set is empty");
  DiscriminatorConfig model = config.model;
  model.conditional = false;
  std::vector<double> targets;
  for (const auto& s : train) {
    if (s.label != 0 && s.label != 1) throw ValidationError("downstream classification needs binary labels");
    targets.push_back(static_cast<double>(s.label));
  }
  std::vector<double> acc;
  for (int s = 0; s < config.seeds; ++s) {
    const auto stream = job_stream(kDownstream, s);
    auto clf = fresh_model(model, config, stream_id({seed, stream}));
    AdamState adam = AdamState::with_learning_rate(config.learning_rate);
    fit_classifier(*clf, adam, train, targets, config.epochs, config.batch_size, seed, stream);
    const Vector p = clf->predict(test);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const int guess = p(static_cast<Eigen::Index>(i)) > 0.5 ? 1 : 0;
      if (guess == test[i].label) ++correct;
    }
    acc.push_back(static_cast<double>(correct) / static_cast<double>(test.size()));
  }
  return median(acc);
}

DownstreamResult downstream_classification(std::span<const LabeledSequence> real_train,
                                           std::span<const LabeledSequence> synthetic_train,
                                           std::span<const LabeledSequence> test, const EvaluatorConfig& config,
                                           std::uint64_t seed) {
  Corpus mix(real_train.begin(), real_train.end());
  mix.insert(mix.end(), synthetic_train.begin(), synthetic_train.end());
  DownstreamResult r;
  for (const auto& [items, name] : {std::pair{real_train, "real"}, std::pair{synthetic_train, "synthetic"},
                                    std::pair{std::span<const LabeledSequence>(mix), "mix"}}) {
    if (auto w = imbalance_warning(items, name); !w.empty()) r.warnings.push_back(w);
  }
  r.real = classification_accuracy(real_train, test, config, seed);
  r.synthetic = classification_accuracy(synthetic_train, test, config, seed);
  r.mix = classification_accuracy(mix, test, config, seed);
  return r;
}

std::vector<Suite> parse_suites(std::string_view name) {
  if (name == "micro") return {Suite::kMicro};
  if (name == "macro") return {Suite::kMacro};
  if (name == "application") return {Suite::kApplication};
  if (name == "all") return {Suite::kMicro, Suite::kMacro, Suite::kApplication};
  throw ValidationError("unknown suite '" + std::string(name) + "' (expected micro, macro, application or all)");
}

std::string to_string(Suite suite) {
  switch (suite) {
    case Suite::kMicro:
      return "micro";
    case Suite::kMacro:
      return "macro";
    case Suite::kApplication:
      return "application";
  }
  return "?";
}

std::string format_number(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

namespace {

void append_columns(const MetricsReport& r, std::vector<std::string>* header, std::vector<std::string>* values) {
  auto put = [&](const char* name, const std::optional<double>& v, Suite suite) {
    if (header) header->push_back(name);
    if (values) values->push_back(v ? format_number(*v) : (r.skipped.count(to_string(suite)) ? "skipped" : ""));
  };
  for (Suite s : r.suites) {
    switch (s) {
      case Suite::kMicro:
        put("nll_test", r.nll_test, s);
        put("self_bleu", r.self_bleu, s);
        break;
      case Suite::kMacro: {
        put("adver_suc", r.adver_suc, s);
        const auto& e = r.ere;
        put("ere1", e ? std::optional(e->ere1) : std::nullopt, s);
        put("ere2", e ? std::optional(e->ere2) : std::nullopt, s);
        put("ere3", e ? std::optional(e->ere3) : std::nullopt, s);
        put("mean_ere", e ? std::optional(e->mean()) : std::nullopt, s);
        break;
      }
      case Suite::kApplication: {
        const auto& c = r.classification;
        put("cls_real", c ? std::optional(c->real) : std::nullopt, s);
        put("cls_synthetic", c ? std::optional(c->synthetic) : std::nullopt, s);
        put("cls_mix", c ? std::optional(c->mix) : std::nullopt, s);
        break;
      }
    }
  }
}

}  // namespace

std::vector<std::string> MetricsReport::csv_header() const {
  std::vector<std::string> h = {"run_id", "seed"};
  append_columns(*this, &h, nullptr);
  return h;
}

std::vector<std::string> MetricsReport::csv_values() const {
  std::vector<std::string> v = {run_id, std::to_string(seed)};
  append_columns(*this, nullptr, &v);
  return v;
}

void write_report_csv(std::ostream& os, const MetricsReport& report) {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  };
  line(report.csv_header());
  line(report.csv_values());
}

void write_report_text(std::ostream& os, const MetricsReport& report) {
  os << "run " << report.run_id << " (seed " << report.seed << ")\n";
  auto row = [&](const char* name, double v) { os << "  " << name << ": " << format_number(v) << '\n'; };
  for (Suite s : report.suites) {
    const auto name = to_string(s);
    os << name << ":\n";
    if (auto it = report.skipped.find(name); it != report.skipped.end()) {
      os << "  skipped: " << it->second << '\n';
      continue;
    }
    switch (s) {
      case Suite::kMicro:
        if (report.nll_test) row("NLL-test (nats)", *report.nll_test);
        if (report.self_bleu) row("self-BLEU", *report.self_bleu);
        break;
      case Suite::kMacro:
        if (report.adver_suc) row("AdverSuc", *report.adver_suc);
        if (report.ere) {
          row("ERE1", report.ere->ere1);
          row("ERE2", report.ere->ere2);
          row("ERE3", report.ere->ere3);
          row("mean ERE", report.ere->mean());
        }
        break;
      case Suite::kApplication:
        if (report.classification) {
          row("accuracy (real)", report.classification->real);
          row("accuracy (synthetic)", report.classification->synthetic);
          row("accuracy (mix)", report.classification->mix);
          for (const auto& w : report.classification->warnings) os << "  warning: " << w << '\n';
        }
        break;
    }
  }
}

}  // namespace mtgan
