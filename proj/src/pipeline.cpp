#include "mtgan/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mtgan/bleu.hpp"
#include "mtgan/trainer.hpp"

namespace mtgan {
namespace {

fs::path in_dir(const fs::path& dir, std::string_view name) { return dir / std::string(name); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Corpus read_split(const fs::path& path, const Vocab& vocab, int seq_len) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing corpus file " + path.string() + " (run corpus-gen first)");
  const auto records = read_text_corpus(in);
  return encode_corpus(records, vocab, seq_len).sequences;
}

std::string corpus_text(std::span<const LabeledSequence> corpus, const Vocab& vocab) {
  std::ostringstream os;
  write_corpus(os, corpus, vocab);
  return os.str();
}

template <typename Row>
std::string csv(const std::vector<std::string>& header, const std::vector<Row>& rows) {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += '\n';
  }
  return out;
}

void prepare_run_dir(const RunConfig& config) {
  validate_config(config);
  fs::create_directories(config.run_dir);
  write_file_atomic(in_dir(config.run_dir, kConfigFile), format_config(config));
}

Tensor embedding_for(const RunConfig& config, const CorpusData& data) {
  SkipGramOptions options = config.skipgram;
  options.dim = config.embed_dim;
  return pretrain_embeddings(data.train, data.vocab.size(), options, config.require_seed());
}

void put_meta(Checkpoint& c, const CorpusData& data) {
  c.put_scalar("meta.seq_len", data.seq_len);
  c.put_scalar("meta.num_labels", data.num_labels);
}

Checkpoint checkpoint_for(const RunConfig& config, const CorpusData& data) {
  Checkpoint c;
  c.digest = config_digest(config, data.vocab.size(), data.num_labels);
  put_meta(c, data);
  return c;
}

}  // namespace

GrammarSpec resolve_grammar(std::string_view name_or_path, int seq_len) {
  const fs::path path{std::string(name_or_path)};
  if (fs::is_regular_file(path)) {
    std::ifstream in(path);
    return parse_grammar(in);
  }
  if (name_or_path == "separable" || name_or_path == "overlapping") return preset_grammar(name_or_path, seq_len);
  throw ValidationError("grammar '" + std::string(name_or_path) +
                        "' is neither a file nor a preset (separable, overlapping)");
}

CorpusCounts corpus_gen(const GrammarSpec& spec, std::size_t n, std::uint64_t seed, const fs::path& out_dir) {
  const Grammar grammar(spec);
  const Corpus corpus = generate_corpus(grammar, n, seed);
  const SplitDataset split = split_corpus(corpus, {0.7, 0.1, 0.2}, seed);
  const Vocab& vocab = grammar.vocab();

  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "corpus.tsv", corpus_text(corpus, vocab));
  write_file_atomic(out_dir / "train.tsv", corpus_text(split.train, vocab));
  write_file_atomic(out_dir / "valid.tsv", corpus_text(split.validation, vocab));
  write_file_atomic(out_dir / "test.tsv", corpus_text(split.test, vocab));
  std::ostringstream v;
  vocab.save(v);
  write_file_atomic(out_dir / "vocab.txt", v.str());
  write_file_atomic(out_dir / "grammar.txt", format_grammar(spec));
  return {corpus.size(), split.train.size(), split.validation.size(), split.test.size(), vocab.size()};
}

CorpusData load_corpus_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("corpus directory " + dir.string() + " not found (run corpus-gen first)");
  CorpusData data;
  const auto spec = parse_grammar_string(read_text(dir / "grammar.txt"));
  data.num_labels = spec.num_labels;
  data.seq_len = spec.seq_len;
  std::ifstream vin(dir / "vocab.txt");
  if (!vin) throw ValidationError("missing " + (dir / "vocab.txt").string());
  data.vocab = Vocab::load(vin);
  data.train = read_split(dir / "train.tsv", data.vocab, data.seq_len);
  data.valid = read_split(dir / "valid.tsv", data.vocab, data.seq_len);
  data.test = read_split(dir / "test.tsv", data.vocab, data.seq_len);
  for (const Corpus* part : {&data.train, &data.valid, &data.test}) {
    for (const auto& s : *part) {
      if (s.label < 0 || s.label >= data.num_labels) throw ValidationError("corpus label out of range in " + dir.string());
    }
  }
  return data;
}

RunLock::RunLock(const fs::path& run_dir) {
  fs::create_directories(run_dir);
  const auto path = run_dir / ".lock";
  fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
  if (fd_ < 0) throw ValidationError("cannot open lock file " + path.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw ValidationError("run directory " + run_dir.string() + " is in use by another process");
  }
}

RunLock::~RunLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

Generator generator_from_checkpoint(const Checkpoint& c, double output_dropout) {
  if (!c.contains("g.embedding")) throw ValidationError("checkpoint holds no generator");
  GeneratorConfig config;
  config.vocab_size = static_cast<int>(c.get("g.embedding").rows());
  config.embed_dim = static_cast<int>(c.get("g.embedding").cols());
  config.num_labels = static_cast<int>(c.get("g.condition").rows());
  config.cond_dim = static_cast<int>(c.get("g.condition").cols());
  config.hidden_dim = static_cast<int>(c.get("g.out.W").rows());
  config.seq_len = static_cast<int>(c.scalar("meta.seq_len"));
  config.output_dropout = output_dropout;
  Generator g = Generator::zeros(config);
  c.restore_params("g.", g.params());
  return g;
}

void run_pretrain_g(const RunConfig& config, bool resume, std::ostream& log) {
  prepare_run_dir(config);
  const auto seed = config.require_seed();
  const CorpusData data = load_corpus_dir(config.resolved_corpus_dir());
  const auto digest = config_digest(config, data.vocab.size(), data.num_labels);
  const auto ckpt_path = in_dir(config.run_dir, kPretrainGCheckpoint);

  Generator generator(generator_config(config, data.vocab.size(), data.num_labels), seed);
  AdamState adam = AdamState::with_learning_rate(config.g_lr);
  adam.weight_decay = config.g_weight_decay;
  GeneratorPretrainState state;
  std::vector<std::vector<std::string>> rows;
  if (resume && fs::exists(ckpt_path)) {
    const Checkpoint c = load_checkpoint(ckpt_path, digest);
    c.restore_params("g.", generator.params());
    c.restore_adam("g_opt.", adam);
    state.epoch = static_cast<int>(c.scalar("meta.epoch"));
    state.best_epoch = static_cast<int>(c.scalar("meta.best_epoch"));
    state.best_valid_nll = c.scalar("meta.best_valid_nll");
    state.since_best = static_cast<int>(c.scalar("meta.since_best"));
    state.stopped = c.scalar("meta.stopped") != 0.0;
    state.best = generator.params();
    c.restore_params("g_best.", state.best);
    const Tensor& h = c.get("meta.history");
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
      rows.push_back({std::to_string(static_cast<int>(h(r, 0))), format_number(h(r, 1)), format_number(h(r, 2))});
    }
    log << "resuming generator pretraining after epoch " << state.epoch << '\n';
  }

  auto save = [&](const GeneratorPretrainState& s, const ParamStore& current) {
    Checkpoint c = checkpoint_for(config, data);
    c.digest = digest;
    c.put_params("g.", current);
    c.put_params("g_best.", s.best);
    c.put_adam("g_opt.", adam);
    c.put_scalar("meta.epoch", s.epoch);
    c.put_scalar("meta.best_epoch", s.best_epoch);
    c.put_scalar("meta.best_valid_nll", s.best_valid_nll);
    c.put_scalar("meta.since_best", s.since_best);
    c.put_scalar("meta.stopped", s.stopped ? 1.0 : 0.0);
    Tensor h(static_cast<Eigen::Index>(rows.size()), 3);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (int k = 0; k < 3; ++k) h(static_cast<Eigen::Index>(r), k) = std::stod(rows[r][static_cast<std::size_t>(k)]);
    }
    c.put("meta.history", h);
    save_checkpoint(ckpt_path, c);
    write_file_atomic(in_dir(config.run_dir, kPretrainGMetrics), csv({"epoch", "train_loss", "valid_nll"}, rows));
  };

  pretrain_generator(generator, adam, state, data.train, data.valid, config.g_pretrain, seed,
                     [&](const GeneratorPretrainState& s, const EpochRecord& rec) {
                       rows.push_back({std::to_string(rec.epoch), format_number(rec.train_loss), format_number(rec.valid_nll)});
                       save(s, generator.params());
                       log << "epoch " << rec.epoch << " train " << format_number(rec.train_loss) << " valid "
                           << format_number(rec.valid_nll) << '\n';
                     });
  // Final checkpoint carries the restored best parameters.
  save(state, generator.params());
  log << "best epoch " << state.best_epoch << " valid NLL " << format_number(state.best_valid_nll) << '\n';
}

void run_pretrain_d(const RunConfig& config, std::ostream& log) {
  prepare_run_dir(config);
  const auto seed = config.require_seed();
  const CorpusData data = load_corpus_dir(config.resolved_corpus_dir());
  const auto digest = config_digest(config, data.vocab.size(), data.num_labels);
  const auto g_path = in_dir(config.run_dir, kPretrainGCheckpoint);
  if (!fs::exists(g_path)) throw ValidationError("missing " + g_path.string() + " (run pretrain-g first)");
  const Generator generator = generator_from_checkpoint(load_checkpoint(g_path, digest));

  const Tensor embedding = embedding_for(config, data);
  auto discriminator = Discriminator::create(discriminator_config(config, data.vocab.size(), data.num_labels), embedding, seed);
  AdamState adam = AdamState::with_learning_rate(config.d_lr);

  std::vector<std::vector<std::string>> rows;
  {
    // Evaluation-mode loss before any update.
    const Corpus fakes = generator.sample_batch(labels_of(data.train), seed, stream_id({tag(Purpose::kSample), 2}));
    Corpus all = data.train;
    all.insert(all.end(), fakes.begin(), fakes.end());
    Vector targets = Vector::Zero(static_cast<Eigen::Index>(all.size()));
    targets.head(static_cast<Eigen::Index>(data.train.size())).setOnes();
    const double initial = discriminator->loss(to_token_matrix(all), labels_of(all), targets, false, nullptr);
    rows.push_back({"0", "0", format_number(initial)});
    log << "initial loss " << format_number(initial) << '\n';
  }
  for (int round = 1; round <= config.d_pretrain_rounds; ++round) {
    const auto losses = train_discriminator_against(*discriminator, adam, generator, data.train, config.d_pretrain, seed,
                                                    stream_id({7, static_cast<std::uint64_t>(round)}));
    for (std::size_t e = 0; e < losses.size(); ++e) {
      rows.push_back({std::to_string(round), std::to_string(e + 1), format_number(losses[e])});
    }
    log << "round " << round << " loss " << format_number(losses.back()) << '\n';
  }

  Checkpoint c = checkpoint_for(config, data);
  c.put_params("d.", discriminator->params());
  c.put("d.embedding", discriminator->embedding());
  c.put_adam("d_opt.", adam);
  c.put_scalar("meta.rounds", config.d_pretrain_rounds);
  save_checkpoint(in_dir(config.run_dir, kPretrainDCheckpoint), c);
  write_file_atomic(in_dir(config.run_dir, kPretrainDMetrics), csv({"round", "epoch", "loss"}, rows));
}

void run_advtrain(const RunConfig& config, bool resume, std::ostream& log) {
  prepare_run_dir(config);
  const auto seed = config.require_seed();
  const CorpusData data = load_corpus_dir(config.resolved_corpus_dir());
  const auto digest = config_digest(config, data.vocab.size(), data.num_labels);
  const auto adv_path = in_dir(config.run_dir, kAdvCheckpoint);
  const auto d_config = discriminator_config(config, data.vocab.size(), data.num_labels);

  TrainSchedule schedule = config.schedule;
  schedule.record_wall_time = config.record_wall_time;

  AdversarialState state;
  std::vector<IterationMetrics> history;
  if (resume && fs::exists(adv_path)) {
    const Checkpoint c = load_checkpoint(adv_path, digest);
    state.generator = generator_from_checkpoint(c, config.g_dropout);
    state.rollout = state.generator;
    c.restore_params("beta.", state.rollout.params());
    state.discriminator = Discriminator::create(d_config, c.get("d.embedding"), seed);
    c.restore_params("d.", state.discriminator->params());
    c.restore_adam("g_mle.", state.g_mle);
    c.restore_adam("g_adv.", state.g_adv);
    c.restore_adam("d_opt.", state.d_opt);
    state.iteration = static_cast<std::int64_t>(c.scalar("meta.iteration"));
    state.teacher_forcing_steps = static_cast<std::int64_t>(c.scalar("meta.teacher_forcing_steps"));
    const Tensor& m = c.get("meta.metrics");
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      history.push_back({static_cast<std::int64_t>(m(r, 0)), m(r, 1), m(r, 2), m(r, 3), m(r, 4), m(r, 5)});
    }
    log << "resuming adversarial training after iteration " << state.iteration << '\n';
  } else {
    const auto g_path = in_dir(config.run_dir, kPretrainGCheckpoint);
    const auto d_path = in_dir(config.run_dir, kPretrainDCheckpoint);
    for (const auto& p : {g_path, d_path}) {
      if (!fs::exists(p)) throw ValidationError("missing " + p.string() + " (run pretrain-g and pretrain-d first)");
    }
    const Checkpoint gc = load_checkpoint(g_path, digest);
    state.generator = generator_from_checkpoint(gc, config.g_dropout);
    state.rollout = state.generator;
    const Checkpoint dc = load_checkpoint(d_path, digest);
    state.discriminator = Discriminator::create(d_config, dc.get("d.embedding"), seed);
    dc.restore_params("d.", state.discriminator->params());
    // Teacher forcing is a generator update of the adversarial phase, so it
    // runs at the adversarial rate, continuing the pretraining moments.
    gc.restore_adam("g_opt.", state.g_mle);
    state.g_mle.learning_rate = config.g_adv_lr;
    state.g_mle.weight_decay = config.g_weight_decay;
    state.g_adv = AdamState::with_learning_rate(config.g_adv_lr);
    state.d_opt = AdamState::with_learning_rate(config.d_lr);
  }

  auto write = [&](const AdversarialState& s) {
    Checkpoint c = checkpoint_for(config, data);
    c.put_params("g.", s.generator.params());
    c.put_params("beta.", s.rollout.params());
    c.put_params("d.", s.discriminator->params());
    c.put("d.embedding", s.discriminator->embedding());
    c.put_adam("g_mle.", s.g_mle);
    c.put_adam("g_adv.", s.g_adv);
    c.put_adam("d_opt.", s.d_opt);
    c.put_scalar("meta.iteration", static_cast<double>(s.iteration));
    c.put_scalar("meta.teacher_forcing_steps", static_cast<double>(s.teacher_forcing_steps));
    Tensor m(static_cast<Eigen::Index>(history.size()), 6);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t r = 0; r < history.size(); ++r) {
      const auto& h = history[r];
      m.row(static_cast<Eigen::Index>(r)) << static_cast<double>(h.iteration), h.nll_test, h.mean_reward, h.d_loss,
          h.g_objective, h.wall_seconds;
      rows.push_back({std::to_string(h.iteration), format_number(h.nll_test), format_number(h.mean_reward),
                      format_number(h.d_loss), format_number(h.g_objective), format_number(h.wall_seconds)});
    }
    c.put("meta.metrics", m);
    save_checkpoint(adv_path, c);
    write_file_atomic(in_dir(config.run_dir, kAdvMetrics),
                      csv({"iteration", "nll_test", "mean_reward", "d_loss", "g_objective", "wall_seconds"}, rows));
  };

  adversarial_train(state, schedule, data.train, data.test, seed, [&](const AdversarialState& s, const IterationMetrics& m) {
    history.push_back(m);
    write(s);
    log << "iteration " << m.iteration << " nll_test " << format_number(m.nll_test) << " reward "
        << format_number(m.mean_reward) << " d_loss " << format_number(m.d_loss) << '\n';
  });
  write(state);
}

void run_sample(const fs::path& checkpoint, int label, int n, std::uint64_t seed, const fs::path& vocab_path,
                std::ostream& out) {
  if (n < 0) throw ValidationError("--n must be >= 0");
  const Generator generator = generator_from_checkpoint(load_checkpoint(checkpoint));
  if (label < 0 || label >= generator.config().num_labels) {
    throw ValidationError("--label must be in [0, " + std::to_string(generator.config().num_labels) + ")");
  }
  std::ifstream vin(vocab_path);
  if (!vin) throw ValidationError("cannot open vocabulary " + vocab_path.string());
  const Vocab vocab = Vocab::load(vin);
  if (vocab.size() != generator.config().vocab_size) {
    throw ValidationError("vocabulary size " + std::to_string(vocab.size()) + " does not match checkpoint (" +
                          std::to_string(generator.config().vocab_size) + ")");
  }
  const std::vector<int> labels(static_cast<std::size_t>(n), label);
  const Corpus samples = generator.sample_batch(labels, seed, stream_id({tag(Purpose::kSample), 9}));
  write_corpus(out, samples, vocab);
}

MetricsReport run_eval(const fs::path& checkpoint, std::string_view suite, std::uint64_t seed, const RunConfig& config,
                       const fs::path& out_dir, std::ostream& log) {
  MetricsReport report;
  report.suites = parse_suites(suite);
  report.seed = seed;
  report.run_id = fs::absolute(checkpoint).parent_path().filename().string() + "/" + checkpoint.stem().string();

  const CorpusData data = load_corpus_dir(config.resolved_corpus_dir());
  const Checkpoint c = load_checkpoint(checkpoint);
  const Generator generator = generator_from_checkpoint(c);
  if (generator.config().vocab_size != data.vocab.size()) {
    throw ValidationError("checkpoint vocabulary does not match corpus " + config.resolved_corpus_dir().string());
  }

  auto synthetic_like = [&](std::span<const LabeledSequence> reference, std::uint64_t stream) {
    return generator.sample_batch(labels_of(reference), seed, stream_id({tag(Purpose::kEval), stream}));
  };
  auto embedding = [&]() { return c.contains("d.embedding") ? c.get("d.embedding") : embedding_for(config, data); };

  for (Suite s : report.suites) {
    const auto name = to_string(s);
    try {
      switch (s) {
        case Suite::kMicro: {
          if (data.test.empty()) throw InsufficientDataError("empty test split");
          report.nll_test = nll_test(generator, data.test);
          RngStream label_rng(seed, stream_id({tag(Purpose::kLabels), 77}));
          std::vector<int> labels(static_cast<std::size_t>(config.eval_samples));
          for (auto& y : labels) y = static_cast<int>(label_rng.uniform_int(static_cast<std::uint64_t>(data.num_labels)));
          const Corpus samples = generator.sample_batch(labels, seed, stream_id({tag(Purpose::kEval), 1}));
          report.self_bleu = self_bleu(samples);
          break;
        }
        case Suite::kMacro: {
          const EvaluatorConfig ec = evaluator_config(config, data.vocab.size(), data.num_labels, embedding());
          const Corpus synthetic = synthetic_like(data.test, 2);
          report.adver_suc = adversarial_eval(data.test, synthetic, ec, seed).adver_suc;
          report.ere = ere_suite(data.test, synthetic, ec, seed);
          break;
        }
        case Suite::kApplication: {
          const EvaluatorConfig ec = evaluator_config(config, data.vocab.size(), data.num_labels, embedding());
          const Corpus synthetic = synthetic_like(data.train, 3);
          report.classification = downstream_classification(data.train, synthetic, data.test, ec, seed);
          break;
        }
      }
      log << name << " suite done\n";
    } catch (const InsufficientDataError& e) {
      report.skipped[name] = e.what();
      log << name << " suite skipped: " << e.what() << '\n';
    }
  }

  fs::create_directories(out_dir);
  std::ostringstream csv_out;
  write_report_csv(csv_out, report);
  write_file_atomic(out_dir / std::string(kEvalCsv), csv_out.str());
  std::ostringstream text;
  write_report_text(text, report);
  write_file_atomic(out_dir / std::string(kEvalText), text.str());
  return report;
}

}  // namespace mtgan
