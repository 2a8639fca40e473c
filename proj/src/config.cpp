#include "mtgan/config.hpp"

#include <zlib.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace mtgan {
namespace {

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ValidationError("config " + std::string(key) + ": cannot parse '" + std::string(text) + "'");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ValidationError("config " + std::string(key) + ": expected true or false, got '" + std::string(text) + "'");
}

std::string to_text(int v) { return std::to_string(v); }
std::string to_text(double v) { return format_number(v); }
std::string to_text(bool v) { return v ? "true" : "false"; }

template <typename T, typename Access>
Field field(std::string key, Access access) {
  Field f;
  f.key = key;
  f.get = [access](const RunConfig& c) { return to_text(access(const_cast<RunConfig&>(c))); };
  f.set = [access, key](RunConfig& c, std::string_view text) {
    if constexpr (std::is_same_v<T, bool>) {
      access(c) = parse_bool(key, text);
    } else {
      access(c) = parse_number<T>(key, text);
    }
  };
  return f;
}

Field text_field(std::string key, std::function<std::string(const RunConfig&)> get,
                 std::function<void(RunConfig&, std::string_view)> set) {
  return Field{std::move(key), std::move(get), std::move(set)};
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    t.push_back(text_field(
        "run.preset", [](const RunConfig& c) { return c.preset; },
        [](RunConfig& c, std::string_view v) { c.preset = std::string(v); }));
    t.push_back(text_field(
        "run.dir", [](const RunConfig& c) { return c.run_dir.string(); },
        [](RunConfig& c, std::string_view v) { c.run_dir = std::string(v); }));
    t.push_back(text_field(
        "run.seed", [](const RunConfig& c) { return c.seed ? std::to_string(*c.seed) : std::string(); },
        [](RunConfig& c, std::string_view v) {
          if (v.empty()) {
            c.seed.reset();
          } else {
            c.seed = parse_number<std::uint64_t>("run.seed", v);
          }
        }));
    t.push_back(field<bool>("run.record_wall_time", [](RunConfig& c) -> bool& { return c.record_wall_time; }));

    t.push_back(text_field(
        "corpus.grammar", [](const RunConfig& c) { return c.grammar; },
        [](RunConfig& c, std::string_view v) { c.grammar = std::string(v); }));
    t.push_back(field<int>("corpus.n", [](RunConfig& c) -> int& { return c.corpus_size; }));
    t.push_back(field<int>("corpus.seq_len", [](RunConfig& c) -> int& { return c.seq_len; }));
    t.push_back(text_field(
        "corpus.dir", [](const RunConfig& c) { return c.corpus_dir.string(); },
        [](RunConfig& c, std::string_view v) { c.corpus_dir = std::string(v); }));

    t.push_back(field<int>("model.embed_dim", [](RunConfig& c) -> int& { return c.embed_dim; }));
    t.push_back(field<int>("model.hidden_dim", [](RunConfig& c) -> int& { return c.hidden_dim; }));
    t.push_back(field<int>("model.cond_dim", [](RunConfig& c) -> int& { return c.cond_dim; }));
    t.push_back(field<double>("model.g_dropout", [](RunConfig& c) -> double& { return c.g_dropout; }));

    t.push_back(text_field(
        "disc.kind", [](const RunConfig& c) { return to_string(c.discriminator.kind); },
        [](RunConfig& c, std::string_view v) { c.discriminator.kind = parse_discriminator_kind(v); }));
    t.push_back(field<double>("disc.dropout", [](RunConfig& c) -> double& { return c.discriminator.dropout; }));
    t.push_back(field<double>("disc.l2", [](RunConfig& c) -> double& { return c.discriminator.l2; }));
    t.push_back(field<int>("disc.bigram_buckets", [](RunConfig& c) -> int& { return c.discriminator.bigram_buckets; }));
    t.push_back(field<bool>("disc.use_bigrams", [](RunConfig& c) -> bool& { return c.discriminator.use_bigrams; }));
    t.push_back(text_field(
        "disc.filter_widths", [](const RunConfig& c) { return join_ints(c.discriminator.filter_widths); },
        [](RunConfig& c, std::string_view v) {
          std::vector<int> widths;
          std::size_t start = 0;
          while (start <= v.size()) {
            const auto end = std::min(v.find(',', start), v.size());
            widths.push_back(parse_number<int>("disc.filter_widths", v.substr(start, end - start)));
            start = end + 1;
          }
          c.discriminator.filter_widths = widths;
        }));
    t.push_back(field<int>("disc.filters_per_width", [](RunConfig& c) -> int& { return c.discriminator.filters_per_width; }));
    t.push_back(field<int>("disc.rnn_hidden", [](RunConfig& c) -> int& { return c.discriminator.rnn_hidden; }));
    t.push_back(field<int>("disc.attention_dim", [](RunConfig& c) -> int& { return c.discriminator.attention_dim; }));

    t.push_back(field<int>("embedding.epochs", [](RunConfig& c) -> int& { return c.skipgram.epochs; }));
    t.push_back(field<int>("embedding.window", [](RunConfig& c) -> int& { return c.skipgram.window; }));
    t.push_back(field<int>("embedding.negatives", [](RunConfig& c) -> int& { return c.skipgram.negatives; }));
    t.push_back(field<double>("embedding.learning_rate", [](RunConfig& c) -> double& { return c.skipgram.learning_rate; }));

    t.push_back(field<int>("pretrain.g_max_epochs", [](RunConfig& c) -> int& { return c.g_pretrain.max_epochs; }));
    t.push_back(field<int>("pretrain.g_patience", [](RunConfig& c) -> int& { return c.g_pretrain.patience; }));
    t.push_back(field<int>("pretrain.g_batch_size", [](RunConfig& c) -> int& { return c.g_pretrain.batch_size; }));
    t.push_back(field<int>("pretrain.d_rounds", [](RunConfig& c) -> int& { return c.d_pretrain_rounds; }));
    t.push_back(field<int>("pretrain.d_epochs", [](RunConfig& c) -> int& { return c.d_pretrain.epochs; }));
    t.push_back(field<int>("pretrain.d_samples", [](RunConfig& c) -> int& { return c.d_pretrain.samples; }));
    t.push_back(field<int>("pretrain.d_batch_size", [](RunConfig& c) -> int& { return c.d_pretrain.batch_size; }));

    t.push_back(field<int>("train.iterations", [](RunConfig& c) -> int& { return c.schedule.iterations; }));
    t.push_back(field<int>("train.g_steps", [](RunConfig& c) -> int& { return c.schedule.g_steps; }));
    t.push_back(field<int>("train.d_steps", [](RunConfig& c) -> int& { return c.schedule.d_steps; }));
    t.push_back(field<int>("train.d_epochs", [](RunConfig& c) -> int& { return c.schedule.d_epochs; }));
    t.push_back(field<int>("train.rollouts", [](RunConfig& c) -> int& { return c.schedule.rollouts; }));
    t.push_back(field<double>("train.soft_update", [](RunConfig& c) -> double& { return c.schedule.soft_update_rate; }));
    t.push_back(text_field(
        "train.rescale", [](const RunConfig& c) { return to_string(c.schedule.rescale); },
        [](RunConfig& c, std::string_view v) { c.schedule.rescale = parse_rescale_mode(v); }));
    t.push_back(text_field(
        "train.baseline",
        [](const RunConfig& c) { return std::string(c.schedule.baseline == BaselineMode::kOff ? "off" : "batch-mean"); },
        [](RunConfig& c, std::string_view v) {
          if (v == "off") {
            c.schedule.baseline = BaselineMode::kOff;
          } else if (v == "batch-mean") {
            c.schedule.baseline = BaselineMode::kBatchMean;
          } else {
            throw ValidationError("config train.baseline: expected off or batch-mean");
          }
        }));
    t.push_back(field<bool>("train.teacher_forcing", [](RunConfig& c) -> bool& { return c.schedule.teacher_forcing; }));
    t.push_back(field<int>("train.batch_size", [](RunConfig& c) -> int& { return c.schedule.batch_size; }));
    t.push_back(field<int>("train.d_samples", [](RunConfig& c) -> int& { return c.schedule.d_samples; }));
    t.push_back(field<int>("train.d_batch_size", [](RunConfig& c) -> int& { return c.schedule.d_batch_size; }));

    t.push_back(field<double>("optim.g_lr", [](RunConfig& c) -> double& { return c.g_lr; }));
    t.push_back(field<double>("optim.g_weight_decay", [](RunConfig& c) -> double& { return c.g_weight_decay; }));
    t.push_back(field<double>("optim.g_adv_lr", [](RunConfig& c) -> double& { return c.g_adv_lr; }));
    t.push_back(field<double>("optim.d_lr", [](RunConfig& c) -> double& { return c.d_lr; }));

    t.push_back(field<int>("eval.samples", [](RunConfig& c) -> int& { return c.eval_samples; }));
    t.push_back(field<int>("eval.evaluator_epochs", [](RunConfig& c) -> int& { return c.evaluator_epochs; }));
    t.push_back(field<int>("eval.evaluator_seeds", [](RunConfig& c) -> int& { return c.evaluator_seeds; }));
    t.push_back(text_field(
        "eval.evaluator_kind", [](const RunConfig& c) { return c.evaluator_kind; },
        [](RunConfig& c, std::string_view v) {
          parse_discriminator_kind(v);
          c.evaluator_kind = std::string(v);
        }));
    return t;
  }();
  return table;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::filesystem::path RunConfig::resolved_corpus_dir() const {
  return corpus_dir.empty() ? run_dir / "corpus" : corpus_dir;
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw ValidationError("config: run.seed is required");
  return *seed;
}

RunConfig preset_config(std::string_view name) {
  RunConfig c;
  if (name == "desk-scale") {
    c.preset = "desk-scale";
    return c;
  }
  if (name == "paper-scale") {
    c.preset = "paper-scale";
    c.seq_len = 40;
    c.schedule.iterations = 100;
    c.g_pretrain.max_epochs = 1000;
    c.g_pretrain.patience = 0;
    return c;
  }
  throw ValidationError("unknown preset '" + std::string(name) + "' (expected desk-scale or paper-scale)");
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(config, trim(value));
      return;
    }
  }
  throw ValidationError("unknown config key '" + std::string(key) + "'");
}

void apply_overrides(RunConfig& config, std::span<const std::string> overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ValidationError("override '" + o + "' is not key=value");
    const auto key = trim(std::string_view(o).substr(0, eq));
    if (key == "run.preset") {
      throw ValidationError("run.preset cannot be overridden; start a new run directory instead");
    }
    apply_setting(config, key, std::string_view(o).substr(eq + 1));
  }
}

RunConfig parse_config(std::istream& is) {
  std::vector<std::tuple<int, std::string, std::string>> entries;
  std::string line;
  int number = 0;
  std::string preset = "desk-scale";
  while (std::getline(is, line)) {
    ++number;
    auto text = std::string_view(line);
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError("config line " + std::to_string(number) + ": expected 'section.key = value'");
    }
    std::string key(trim(text.substr(0, eq)));
    std::string value(trim(text.substr(eq + 1)));
    if (key == "run.preset") {
      preset = value;
    } else {
      entries.emplace_back(number, std::move(key), std::move(value));
    }
  }
  RunConfig config = preset_config(preset);
  for (const auto& [n, key, value] : entries) {
    try {
      apply_setting(config, key, value);
    } catch (const ValidationError& e) {
      throw ValidationError("config line " + std::to_string(n) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  return parse_config(in);
}

std::string format_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

void validate_config(const RunConfig& config) {
  config.require_seed();
  if (config.seq_len < 1) throw ValidationError("config: corpus.seq_len must be positive");
  if (config.corpus_size < 10) throw ValidationError("config: corpus.n must be at least 10");
  if (config.embed_dim < 1 || config.hidden_dim < 1 || config.cond_dim < 1) {
    throw ValidationError("config: model dimensions must be positive");
  }
  if (config.g_pretrain.max_epochs < 0 || config.g_pretrain.batch_size < 1) {
    throw ValidationError("config: bad generator pretraining settings");
  }
  if (config.d_pretrain_rounds < 0 || config.d_pretrain.epochs < 1 || config.d_pretrain.batch_size < 1) {
    throw ValidationError("config: bad discriminator pretraining settings");
  }
  if (config.eval_samples < 2 || config.evaluator_epochs < 1 || config.evaluator_seeds < 1) {
    throw ValidationError("config: bad evaluation settings");
  }
  if (!(config.g_lr > 0 && config.g_adv_lr > 0 && config.d_lr > 0) || config.g_weight_decay < 0) {
    throw ValidationError("config: learning rates must be positive");
  }
  if (!(config.g_dropout >= 0.0 && config.g_dropout < 1.0)) {
    throw ValidationError("config: model.g_dropout must be in [0, 1)");
  }
  config.schedule.validate();
}

GeneratorConfig generator_config(const RunConfig& config, int vocab_size, int num_labels) {
  GeneratorConfig g;
  g.vocab_size = vocab_size;
  g.seq_len = config.seq_len;
  g.embed_dim = config.embed_dim;
  g.hidden_dim = config.hidden_dim;
  g.cond_dim = config.cond_dim;
  g.num_labels = num_labels;
  g.output_dropout = config.g_dropout;
  return g;
}

DiscriminatorConfig discriminator_config(const RunConfig& config, int vocab_size, int num_labels) {
  DiscriminatorConfig d = config.discriminator;
  d.vocab_size = vocab_size;
  d.seq_len = config.seq_len;
  d.embed_dim = config.embed_dim;
  d.num_labels = num_labels;
  return d;
}

EvaluatorConfig evaluator_config(const RunConfig& config, int vocab_size, int num_labels, Tensor embedding) {
  EvaluatorConfig e;
  e.model = discriminator_config(config, vocab_size, num_labels);
  e.model.kind = parse_discriminator_kind(config.evaluator_kind);
  e.embedding = std::move(embedding);
  e.epochs = config.evaluator_epochs;
  e.seeds = config.evaluator_seeds;
  e.learning_rate = config.d_lr;
  return e;
}

std::uint32_t config_digest(const RunConfig& config, int vocab_size, int num_labels) {
  const auto& d = config.discriminator;
  std::ostringstream os;
  os << "vocab=" << vocab_size << ";labels=" << num_labels << ";T=" << config.seq_len << ";embed=" << config.embed_dim
     << ";hidden=" << config.hidden_dim << ";cond=" << config.cond_dim << ";disc=" << to_string(d.kind)
     << ";buckets=" << d.bigram_buckets << ";bigrams=" << d.use_bigrams << ";widths=" << join_ints(d.filter_widths)
     << ";filters=" << d.filters_per_width << ";rnn=" << d.rnn_hidden << ";attn=" << d.attention_dim;
  const std::string s = os.str();
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size())));
}

}  // namespace mtgan
