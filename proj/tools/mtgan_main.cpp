#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mtgan/parallel.hpp"
#include "mtgan/pipeline.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitCorrupt = 4;

mtgan::fs::path default_run_dir() {
  if (const char* env = std::getenv("MTGAN_RUN_DIR"); env && *env) return env;
  return ".";
}

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_dir;
  bool resume = false;
  bool no_timing = false;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config_path, "run configuration file (section.key = value)");
  cmd->add_option("--set", flags.overrides, "override a config key, e.g. --set train.iterations=5");
  cmd->add_option("--run-dir", flags.run_dir, "run directory (default: $MTGAN_RUN_DIR or .)");
}

// Config file first, then --run-dir, then --set overrides.
mtgan::RunConfig resolve_config(const ConfigFlags& flags) {
  mtgan::RunConfig config;
  const mtgan::fs::path run_dir = flags.run_dir.empty() ? default_run_dir() : mtgan::fs::path(flags.run_dir);
  if (!flags.config_path.empty()) {
    config = mtgan::load_config(flags.config_path);
  } else if (const auto stored = run_dir / std::string(mtgan::kConfigFile); mtgan::fs::exists(stored)) {
    config = mtgan::load_config(stored);
  }
  if (!flags.run_dir.empty() || flags.config_path.empty()) config.run_dir = run_dir;
  mtgan::apply_overrides(config, flags.overrides);
  if (flags.no_timing) config.record_wall_time = false;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional sequence GAN trainer and evaluator"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker thread cap (results do not depend on it)")->check(CLI::PositiveNumber);

  // corpus-gen
  auto* corpus_cmd = app.add_subcommand("corpus-gen", "generate a synthetic labeled corpus and its splits");
  std::string grammar = "separable";
  std::size_t corpus_n = 2000;
  std::uint64_t corpus_seed = 0;
  int seq_len = 20;
  std::string corpus_out;
  corpus_cmd->add_option("--grammar", grammar, "grammar file or preset (separable, overlapping)")->required();
  corpus_cmd->add_option("--n", corpus_n, "number of sequences")->required();
  corpus_cmd->add_option("--seed", corpus_seed, "random seed")->required();
  corpus_cmd->add_option("--out", corpus_out, "output directory")->required();
  corpus_cmd->add_option("--seq-len", seq_len, "sequence length for preset grammars")->check(CLI::PositiveNumber);

  ConfigFlags g_flags;
  auto* pretrain_g_cmd = app.add_subcommand("pretrain-g", "MLE-pretrain the generator");
  add_config_flags(pretrain_g_cmd, g_flags);
  pretrain_g_cmd->add_flag("--resume", g_flags.resume, "continue from the run's generator checkpoint");

  ConfigFlags d_flags;
  auto* pretrain_d_cmd = app.add_subcommand("pretrain-d", "pretrain the discriminator against the generator");
  add_config_flags(pretrain_d_cmd, d_flags);

  ConfigFlags adv_flags;
  auto* adv_cmd = app.add_subcommand("advtrain", "adversarial training with rollout rewards");
  add_config_flags(adv_cmd, adv_flags);
  adv_cmd->add_flag("--resume", adv_flags.resume, "continue from the run's adversarial checkpoint");
  adv_cmd->add_flag("--no-timing", adv_flags.no_timing, "write 0 in the wall_seconds column");

  auto* sample_cmd = app.add_subcommand("sample", "decode sequences from a checkpoint");
  std::string sample_ckpt;
  int sample_label = 0;
  int sample_n = 0;
  std::uint64_t sample_seed = 0;
  std::string sample_vocab;
  sample_cmd->add_option("--checkpoint", sample_ckpt, "checkpoint file")->required();
  sample_cmd->add_option("--label", sample_label, "condition label")->required();
  sample_cmd->add_option("--n", sample_n, "number of sequences")->required();
  sample_cmd->add_option("--seed", sample_seed, "random seed")->required();
  sample_cmd->add_option("--vocab", sample_vocab, "vocabulary file (default: <checkpoint dir>/corpus/vocab.txt)");

  auto* eval_cmd = app.add_subcommand("eval", "micro, macro and application metrics");
  std::string eval_ckpt;
  std::string eval_suite = "all";
  std::uint64_t eval_seed = 0;
  std::string eval_out;
  ConfigFlags eval_flags;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--suite", eval_suite, "micro, macro, application or all");
  eval_cmd->add_option("--seed", eval_seed, "random seed")->required();
  eval_cmd->add_option("--out", eval_out, "output directory (default: the checkpoint's directory)");
  add_config_flags(eval_cmd, eval_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  mtgan::worker_count() = static_cast<std::size_t>(threads);

  try {
    if (corpus_cmd->parsed()) {
      const auto spec = mtgan::resolve_grammar(grammar, seq_len);
      const auto counts = mtgan::corpus_gen(spec, corpus_n, corpus_seed, corpus_out);
      std::cout << "sequences " << counts.total << "\ntrain " << counts.train << "\nvalid " << counts.valid << "\ntest "
                << counts.test << "\nvocab " << counts.vocab_size << '\n';
    } else if (pretrain_g_cmd->parsed()) {
      const auto config = resolve_config(g_flags);
      mtgan::RunLock lock(config.run_dir);
      mtgan::run_pretrain_g(config, g_flags.resume, std::cerr);
    } else if (pretrain_d_cmd->parsed()) {
      const auto config = resolve_config(d_flags);
      mtgan::RunLock lock(config.run_dir);
      mtgan::run_pretrain_d(config, std::cerr);
    } else if (adv_cmd->parsed()) {
      const auto config = resolve_config(adv_flags);
      mtgan::RunLock lock(config.run_dir);
      mtgan::run_advtrain(config, adv_flags.resume, std::cerr);
    } else if (sample_cmd->parsed()) {
      const mtgan::fs::path ckpt = sample_ckpt;
      const mtgan::fs::path vocab =
          sample_vocab.empty() ? mtgan::fs::absolute(ckpt).parent_path() / "corpus" / "vocab.txt" : mtgan::fs::path(sample_vocab);
      mtgan::run_sample(ckpt, sample_label, sample_n, sample_seed, vocab, std::cout);
    } else if (eval_cmd->parsed()) {
      const mtgan::fs::path ckpt = eval_ckpt;
      mtgan::parse_suites(eval_suite);
      const auto ckpt_dir = mtgan::fs::absolute(ckpt).parent_path();
      ConfigFlags flags = eval_flags;
      if (flags.config_path.empty() && mtgan::fs::exists(ckpt_dir / std::string(mtgan::kConfigFile))) {
        flags.config_path = (ckpt_dir / std::string(mtgan::kConfigFile)).string();
      }
      if (flags.run_dir.empty()) flags.run_dir = ckpt_dir.string();
      const auto config = resolve_config(flags);
      const auto report = mtgan::run_eval(ckpt, eval_suite, eval_seed, config,
                                          eval_out.empty() ? ckpt_dir : mtgan::fs::path(eval_out), std::cerr);
      mtgan::write_report_text(std::cout, report);
    }
  } catch (const mtgan::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const mtgan::CorruptArtifactError& e) {
    std::cerr << "corrupt artifact: " << e.what() << '\n';
    return kExitCorrupt;
  } catch (const mtgan::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (eval_cmd->parsed() && std::string(e.what()).starts_with("unknown suite")) std::cerr << eval_cmd->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return 0;
}
