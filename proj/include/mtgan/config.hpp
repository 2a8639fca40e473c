#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "mtgan/corpus.hpp"
#include "mtgan/discriminator.hpp"
#include "mtgan/evaluation.hpp"
#include "mtgan/generator.hpp"
#include "mtgan/trainer.hpp"

namespace mtgan {

// Everything a run needs. Stored on disk as flat `section.key = value` lines;
// command-line overrides are applied on top and win.
struct RunConfig {
  std::string preset = "desk-scale";
  std::filesystem::path run_dir = ".";
  std::optional<std::uint64_t> seed;
  bool record_wall_time = true;

  // corpus
  std::string grammar = "overlapping";  // preset name or grammar file
  int corpus_size = 2000;
  int seq_len = 20;
  std::filesystem::path corpus_dir;  // empty = <run_dir>/corpus

  // model
  int embed_dim = 32;
  int hidden_dim = 32;
  int cond_dim = 8;
  double g_dropout = 0.4;  // MLE only
  DiscriminatorConfig discriminator;

  SkipGramOptions skipgram;
  GeneratorPretrainOptions g_pretrain{200, 20, 64};
  int d_pretrain_rounds = 3;
  DiscriminatorTrainOptions d_pretrain{3, 0, 64};

  TrainSchedule schedule;
  double g_lr = 1e-3;
  double g_weight_decay = 0.0;  // MLE steps only
  double g_adv_lr = 1e-4;
  double d_lr = 1e-3;

  // evaluation
  int eval_samples = 400;
  int evaluator_epochs = 10;
  int evaluator_seeds = 3;
  std::string evaluator_kind = "cnn";

  std::filesystem::path resolved_corpus_dir() const;
  std::uint64_t require_seed() const;
};

// "desk-scale" or "paper-scale".
RunConfig preset_config(std::string_view name);

// Sets one `section.key` from text. Unknown keys and bad values throw
// ValidationError.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);
// Applies "key=value" overrides in order.
void apply_overrides(RunConfig& config, std::span<const std::string> overrides);

// A `run.preset` line is applied first, then every other line in order.
RunConfig parse_config(std::istream& is);
RunConfig load_config(const std::filesystem::path& path);
// Every key in a fixed order; parse_config(format_config(c)) reproduces c.
std::string format_config(const RunConfig& config);

void validate_config(const RunConfig& config);

GeneratorConfig generator_config(const RunConfig& config, int vocab_size, int num_labels);
DiscriminatorConfig discriminator_config(const RunConfig& config, int vocab_size, int num_labels);
EvaluatorConfig evaluator_config(const RunConfig& config, int vocab_size, int num_labels, Tensor embedding);

// CRC-32 over the architecture-defining fields (dims, vocabulary size,
// sequence length, label count, discriminator layout). Checkpoints carry it
// so that weights are never loaded into a mismatched model.
std::uint32_t config_digest(const RunConfig& config, int vocab_size, int num_labels);

}  // namespace mtgan
