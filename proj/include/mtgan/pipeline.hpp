#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "mtgan/checkpoint.hpp"
#include "mtgan/config.hpp"
#include "mtgan/corpus.hpp"
#include "mtgan/evaluation.hpp"
#include "mtgan/generator.hpp"
#include "mtgan/grammar.hpp"

namespace mtgan {

namespace fs = std::filesystem;

// File names inside a run directory.
inline constexpr std::string_view kConfigFile = "config.txt";
inline constexpr std::string_view kPretrainGCheckpoint = "pretrain_g.ckpt";
inline constexpr std::string_view kPretrainGMetrics = "pretrain_g.csv";
inline constexpr std::string_view kPretrainDCheckpoint = "pretrain_d.ckpt";
inline constexpr std::string_view kPretrainDMetrics = "pretrain_d.csv";
inline constexpr std::string_view kAdvCheckpoint = "adv.ckpt";
inline constexpr std::string_view kAdvMetrics = "metrics.csv";
inline constexpr std::string_view kEvalCsv = "eval.csv";
inline constexpr std::string_view kEvalText = "eval.txt";

// A preset name ("separable", "overlapping") or a path to a grammar file.
GrammarSpec resolve_grammar(std::string_view name_or_path, int seq_len);

struct CorpusCounts {
  std::size_t total = 0;
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
  int vocab_size = 0;
};

// Writes corpus.tsv, train.tsv, valid.tsv, test.tsv (70/10/20 split),
// vocab.txt and grammar.txt into out_dir.
CorpusCounts corpus_gen(const GrammarSpec& grammar, std::size_t n, std::uint64_t seed, const fs::path& out_dir);

struct CorpusData {
  Vocab vocab;
  Corpus train;
  Corpus valid;
  Corpus test;
  int num_labels = 0;
  int seq_len = 0;
};
CorpusData load_corpus_dir(const fs::path& dir);

// Exclusive advisory lock on <run_dir>/.lock, released on destruction or
// process exit. Throws ValidationError when another process holds it.
class RunLock {
 public:
  explicit RunLock(const fs::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

// Rebuilds a generator from the "g." blocks of a checkpoint. Dropout is a
// training setting and is not stored, so callers that train supply it.
Generator generator_from_checkpoint(const Checkpoint& checkpoint, double output_dropout = 0.0);

// The pipeline commands. Each writes its artifacts into config.run_dir,
// reports progress on `log` and throws mtgan errors on failure.
void run_pretrain_g(const RunConfig& config, bool resume, std::ostream& log);
void run_pretrain_d(const RunConfig& config, std::ostream& log);
void run_advtrain(const RunConfig& config, bool resume, std::ostream& log);
// n decoded sequences, "label<TAB>tokens" per line.
void run_sample(const fs::path& checkpoint, int label, int n, std::uint64_t seed, const fs::path& vocab_path,
                std::ostream& out);
// Evaluates the generator stored in `checkpoint` and writes eval.csv and
// eval.txt into out_dir. Suites with too little data are marked skipped.
MetricsReport run_eval(const fs::path& checkpoint, std::string_view suite, std::uint64_t seed, const RunConfig& config,
                       const fs::path& out_dir, std::ostream& log);

}  // namespace mtgan
