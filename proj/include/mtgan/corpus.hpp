#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mtgan/numerics.hpp"

namespace mtgan {

inline constexpr int kBosId = 0;
inline constexpr int kPadId = 1;  // also UNK
inline constexpr std::string_view kBosToken = "<bos>";
inline constexpr std::string_view kPadToken = "<pad>";

// A fixed-length token-id sequence plus its condition label.
struct LabeledSequence {
  int label = 0;
  std::vector<int> tokens;

  friend bool operator==(const LabeledSequence&, const LabeledSequence&) = default;
  friend auto operator<=>(const LabeledSequence&, const LabeledSequence&) = default;
};

using Corpus = std::vector<LabeledSequence>;

// Packs sequences of equal length into a (batch x T) id matrix.
TokenMatrix to_token_matrix(std::span<const LabeledSequence> seqs);
std::vector<int> labels_of(std::span<const LabeledSequence> seqs);

class Vocab {
 public:
  // Reserved tokens only.
  Vocab();
  explicit Vocab(const std::vector<std::string>& tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;  // UNK (= PAD id) when unknown
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Adds a token if absent and returns its id.
  int add(std::string_view token);

  struct Encoded {
    std::vector<int> ids;
    int unknown = 0;
  };
  Encoded encode(std::span<const std::string> words) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  void save(std::ostream& os) const;
  static Vocab load(std::istream& is);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Reserved tokens, then every distinct corpus word in lexicographic order.
Vocab build_vocab(std::span<const std::vector<std::string>> texts);

// First `length` tokens, right-padded with PAD.
std::vector<int> crop_pad(std::span<const int> tokens, int length);

// Corpus file: one `<label>\t<tok tok ...>` record per line.
struct TextRecord {
  int label = 0;
  std::vector<std::string> words;
};
std::vector<TextRecord> read_text_corpus(std::istream& is);
void write_corpus(std::ostream& os, std::span<const LabeledSequence> corpus, const Vocab& vocab);
// Encodes text records, cropping/padding to `length`; unknown words map to UNK.
struct EncodedCorpus {
  Corpus sequences;
  int unknown_tokens = 0;
};
EncodedCorpus encode_corpus(std::span<const TextRecord> records, const Vocab& vocab, int length);

struct SplitDataset {
  Corpus train;
  Corpus validation;
  Corpus test;
};

// Stratified by label. Identical sequences always land in the same split.
// Throws ValidationError for corpora smaller than 10 or ratios not summing to 1.
SplitDataset split_corpus(std::span<const LabeledSequence> corpus, std::array<double, 3> ratios,
                          std::uint64_t seed);

struct SkipGramOptions {
  int dim = 32;
  int epochs = 5;
  int window = 2;
  int negatives = 5;
  double learning_rate = 0.025;
};

// Skip-gram with negative sampling. Returns word plus context vectors (V x dim).
Tensor pretrain_embeddings(std::span<const LabeledSequence> corpus, int vocab_size,
                           const SkipGramOptions& options, std::uint64_t seed);

}  // namespace mtgan
