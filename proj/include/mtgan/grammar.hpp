#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtgan/corpus.hpp"

namespace mtgan {

// One generation position: a categorical distribution over tokens. Marker
// slots carry the label-identifying tokens of a separable grammar.
struct SlotSpec {
  std::vector<std::pair<std::string, double>> outcomes;
  bool marker = false;
  int line = 0;
};

struct TemplateSpec {
  int label = 0;
  double weight = 1.0;
  std::vector<SlotSpec> slots;
  int line = 0;
};

// Label-conditioned template grammar. Templates shorter than seq_len are
// right-padded with PAD.
struct GrammarSpec {
  int seq_len = 20;
  int num_labels = 2;
  std::vector<double> label_prior;  // empty = uniform
  bool separable = false;
  std::vector<TemplateSpec> templates;
};

// Key/value text format; see README for the grammar. Throws ValidationError
// citing the offending line.
GrammarSpec parse_grammar(std::istream& is);
GrammarSpec parse_grammar_string(std::string_view text);
std::string format_grammar(const GrammarSpec& spec);
void validate_grammar(const GrammarSpec& spec);

// Built-in grammars: "separable" and "overlapping".
GrammarSpec preset_grammar(std::string_view name, int seq_len = 20);

struct SequenceNll {
  double nats = 0.0;
  bool zero_probability = false;
};

// Validated grammar compiled to token ids.
class Grammar {
 public:
  explicit Grammar(GrammarSpec spec);

  const GrammarSpec& spec() const { return spec_; }
  const Vocab& vocab() const { return vocab_; }
  int seq_len() const { return spec_.seq_len; }
  double label_prior(int label) const { return prior_[static_cast<std::size_t>(label)]; }

  LabeledSequence sample(RngStream& rng) const;
  LabeledSequence sample(int label, RngStream& rng) const;

  // -log p(seq | label), marginalized over templates. Zero-probability
  // sequences return +inf with the flag set.
  SequenceNll exact_sequence_nll(const LabeledSequence& seq) const;

  // Exact H(X | Y = label) in nats. Requires the label's templates to be
  // distinguishable (disjoint supports at some position); throws otherwise.
  double entropy(int label) const;
  // Prior-weighted conditional entropy H(X | Y).
  double entropy() const;

 private:
  struct Slot {
    std::vector<int> ids;
    std::vector<double> probs;
  };
  struct Template {
    int label;
    double weight;
    std::vector<Slot> slots;  // exactly seq_len, PAD-filled
  };

  GrammarSpec spec_;
  Vocab vocab_;
  std::vector<double> prior_;
  std::vector<Template> templates_;
  std::vector<std::vector<std::size_t>> by_label_;
};

// n i.i.d. draws; item i uses its own stream so the result is a pure
// function of (grammar, n, seed).
Corpus generate_corpus(const Grammar& grammar, std::size_t n, std::uint64_t seed);

}  // namespace mtgan
