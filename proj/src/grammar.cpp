#include "mtgan/grammar.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace mtgan {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ValidationError("grammar line " + std::to_string(line) + ": " + msg);
}

double parse_number(const std::string& text, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(line, "expected a number, got '" + text + "'");
  }
}

int parse_int(const std::string& text, int line) {
  const double v = parse_number(text, line);
  if (v != std::floor(v)) fail(line, "expected an integer, got '" + text + "'");
  return static_cast<int>(v);
}

SlotSpec parse_slot(const std::string& value, bool marker, int line) {
  SlotSpec slot;
  slot.marker = marker;
  slot.line = line;
  std::istringstream in(value);
  std::string item;
  while (in >> item) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      slot.outcomes.emplace_back(item, 1.0);
    } else {
      slot.outcomes.emplace_back(item.substr(0, eq), parse_number(item.substr(eq + 1), line));
    }
  }
  if (slot.outcomes.empty()) fail(line, "slot has no outcomes");
  return slot;
}

double slot_entropy(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace

GrammarSpec parse_grammar(std::istream& is) {
  GrammarSpec spec;
  spec.templates.clear();
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const auto colon = text.find(':');
    if (colon == std::string::npos) fail(line, "expected 'key: value'");
    const std::string key = trim(text.substr(0, colon));
    const std::string value = trim(text.substr(colon + 1));

    if (key == "seq_len") {
      spec.seq_len = parse_int(value, line);
    } else if (key == "labels") {
      spec.num_labels = parse_int(value, line);
    } else if (key == "label_prior") {
      std::istringstream in(value);
      std::string tok;
      spec.label_prior.clear();
      while (in >> tok) spec.label_prior.push_back(parse_number(tok, line));
    } else if (key == "separable") {
      if (value == "true") {
        spec.separable = true;
      } else if (value == "false") {
        spec.separable = false;
      } else {
        fail(line, "separable must be true or false");
      }
    } else if (key == "template") {
      TemplateSpec t;
      t.line = line;
      std::istringstream in(value);
      std::string item;
      bool has_label = false;
      while (in >> item) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) fail(line, "template attributes are key=value");
        const std::string k = item.substr(0, eq);
        const std::string v = item.substr(eq + 1);
        if (k == "label") {
          t.label = parse_int(v, line);
          has_label = true;
        } else if (k == "weight") {
          t.weight = parse_number(v, line);
        } else {
          fail(line, "unknown template attribute '" + k + "'");
        }
      }
      if (!has_label) fail(line, "template requires label=");
      spec.templates.push_back(std::move(t));
    } else if (key == "slot" || key == "marker") {
      if (spec.templates.empty()) fail(line, "slot outside of a template");
      spec.templates.back().slots.push_back(parse_slot(value, key == "marker", line));
    } else {
      fail(line, "unknown key '" + key + "'");
    }
  }
  validate_grammar(spec);
  return spec;
}

GrammarSpec parse_grammar_string(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_grammar(in);
}

std::string format_grammar(const GrammarSpec& spec) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "seq_len: " << spec.seq_len << '\n';
  os << "labels: " << spec.num_labels << '\n';
  if (!spec.label_prior.empty()) {
    os << "label_prior:";
    for (double p : spec.label_prior) os << ' ' << p;
    os << '\n';
  }
  os << "separable: " << (spec.separable ? "true" : "false") << '\n';
  for (const auto& t : spec.templates) {
    os << "\ntemplate: label=" << t.label << " weight=" << t.weight << '\n';
    for (const auto& s : t.slots) {
      os << (s.marker ? "marker:" : "slot:");
      for (const auto& [tok, p] : s.outcomes) os << ' ' << tok << '=' << p;
      os << '\n';
    }
  }
  return os.str();
}

void validate_grammar(const GrammarSpec& spec) {
  constexpr double kTol = 1e-9;
  if (spec.seq_len < 1) throw ValidationError("grammar: seq_len must be positive");
  if (spec.num_labels < 1) throw ValidationError("grammar: labels must be positive");
  if (!spec.label_prior.empty()) {
    if (static_cast<int>(spec.label_prior.size()) != spec.num_labels) {
      throw ValidationError("grammar: label_prior needs one entry per label");
    }
    double sum = 0.0;
    for (double p : spec.label_prior) {
      if (!(p >= 0.0)) throw ValidationError("grammar: label_prior entries must be nonnegative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kTol) throw ValidationError("grammar: label_prior must sum to 1");
  }
  if (spec.templates.empty()) throw ValidationError("grammar: no templates");

  std::vector<double> weight_sum(static_cast<std::size_t>(spec.num_labels), 0.0);
  std::vector<int> first_line(static_cast<std::size_t>(spec.num_labels), 0);
  for (const auto& t : spec.templates) {
    if (t.label < 0 || t.label >= spec.num_labels) fail(t.line, "label out of range");
    if (!(t.weight > 0.0) || !std::isfinite(t.weight)) fail(t.line, "template weight must be positive");
    if (static_cast<int>(t.slots.size()) > spec.seq_len) fail(t.line, "template has more slots than seq_len");
    if (t.slots.empty()) fail(t.line, "template has no slots");
    weight_sum[static_cast<std::size_t>(t.label)] += t.weight;
    if (!first_line[static_cast<std::size_t>(t.label)]) first_line[static_cast<std::size_t>(t.label)] = t.line;
    for (const auto& s : t.slots) {
      double sum = 0.0;
      std::set<std::string> seen;
      for (const auto& [tok, p] : s.outcomes) {
        if (tok.empty()) fail(s.line, "empty token");
        if (tok == kBosToken || tok == kPadToken) fail(s.line, "reserved token '" + tok + "' in slot");
        if (!(p > 0.0) || !std::isfinite(p)) fail(s.line, "probability for '" + tok + "' must be positive");
        if (!seen.insert(tok).second) fail(s.line, "duplicate token '" + tok + "' in slot");
        sum += p;
      }
      if (std::abs(sum - 1.0) > kTol) {
        std::ostringstream msg;
        msg << std::setprecision(12) << "slot probabilities sum to " << sum << " (expected 1)";
        fail(s.line, msg.str());
      }
    }
  }
  for (int y = 0; y < spec.num_labels; ++y) {
    const auto w = weight_sum[static_cast<std::size_t>(y)];
    if (w == 0.0) throw ValidationError("grammar: label " + std::to_string(y) + " has no templates");
    if (std::abs(w - 1.0) > kTol) {
      fail(first_line[static_cast<std::size_t>(y)],
           "template weights for label " + std::to_string(y) + " sum to " + std::to_string(w) + " (expected 1)");
    }
  }

  if (spec.separable) {
    std::vector<std::set<std::string>> markers(static_cast<std::size_t>(spec.num_labels));
    for (const auto& t : spec.templates) {
      bool has_marker = false;
      for (const auto& s : t.slots) {
        if (!s.marker) continue;
        has_marker = true;
        for (const auto& o : s.outcomes) markers[static_cast<std::size_t>(t.label)].insert(o.first);
      }
      if (!has_marker) fail(t.line, "separable grammar: template has no marker slot");
    }
    for (const auto& t : spec.templates) {
      for (const auto& s : t.slots) {
        for (const auto& o : s.outcomes) {
          for (int y = 0; y < spec.num_labels; ++y) {
            if (y != t.label && markers[static_cast<std::size_t>(y)].contains(o.first)) {
              fail(s.line, "separable grammar: marker token '" + o.first + "' of label " + std::to_string(y) +
                               " appears under label " + std::to_string(t.label));
            }
          }
        }
      }
    }
  }
}

GrammarSpec preset_grammar(std::string_view name, int seq_len) {
  if (seq_len < 8) throw ValidationError("preset grammars need seq_len >= 8");
  const bool separable = name == "separable";
  if (!separable && name != "overlapping") {
    throw ValidationError("unknown grammar preset '" + std::string(name) + "'");
  }
  static constexpr double kBase[4] = {0.5, 0.3, 0.15, 0.05};
  static constexpr char kSuffix[4] = {'a', 'b', 'c', 'd'};

  // Template 1 swaps in its own tokens over a four-position window so the two
  // templates of a label are distinguishable.
  const int variant_begin = (2 * seq_len) / 5;
  const int variant_end = variant_begin + 4;

  GrammarSpec spec;
  spec.seq_len = seq_len;
  spec.num_labels = 2;
  spec.separable = separable;
  for (int label = 0; label < 2; ++label) {
    for (int variant = 0; variant < 2; ++variant) {
      TemplateSpec t;
      t.label = label;
      t.weight = variant == 0 ? 0.6 : 0.4;
      for (int p = 0; p < seq_len; ++p) {
        const bool alt = variant == 1 && p >= variant_begin && p < variant_end;
        const std::string pos = std::to_string(p);
        SlotSpec s;
        if (separable && p % 5 == 1) {
          s.marker = true;
          const char side = label == 0 ? 'p' : 'n';
          s.outcomes = {{std::string("m") + side + pos + "a", 0.7}, {std::string("m") + side + pos + "b", 0.3}};
        } else if (p % 4 == 3) {
          s.outcomes = {{(alt ? "y" : "s") + pos, 1.0}};
        } else {
          const int shift = label == 0 ? p : p + 2;
          for (int j = 0; j < 4; ++j) {
            s.outcomes.emplace_back((alt ? "x" : "w") + pos + kSuffix[j], kBase[(j + shift) % 4]);
          }
        }
        t.slots.push_back(std::move(s));
      }
      spec.templates.push_back(std::move(t));
    }
  }
  validate_grammar(spec);
  return spec;
}

Grammar::Grammar(GrammarSpec spec) : spec_(std::move(spec)) {
  validate_grammar(spec_);
  std::set<std::string> tokens;
  for (const auto& t : spec_.templates) {
    for (const auto& s : t.slots) {
      for (const auto& o : s.outcomes) tokens.insert(o.first);
    }
  }
  vocab_ = Vocab(std::vector<std::string>(tokens.begin(), tokens.end()));

  prior_ = spec_.label_prior;
  if (prior_.empty()) prior_.assign(static_cast<std::size_t>(spec_.num_labels), 1.0 / spec_.num_labels);

  by_label_.assign(static_cast<std::size_t>(spec_.num_labels), {});
  for (const auto& t : spec_.templates) {
    Template ct{t.label, t.weight, {}};
    for (int p = 0; p < spec_.seq_len; ++p) {
      Slot slot;
      if (p < static_cast<int>(t.slots.size())) {
        for (const auto& [tok, prob] : t.slots[static_cast<std::size_t>(p)].outcomes) {
          slot.ids.push_back(vocab_.id(tok));
          slot.probs.push_back(prob);
        }
      } else {
        slot.ids = {kPadId};
        slot.probs = {1.0};
      }
      ct.slots.push_back(std::move(slot));
    }
    by_label_[static_cast<std::size_t>(t.label)].push_back(templates_.size());
    templates_.push_back(std::move(ct));
  }
}

LabeledSequence Grammar::sample(RngStream& rng) const {
  return sample(rng.categorical(prior_), rng);
}

LabeledSequence Grammar::sample(int label, RngStream& rng) const {
  if (label < 0 || label >= spec_.num_labels) throw IndexError("grammar: label out of range");
  const auto& candidates = by_label_[static_cast<std::size_t>(label)];
  std::vector<double> weights;
  for (auto idx : candidates) weights.push_back(templates_[idx].weight);
  const Template& t = templates_[candidates[static_cast<std::size_t>(rng.categorical(weights))]];
  LabeledSequence out{label, {}};
  out.tokens.reserve(t.slots.size());
  for (const auto& slot : t.slots) {
    out.tokens.push_back(slot.ids.size() == 1 ? slot.ids[0] : slot.ids[static_cast<std::size_t>(rng.categorical(slot.probs))]);
  }
  return out;
}

SequenceNll Grammar::exact_sequence_nll(const LabeledSequence& seq) const {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (seq.label < 0 || seq.label >= spec_.num_labels ||
      static_cast<int>(seq.tokens.size()) != spec_.seq_len) {
    return {kInf, true};
  }
  std::vector<double> log_terms;
  for (auto idx : by_label_[static_cast<std::size_t>(seq.label)]) {
    const Template& t = templates_[idx];
    double lp = std::log(t.weight);
    for (std::size_t p = 0; p < t.slots.size() && std::isfinite(lp); ++p) {
      const auto& slot = t.slots[p];
      const auto it = std::find(slot.ids.begin(), slot.ids.end(), seq.tokens[p]);
      lp = it == slot.ids.end() ? -kInf : lp + std::log(slot.probs[static_cast<std::size_t>(it - slot.ids.begin())]);
    }
    if (std::isfinite(lp)) log_terms.push_back(lp);
  }
  if (log_terms.empty()) return {kInf, true};
  const double m = *std::max_element(log_terms.begin(), log_terms.end());
  double s = 0.0;
  for (double v : log_terms) s += std::exp(v - m);
  return {-(m + std::log(s)), false};
}

double Grammar::entropy(int label) const {
  const auto& idxs = by_label_.at(static_cast<std::size_t>(label));
  for (std::size_t a = 0; a < idxs.size(); ++a) {
    for (std::size_t b = a + 1; b < idxs.size(); ++b) {
      bool distinguishable = false;
      for (int p = 0; p < spec_.seq_len && !distinguishable; ++p) {
        const auto& sa = templates_[idxs[a]].slots[static_cast<std::size_t>(p)].ids;
        const auto& sb = templates_[idxs[b]].slots[static_cast<std::size_t>(p)].ids;
        distinguishable = std::none_of(sa.begin(), sa.end(), [&](int id) {
          return std::find(sb.begin(), sb.end(), id) != sb.end();
        });
      }
      if (!distinguishable) {
        throw ValidationError("grammar entropy: templates of label " + std::to_string(label) +
                              " are not distinguishable");
      }
    }
  }
  double h = 0.0;
  for (auto idx : idxs) {
    const Template& t = templates_[idx];
    double slots = 0.0;
    for (const auto& s : t.slots) slots += slot_entropy(s.probs);
    h += t.weight * (slots - std::log(t.weight));
  }
  return h;
}

double Grammar::entropy() const {
  double h = 0.0;
  for (int y = 0; y < spec_.num_labels; ++y) h += prior_[static_cast<std::size_t>(y)] * entropy(y);
  return h;
}

Corpus generate_corpus(const Grammar& grammar, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ValidationError("generate_corpus: n must be positive");
  Corpus out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(seed, stream_id({tag(Purpose::kCorpus), i}));
    out.push_back(grammar.sample(rng));
  }
  return out;
}

}  // namespace mtgan
