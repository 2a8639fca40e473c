#include "mtgan/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace mtgan {

TokenMatrix to_token_matrix(std::span<const LabeledSequence> seqs) {
  if (seqs.empty()) return TokenMatrix(0, 0);
  const auto len = static_cast<Eigen::Index>(seqs.front().tokens.size());
  TokenMatrix out(static_cast<Eigen::Index>(seqs.size()), len);
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    if (static_cast<Eigen::Index>(seqs[b].tokens.size()) != len) {
      throw DimensionError("to_token_matrix: ragged batch");
    }
    for (Eigen::Index t = 0; t < len; ++t) out(static_cast<Eigen::Index>(b), t) = seqs[b].tokens[t];
  }
  return out;
}

std::vector<int> labels_of(std::span<const LabeledSequence> seqs) {
  std::vector<int> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(s.label);
  return out;
}

Vocab::Vocab() {
  add(kBosToken);
  add(kPadToken);
}

Vocab::Vocab(const std::vector<std::string>& tokens) : Vocab() {
  for (const auto& t : tokens) add(t);
}

int Vocab::add(std::string_view token) {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  const int id = size();
  tokens_.emplace_back(token);
  index_.emplace(std::string(token), id);
  return id;
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kPadId : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.contains(std::string(token)); }

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size()) throw IndexError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

Vocab::Encoded Vocab::encode(std::span<const std::string> words) const {
  Encoded out;
  out.ids.reserve(words.size());
  for (const auto& w : words) {
    auto it = index_.find(w);
    if (it == index_.end()) {
      out.ids.push_back(kPadId);
      ++out.unknown;
    } else {
      out.ids.push_back(it->second);
    }
  }
  return out;
}

std::vector<std::string> Vocab::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(token(id));
  return out;
}

void Vocab::save(std::ostream& os) const {
  for (const auto& t : tokens_) os << t << '\n';
}

Vocab Vocab::load(std::istream& is) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < 2 || lines[0] != kBosToken || lines[1] != kPadToken) {
    throw ValidationError("vocab file must start with reserved tokens <bos> and <pad>");
  }
  Vocab v;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (v.contains(lines[i])) throw ValidationError("vocab file: duplicate token on line " + std::to_string(i));
    v.add(lines[i]);
  }
  return v;
}

Vocab build_vocab(std::span<const std::vector<std::string>> texts) {
  std::set<std::string> words;
  for (const auto& text : texts) {
    for (const auto& w : text) {
      if (w != kBosToken && w != kPadToken) words.insert(w);
    }
  }
  return Vocab(std::vector<std::string>(words.begin(), words.end()));
}

std::vector<int> crop_pad(std::span<const int> tokens, int length) {
  std::vector<int> out(static_cast<std::size_t>(length), kPadId);
  const auto n = std::min<std::size_t>(tokens.size(), out.size());
  std::copy_n(tokens.begin(), n, out.begin());
  return out;
}

std::vector<TextRecord> read_text_corpus(std::istream& is) {
  std::vector<TextRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ValidationError("corpus line " + std::to_string(line_no) + ": expected <label>\\t<tokens>");
    }
    TextRecord rec;
    try {
      std::size_t used = 0;
      rec.label = std::stoi(line.substr(0, tab), &used);
      if (used != tab) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ValidationError("corpus line " + std::to_string(line_no) + ": bad label");
    }
    std::istringstream words(line.substr(tab + 1));
    std::string w;
    while (words >> w) rec.words.push_back(w);
    out.push_back(std::move(rec));
  }
  return out;
}

void write_corpus(std::ostream& os, std::span<const LabeledSequence> corpus, const Vocab& vocab) {
  for (const auto& seq : corpus) {
    os << seq.label << '\t';
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
      if (i) os << ' ';
      os << vocab.token(seq.tokens[i]);
    }
    os << '\n';
  }
}

EncodedCorpus encode_corpus(std::span<const TextRecord> records, const Vocab& vocab, int length) {
  EncodedCorpus out;
  out.sequences.reserve(records.size());
  for (const auto& rec : records) {
    auto enc = vocab.encode(rec.words);
    out.unknown_tokens += enc.unknown;
    out.sequences.push_back(LabeledSequence{rec.label, crop_pad(enc.ids, length)});
  }
  return out;
}

namespace {

// Largest-remainder apportionment of `total` across weights.
std::vector<std::size_t> apportion(const std::vector<std::size_t>& sizes, std::size_t total, double ratio) {
  std::vector<std::size_t> out(sizes.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const double q = static_cast<double>(sizes[i]) * ratio;
    out[i] = static_cast<std::size_t>(std::floor(q));
    assigned += out[i];
    remainders.emplace_back(q - std::floor(q), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total && k < remainders.size(); ++k) {
    const std::size_t i = remainders[k].second;
    if (out[i] < sizes[i]) {
      ++out[i];
      ++assigned;
    }
  }
  return out;
}

}  // namespace

SplitDataset split_corpus(std::span<const LabeledSequence> corpus, std::array<double, 3> ratios,
                          std::uint64_t seed) {
  if (corpus.size() < 10) throw ValidationError("split: corpus must contain at least 10 sequences");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 ||
      ratios[2] < 0) {
    throw ValidationError("split: ratios must be nonnegative and sum to 1");
  }

  // Group identical sequences per label, preserving first-appearance order.
  std::map<int, std::vector<std::vector<std::size_t>>> groups;
  std::map<LabeledSequence, std::size_t> group_of;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto& label_groups = groups[corpus[i].label];
    auto [it, inserted] = group_of.emplace(corpus[i], label_groups.size());
    if (inserted) label_groups.emplace_back();
    label_groups[it->second].push_back(i);
  }

  std::vector<int> labels;
  std::vector<std::size_t> sizes;
  for (const auto& [label, gs] : groups) {
    labels.push_back(label);
    std::size_t n = 0;
    for (const auto& g : gs) n += g.size();
    sizes.push_back(n);
  }
  const auto n = static_cast<double>(corpus.size());
  const auto train_total = static_cast<std::size_t>(std::llround(n * ratios[0]));
  const auto valid_total = static_cast<std::size_t>(std::llround(n * ratios[1]));
  const auto train_q = apportion(sizes, train_total, ratios[0]);
  const auto valid_q = apportion(sizes, valid_total, ratios[1]);

  SplitDataset out;
  for (std::size_t li = 0; li < labels.size(); ++li) {
    auto gs = groups[labels[li]];
    RngStream rng(seed, stream_id({tag(Purpose::kSplit), static_cast<std::uint64_t>(labels[li])}));
    rng.shuffle(gs);
    std::array<std::ptrdiff_t, 3> remaining = {static_cast<std::ptrdiff_t>(train_q[li]),
                                               static_cast<std::ptrdiff_t>(valid_q[li]),
                                               static_cast<std::ptrdiff_t>(sizes[li] - train_q[li] - valid_q[li])};
    std::array<Corpus*, 3> dest = {&out.train, &out.validation, &out.test};
    for (const auto& g : gs) {
      const auto size = static_cast<std::ptrdiff_t>(g.size());
      int chosen = -1;
      for (int s = 0; s < 3; ++s) {
        if (remaining[s] >= size) {
          chosen = s;
          break;
        }
      }
      if (chosen < 0) {
        chosen = static_cast<int>(std::max_element(remaining.begin(), remaining.end()) - remaining.begin());
      }
      remaining[chosen] -= size;
      for (std::size_t idx : g) dest[chosen]->push_back(corpus[idx]);
    }
  }
  return out;
}

}  // namespace mtgan
