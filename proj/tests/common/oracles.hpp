#pragma once

// Straight-line reference forwards written from the model equations with
// scalar loops. They share no code with the library beyond parameter storage.

#include <algorithm>
#include <cmath>
#include <vector>

#include "mtgan/corpus.hpp"
#include "mtgan/discriminator.hpp"
#include "mtgan/generator.hpp"

namespace oracle {

using mtgan::Tensor;

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Cell {
  std::vector<double> h, c;
};

// One LSTM step on the concatenation [h, input] with gate blocks i, f, o, g.
inline void lstm_step(const Tensor& w, const Tensor& b, const std::vector<double>& input, Cell& s) {
  const int hd = static_cast<int>(s.h.size());
  std::vector<double> z = s.h;
  z.insert(z.end(), input.begin(), input.end());
  std::vector<double> a(static_cast<std::size_t>(4 * hd));
  for (int j = 0; j < 4 * hd; ++j) {
    double acc = b(0, j);
    for (std::size_t k = 0; k < z.size(); ++k) acc += z[k] * w(static_cast<Eigen::Index>(k), j);
    a[static_cast<std::size_t>(j)] = acc;
  }
  for (int j = 0; j < hd; ++j) {
    const auto u = static_cast<std::size_t>(j);
    const double i = sig(a[u]);
    const double f = sig(a[u + hd]);
    const double o = sig(a[u + 2 * hd]);
    const double g = std::tanh(a[u + 3 * hd]);
    s.c[u] = f * s.c[u] + i * g;
    s.h[u] = o * std::tanh(s.c[u]);
  }
}

// Per-step logits of the generator for one sequence (teacher forced).
inline std::vector<std::vector<double>> generator_logits(const mtgan::Generator& g, const mtgan::LabeledSequence& seq) {
  const auto& cfg = g.config();
  const auto& p = g.params();
  Cell s{std::vector<double>(static_cast<std::size_t>(cfg.hidden_dim), 0.0),
         std::vector<double>(static_cast<std::size_t>(cfg.hidden_dim), 0.0)};
  std::vector<std::vector<double>> out;
  for (std::size_t t = 0; t < seq.tokens.size(); ++t) {
    const int prev = t == 0 ? mtgan::kBosId : seq.tokens[t - 1];
    std::vector<double> x;
    for (int k = 0; k < cfg.embed_dim; ++k) x.push_back(p["embedding"].value(prev, k));
    for (int k = 0; k < cfg.cond_dim; ++k) x.push_back(p["condition"].value(seq.label, k));
    lstm_step(p["lstm.W"].value, p["lstm.b"].value, x, s);
    std::vector<double> logits(static_cast<std::size_t>(cfg.vocab_size));
    for (int v = 0; v < cfg.vocab_size; ++v) {
      double acc = p["out.b"].value(0, v);
      for (int k = 0; k < cfg.hidden_dim; ++k) acc += s.h[static_cast<std::size_t>(k)] * p["out.W"].value(k, v);
      logits[static_cast<std::size_t>(v)] = acc;
    }
    out.push_back(std::move(logits));
  }
  return out;
}

// log G(seq | y) with every position counted.
inline double generator_log_prob(const mtgan::Generator& g, const mtgan::LabeledSequence& seq) {
  const auto logits = generator_logits(g, seq);
  double total = 0.0;
  for (std::size_t t = 0; t < seq.tokens.size(); ++t) {
    double m = -1e300;
    for (double v : logits[t]) m = std::max(m, v);
    double z = 0.0;
    for (double v : logits[t]) z += std::exp(v - m);
    total += logits[t][static_cast<std::size_t>(seq.tokens[t])] - m - std::log(z);
  }
  return total;
}

inline double head(const mtgan::Discriminator& d, const std::vector<double>& features, int label) {
  const Tensor& w = d.params()["head.W"].value;
  double z = d.params()["head.b"].value(0, 0);
  for (std::size_t k = 0; k < features.size(); ++k) z += features[k] * w(static_cast<Eigen::Index>(k), 0);
  if (d.config().conditional) z += w(static_cast<Eigen::Index>(features.size()) + label, 0);
  return sig(z);
}

inline double fasttext(const mtgan::Discriminator& d, const mtgan::LabeledSequence& seq) {
  const auto& cfg = d.config();
  std::vector<double> f(static_cast<std::size_t>(cfg.embed_dim), 0.0);
  double count = 0;
  const auto n = seq.tokens.size();
  for (std::size_t t = 0; t < n; ++t) {
    const int tok = seq.tokens[t];
    if (tok == mtgan::kPadId) continue;
    for (int k = 0; k < cfg.embed_dim; ++k) f[static_cast<std::size_t>(k)] += d.embedding()(tok, k);
    count += 1;
    if (cfg.use_bigrams && t + 1 < n && seq.tokens[t + 1] != mtgan::kPadId) {
      const int bucket = mtgan::bigram_bucket(tok, seq.tokens[t + 1], cfg.bigram_buckets);
      for (int k = 0; k < cfg.embed_dim; ++k) {
        f[static_cast<std::size_t>(k)] += d.params()["fasttext.bigram"].value(bucket, k);
      }
      count += 1;
    }
  }
  if (count > 0) {
    for (double& v : f) v /= count;
  }
  return head(d, f, seq.label);
}

inline double cnn(const mtgan::Discriminator& d, const mtgan::LabeledSequence& seq) {
  const auto& cfg = d.config();
  const auto& p = d.params();
  const int T = static_cast<int>(seq.tokens.size());
  const int k = cfg.embed_dim;
  std::vector<double> x;
  for (int h : cfg.filter_widths) {
    const Tensor& w = p["cnn.W" + std::to_string(h)].value;
    const Tensor& b = p["cnn.b" + std::to_string(h)].value;
    for (int j = 0; j < cfg.filters_per_width; ++j) {
      double best = -1e300;
      for (int i = 0; i + h <= T; ++i) {
        double acc = b(0, j);
        for (int q = 0; q < h; ++q) {
          for (int e = 0; e < k; ++e) acc += d.embedding()(seq.tokens[static_cast<std::size_t>(i + q)], e) * w(q * k + e, j);
        }
        best = std::max(best, std::max(acc, 0.0));
      }
      x.push_back(best);
    }
  }
  const auto m = x.size();
  std::vector<double> y(m);
  for (std::size_t a = 0; a < m; ++a) {
    double hh = p["highway.bh"].value(0, static_cast<Eigen::Index>(a));
    double tt = p["highway.bt"].value(0, static_cast<Eigen::Index>(a));
    for (std::size_t q = 0; q < m; ++q) {
      hh += x[q] * p["highway.Wh"].value(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(a));
      tt += x[q] * p["highway.Wt"].value(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(a));
    }
    const double gate = sig(tt);
    y[a] = gate * std::max(hh, 0.0) + (1 - gate) * x[a];
  }
  return head(d, y, seq.label);
}

inline double birnn(const mtgan::Discriminator& d, const mtgan::LabeledSequence& seq) {
  const auto& cfg = d.config();
  const auto& p = d.params();
  const int T = static_cast<int>(seq.tokens.size());
  const int hd = cfg.rnn_hidden;
  auto embed = [&](int t) {
    std::vector<double> x;
    for (int e = 0; e < cfg.embed_dim; ++e) x.push_back(d.embedding()(seq.tokens[static_cast<std::size_t>(t)], e));
    return x;
  };
  std::vector<std::vector<double>> hs(static_cast<std::size_t>(T));
  Cell fw{std::vector<double>(static_cast<std::size_t>(hd), 0.0), std::vector<double>(static_cast<std::size_t>(hd), 0.0)};
  for (int t = 0; t < T; ++t) {
    lstm_step(p["birnn.fw.W"].value, p["birnn.fw.b"].value, embed(t), fw);
    hs[static_cast<std::size_t>(t)] = fw.h;
  }
  Cell bw{std::vector<double>(static_cast<std::size_t>(hd), 0.0), std::vector<double>(static_cast<std::size_t>(hd), 0.0)};
  for (int t = T - 1; t >= 0; --t) {
    lstm_step(p["birnn.bw.W"].value, p["birnn.bw.b"].value, embed(t), bw);
    auto& h = hs[static_cast<std::size_t>(t)];
    h.insert(h.end(), bw.h.begin(), bw.h.end());
  }
  std::vector<double> scores;
  for (int t = 0; t < T; ++t) {
    double score = 0;
    for (int a = 0; a < cfg.attention_dim; ++a) {
      double acc = p["attn.b"].value(0, a);
      for (int q = 0; q < 2 * hd; ++q) acc += hs[static_cast<std::size_t>(t)][static_cast<std::size_t>(q)] * p["attn.W"].value(q, a);
      score += std::tanh(acc) * p["attn.u"].value(a, 0);
    }
    scores.push_back(score);
  }
  double m = -1e300;
  for (double s : scores) m = std::max(m, s);
  double z = 0;
  for (double s : scores) z += std::exp(s - m);
  std::vector<double> pooled(static_cast<std::size_t>(2 * hd), 0.0);
  for (int t = 0; t < T; ++t) {
    const double alpha = std::exp(scores[static_cast<std::size_t>(t)] - m) / z;
    for (int q = 0; q < 2 * hd; ++q) pooled[static_cast<std::size_t>(q)] += alpha * hs[static_cast<std::size_t>(t)][static_cast<std::size_t>(q)];
  }
  return head(d, pooled, seq.label);
}

inline double discriminator(const mtgan::Discriminator& d, const mtgan::LabeledSequence& seq) {
  switch (d.kind()) {
    case mtgan::DiscriminatorKind::kFastText:
      return fasttext(d, seq);
    case mtgan::DiscriminatorKind::kCnn:
      return cnn(d, seq);
    case mtgan::DiscriminatorKind::kBiRnnAttention:
      return birnn(d, seq);
  }
  return 0.0;
}

// Every sequence of length `steps` over ids 0..vocab-1, in odometer order.
inline std::vector<mtgan::LabeledSequence> all_sequences(int vocab, int steps, int label) {
  std::vector<mtgan::LabeledSequence> out;
  int total = 1;
  for (int t = 0; t < steps; ++t) total *= vocab;
  for (int code = 0; code < total; ++code) {
    mtgan::LabeledSequence s{label, {}};
    int c = code;
    for (int t = 0; t < steps; ++t) {
      s.tokens.push_back(c % vocab);
      c /= vocab;
    }
    out.push_back(s);
  }
  return out;
}

// Exact E[D(X)] over completions of the first `prefix` tokens, from the oracle
// forward pass: P(completion | prefix) = P(full) / sum over the prefix's fulls.
inline double closed_form_reward(const mtgan::LabeledSequence& seq, int prefix, const mtgan::Generator& g,
                                 const mtgan::Discriminator& d) {
  double mass = 0.0, weighted = 0.0;
  for (const auto& s : all_sequences(g.config().vocab_size, static_cast<int>(seq.tokens.size()), seq.label)) {
    if (!std::equal(s.tokens.begin(), s.tokens.begin() + prefix, seq.tokens.begin())) continue;
    const double p = std::exp(generator_log_prob(g, s));
    mass += p;
    weighted += p * discriminator(d, s);
  }
  return weighted / mass;
}

}  // namespace oracle
