#include "mtgan/discriminator.hpp"

#include <cmath>

#include "mtgan/lstm.hpp"

namespace mtgan {

std::string to_string(DiscriminatorKind kind) {
  switch (kind) {
    case DiscriminatorKind::kFastText:
      return "fasttext";
    case DiscriminatorKind::kCnn:
      return "cnn";
    case DiscriminatorKind::kBiRnnAttention:
      return "birnn";
  }
  return "unknown";
}

DiscriminatorKind parse_discriminator_kind(std::string_view name) {
  if (name == "fasttext") return DiscriminatorKind::kFastText;
  if (name == "cnn") return DiscriminatorKind::kCnn;
  if (name == "birnn" || name == "birnn-attention") return DiscriminatorKind::kBiRnnAttention;
  throw ValidationError("unknown discriminator kind '" + std::string(name) + "' (expected fasttext, cnn or birnn)");
}

int bigram_bucket(int a, int b, int buckets) {
  std::uint64_t h = static_cast<std::uint64_t>(a) * 0x9E3779B97F4A7C15ULL ^ (static_cast<std::uint64_t>(b) + 0x632BE59BD9B4E019ULL);
  h ^= h >> 29;
  h *= 0xBF58476D1CE4E5B9ULL;
  h ^= h >> 32;
  return static_cast<int>(h % static_cast<std::uint64_t>(buckets));
}

AttentionResult attention_pool(const std::vector<Tensor>& hidden, const Tensor& w, const Tensor& b, const Tensor& u) {
  AttentionResult out;
  const auto steps = static_cast<Eigen::Index>(hidden.size());
  const Eigen::Index batch = hidden.front().rows();
  Tensor scores(batch, steps);
  out.u.reserve(hidden.size());
  for (Eigen::Index t = 0; t < steps; ++t) {
    Tensor pre = hidden[static_cast<std::size_t>(t)] * w;
    pre.rowwise() += b.row(0);
    out.u.push_back(pre.array().tanh().matrix());
    scores.col(t) = out.u.back() * u;
  }
  out.weights = softmax_rows(scores);
  out.pooled = Tensor::Zero(batch, hidden.front().cols());
  for (Eigen::Index t = 0; t < steps; ++t) {
    out.pooled += (hidden[static_cast<std::size_t>(t)].array().colwise() * out.weights.col(t).array()).matrix();
  }
  return out;
}

Tensor highway(const Tensor& x, const Tensor& wh, const Tensor& bh, const Tensor& wt, const Tensor& bt) {
  Tensor h = x * wh;
  h.rowwise() += bh.row(0);
  h = h.cwiseMax(0.0);
  Tensor t = x * wt;
  t.rowwise() += bt.row(0);
  t = sigmoid(t.array()).matrix();
  return (t.array() * h.array() + (1.0 - t.array()) * x.array()).matrix();
}

// ---------------------------------------------------------------------------
// Shared head

Discriminator::Discriminator(const DiscriminatorConfig& config, Tensor embedding)
    : config_(config), embedding_(std::move(embedding)) {
  if (embedding_.rows() != config_.vocab_size || embedding_.cols() != config_.embed_dim) {
    throw DimensionError("discriminator: embedding " + shape_string(embedding_.rows(), embedding_.cols()) +
                         " does not match vocab x embed_dim " + shape_string(config_.vocab_size, config_.embed_dim));
  }
}

void Discriminator::add_head(int feature_dim) {
  feature_dim_ = feature_dim;
  const int in = feature_dim + (config_.conditional ? config_.num_labels : 0);
  // Zero head: D = 1/2 everywhere until trained.
  params_.add("head.W", Tensor::Zero(in, 1));
  params_.add("head.b", Tensor::Zero(1, 1));
}

void Discriminator::check_tokens(const TokenMatrix& tokens) const {
  for (Eigen::Index i = 0; i < tokens.size(); ++i) {
    const int tok = tokens.data()[i];
    if (tok < 0 || tok >= config_.vocab_size) throw IndexError("discriminator: token id " + std::to_string(tok) + " out of range");
  }
}

Vector Discriminator::predict(const TokenMatrix& tokens, std::span<const int> labels) const {
  check_tokens(tokens);
  if (tokens.rows() != static_cast<Eigen::Index>(labels.size())) throw DimensionError("discriminator: label count mismatch");
  const Tensor feats = compute_features(tokens, nullptr);
  const Tensor& w = params_["head.W"].value;
  const double bias = params_["head.b"].value(0, 0);
  Vector out(tokens.rows());
  Vector logits = feats * w.topRows(feature_dim_);
  for (Eigen::Index r = 0; r < tokens.rows(); ++r) {
    double z = logits(r) + bias;
    if (config_.conditional) z += w(feature_dim_ + labels[static_cast<std::size_t>(r)], 0);
    out(r) = sigmoid(z);
  }
  return out;
}

Vector Discriminator::predict(std::span<const LabeledSequence> seqs) const {
  if (seqs.empty()) return Vector(0);
  return predict(to_token_matrix(seqs), labels_of(seqs));
}

double Discriminator::probability(const LabeledSequence& seq) const {
  return predict(std::span<const LabeledSequence>(&seq, 1))(0);
}

double Discriminator::loss(const TokenMatrix& tokens, std::span<const int> labels, const Vector& targets,
                           bool accumulate_grad, RngStream* dropout_rng) {
  check_tokens(tokens);
  const Eigen::Index n = tokens.rows();
  if (n == 0) throw ValidationError("discriminator: empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != n || targets.size() != n) {
    throw DimensionError("discriminator: tokens, labels and targets differ in batch size");
  }
  for (int y : labels) {
    if (y < 0 || y >= config_.num_labels) throw IndexError("discriminator: label out of range");
  }
  std::unique_ptr<Cache> cache;
  const Tensor feats = compute_features(tokens, accumulate_grad ? &cache : nullptr);

  // Inverted dropout on the features.
  Tensor mask = Tensor::Ones(n, feature_dim_);
  if (dropout_rng && config_.dropout > 0.0) {
    const double keep = 1.0 - config_.dropout;
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
  }
  const Tensor dropped = feats.cwiseProduct(mask);

  const Tensor& w = params_["head.W"].value;
  const double bias = params_["head.b"].value(0, 0);
  Vector logits = dropped * w.topRows(feature_dim_);
  double total = 0.0;
  Vector dz(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double z = logits(r) + bias;
    if (config_.conditional) z += w(feature_dim_ + labels[static_cast<std::size_t>(r)], 0);
    const double t = targets(r);
    total -= t * log_sigmoid(z) + (1.0 - t) * log_sigmoid(-z);
    dz(r) = (sigmoid(z) - t) / static_cast<double>(n);
  }
  double value = total / static_cast<double>(n) + 0.5 * config_.l2 * w.squaredNorm();
  if (!std::isfinite(value)) throw NumericError("discriminator: non-finite loss");
  if (!accumulate_grad) return value;

  Tensor& gw = params_["head.W"].grad;
  gw.topRows(feature_dim_) += dropped.transpose() * dz;
  if (config_.conditional) {
    for (Eigen::Index r = 0; r < n; ++r) gw(feature_dim_ + labels[static_cast<std::size_t>(r)], 0) += dz(r);
  }
  gw += config_.l2 * w;
  params_["head.b"].grad(0, 0) += dz.sum();

  const Tensor dfeats = ((dz * w.topRows(feature_dim_).transpose()).array() * mask.array()).matrix();
  backward_features(tokens, *cache, dfeats);
  return value;
}

double Discriminator::train_step(const TokenMatrix& tokens, std::span<const int> labels, const Vector& targets,
                                 AdamState& optimizer, RngStream* dropout_rng) {
  params_.zero_grad();
  const double value = loss(tokens, labels, targets, true, dropout_rng);
  adam_step(params_, optimizer);
  return value;
}

double Discriminator::train_step(std::span<const LabeledSequence> real, std::span<const LabeledSequence> synthetic,
                                 AdamState& optimizer, RngStream* dropout_rng) {
  if (real.empty() || synthetic.empty()) throw ValidationError("d_train_step: both batches must be nonempty");
  Corpus all(real.begin(), real.end());
  all.insert(all.end(), synthetic.begin(), synthetic.end());
  Vector targets(static_cast<Eigen::Index>(all.size()));
  targets.head(static_cast<Eigen::Index>(real.size())).setOnes();
  targets.tail(static_cast<Eigen::Index>(synthetic.size())).setZero();
  return train_step(to_token_matrix(all), labels_of(all), targets, optimizer, dropout_rng);
}

namespace {

// ---------------------------------------------------------------------------
// fastText: average of unigram (frozen) and hashed bigram (trained) vectors.

class FastTextDiscriminator final : public Discriminator {
 public:
  FastTextDiscriminator(const DiscriminatorConfig& config, Tensor embedding, RngStream& rng)
      : Discriminator(config, std::move(embedding)) {
    if (config_.use_bigrams) {
      params_.add("fasttext.bigram",
                  fan_in_normal_tensor(config_.bigram_buckets, config_.embed_dim, config_.embed_dim, rng));
    }
    add_head(config_.embed_dim);
  }

  std::unique_ptr<Discriminator> clone() const override { return std::make_unique<FastTextDiscriminator>(*this); }

 protected:
  struct FastTextCache : Cache {
    std::vector<std::vector<int>> buckets;
    std::vector<double> counts;
  };

  Tensor compute_features(const TokenMatrix& tokens, std::unique_ptr<Cache>* cache) const override {
    const Eigen::Index n = tokens.rows();
    Tensor out = Tensor::Zero(n, config_.embed_dim);
    auto c = std::make_unique<FastTextCache>();
    c->buckets.resize(static_cast<std::size_t>(n));
    c->counts.resize(static_cast<std::size_t>(n));
    const Tensor* bigrams = config_.use_bigrams ? &params_["fasttext.bigram"].value : nullptr;
    for (Eigen::Index r = 0; r < n; ++r) {
      double count = 0.0;
      for (Eigen::Index t = 0; t < tokens.cols(); ++t) {
        const int tok = tokens(r, t);
        if (tok == kPadId) continue;
        out.row(r) += embedding_.row(tok);
        count += 1.0;
        if (bigrams && t + 1 < tokens.cols() && tokens(r, t + 1) != kPadId) {
          const int bucket = bigram_bucket(tok, tokens(r, t + 1), config_.bigram_buckets);
          out.row(r) += bigrams->row(bucket);
          c->buckets[static_cast<std::size_t>(r)].push_back(bucket);
          count += 1.0;
        }
      }
      if (count > 0) out.row(r) /= count;
      c->counts[static_cast<std::size_t>(r)] = count;
    }
    if (cache) *cache = std::move(c);
    return out;
  }

  void backward_features(const TokenMatrix& tokens, const Cache& cache, const Tensor& dfeatures) override {
    if (!config_.use_bigrams) return;
    const auto& c = static_cast<const FastTextCache&>(cache);
    Tensor& g = params_["fasttext.bigram"].grad;
    for (Eigen::Index r = 0; r < tokens.rows(); ++r) {
      const double count = c.counts[static_cast<std::size_t>(r)];
      if (count == 0) continue;
      for (int bucket : c.buckets[static_cast<std::size_t>(r)]) g.row(bucket) += dfeatures.row(r) / count;
    }
  }
};

// ---------------------------------------------------------------------------
// CNN: relu convolutions of several widths, max-pool over time, one highway
// layer.

class CnnDiscriminator final : public Discriminator {
 public:
  CnnDiscriminator(const DiscriminatorConfig& config, Tensor embedding, RngStream& rng)
      : Discriminator(config, std::move(embedding)) {
    int features = 0;
    for (int h : config_.filter_widths) {
      if (h < 1) throw ValidationError("cnn: filter widths must be positive");
      if (config_.seq_len < h) {
        throw ValidationError("cnn: sequence length " + std::to_string(config_.seq_len) +
                              " is shorter than filter width " + std::to_string(h));
      }
      const int fan_in = h * config_.embed_dim;
      params_.add("cnn.W" + std::to_string(h), fan_in_normal_tensor(fan_in, config_.filters_per_width, fan_in, rng));
      params_.add("cnn.b" + std::to_string(h), Tensor::Zero(1, config_.filters_per_width));
      features += config_.filters_per_width;
    }
    params_.add("highway.Wh", fan_in_normal_tensor(features, features, features, rng));
    params_.add("highway.bh", Tensor::Zero(1, features));
    params_.add("highway.Wt", fan_in_normal_tensor(features, features, features, rng));
    params_.add("highway.bt", Tensor::Zero(1, features));
    add_head(features);
  }

  std::unique_ptr<Discriminator> clone() const override { return std::make_unique<CnnDiscriminator>(*this); }

 protected:
  struct CnnCache : Cache {
    std::vector<Tensor> windows;                   // per width: (n * L) x (h * k)
    std::vector<Tensor> activations;               // per width: (n * L) x F, post-relu
    std::vector<Eigen::MatrixXi> argmax;           // per width: n x F
    Tensor pooled, h, t;
  };

  Tensor windows_for(const TokenMatrix& tokens, int h) const {
    const Eigen::Index n = tokens.rows();
    const Eigen::Index positions = tokens.cols() - h + 1;
    const int k = config_.embed_dim;
    Tensor out(n * positions, h * k);
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index i = 0; i < positions; ++i) {
        for (int j = 0; j < h; ++j) out.row(r * positions + i).segment(j * k, k) = embedding_.row(tokens(r, i + j));
      }
    }
    return out;
  }

  Tensor compute_features(const TokenMatrix& tokens, std::unique_ptr<Cache>* cache) const override {
    if (tokens.cols() < *std::max_element(config_.filter_widths.begin(), config_.filter_widths.end())) {
      throw ValidationError("cnn: sequence shorter than the widest filter");
    }
    const Eigen::Index n = tokens.rows();
    const int f = config_.filters_per_width;
    auto c = std::make_unique<CnnCache>();
    c->pooled = Tensor(n, feature_dim_);
    int offset = 0;
    for (int h : config_.filter_widths) {
      const Eigen::Index positions = tokens.cols() - h + 1;
      Tensor win = windows_for(tokens, h);
      Tensor act = win * params_["cnn.W" + std::to_string(h)].value;
      act.rowwise() += params_["cnn.b" + std::to_string(h)].value.row(0);
      act = act.cwiseMax(0.0);
      Eigen::MatrixXi arg(n, f);
      for (Eigen::Index r = 0; r < n; ++r) {
        for (int j = 0; j < f; ++j) {
          Eigen::Index best;
          c->pooled(r, offset + j) = act.col(j).segment(r * positions, positions).maxCoeff(&best);
          arg(r, j) = static_cast<int>(best);
        }
      }
      offset += f;
      if (cache) {
        c->windows.push_back(std::move(win));
        c->activations.push_back(std::move(act));
        c->argmax.push_back(std::move(arg));
      }
    }
    const Tensor& x = c->pooled;
    c->h = x * params_["highway.Wh"].value;
    c->h.rowwise() += params_["highway.bh"].value.row(0);
    c->h = c->h.cwiseMax(0.0);
    c->t = x * params_["highway.Wt"].value;
    c->t.rowwise() += params_["highway.bt"].value.row(0);
    c->t = sigmoid(c->t.array()).matrix();
    Tensor y = (c->t.array() * c->h.array() + (1.0 - c->t.array()) * x.array()).matrix();
    if (cache) *cache = std::move(c);
    return y;
  }

  void backward_features(const TokenMatrix& tokens, const Cache& cache, const Tensor& dy) override {
    const auto& c = static_cast<const CnnCache&>(cache);
    const Tensor& x = c.pooled;
    const Tensor dh = (dy.array() * c.t.array() * (c.h.array() > 0.0).cast<double>()).matrix();
    const Tensor dt = (dy.array() * (c.h.array() - x.array()) * c.t.array() * (1.0 - c.t.array())).matrix();
    params_["highway.Wh"].grad.noalias() += x.transpose() * dh;
    params_["highway.bh"].grad.row(0) += dh.colwise().sum();
    params_["highway.Wt"].grad.noalias() += x.transpose() * dt;
    params_["highway.bt"].grad.row(0) += dt.colwise().sum();
    const Tensor dx = (dy.array() * (1.0 - c.t.array())).matrix() + dh * params_["highway.Wh"].value.transpose() +
                      dt * params_["highway.Wt"].value.transpose();

    const int f = config_.filters_per_width;
    int offset = 0;
    for (std::size_t wi = 0; wi < config_.filter_widths.size(); ++wi) {
      const int h = config_.filter_widths[wi];
      const Eigen::Index positions = tokens.cols() - h + 1;
      const Tensor& act = c.activations[wi];
      Tensor dact = Tensor::Zero(act.rows(), act.cols());
      for (Eigen::Index r = 0; r < tokens.rows(); ++r) {
        for (int j = 0; j < f; ++j) {
          const Eigen::Index row = r * positions + c.argmax[wi](r, j);
          if (act(row, j) > 0.0) dact(row, j) = dx(r, offset + j);
        }
      }
      params_["cnn.W" + std::to_string(h)].grad.noalias() += c.windows[wi].transpose() * dact;
      params_["cnn.b" + std::to_string(h)].grad.row(0) += dact.colwise().sum();
      offset += f;
    }
  }
};

// ---------------------------------------------------------------------------
// Bidirectional LSTM with attention pooling.

class BiRnnDiscriminator final : public Discriminator {
 public:
  BiRnnDiscriminator(const DiscriminatorConfig& config, Tensor embedding, RngStream& rng)
      : Discriminator(config, std::move(embedding)) {
    const int hd = config_.rnn_hidden;
    const int in = hd + config_.embed_dim;
    params_.add("birnn.fw.W", uniform_tensor(in, 4 * hd, 0.08, rng));
    params_.add("birnn.fw.b", Tensor::Zero(1, 4 * hd));
    params_.add("birnn.bw.W", uniform_tensor(in, 4 * hd, 0.08, rng));
    params_.add("birnn.bw.b", Tensor::Zero(1, 4 * hd));
    params_.add("attn.W", fan_in_normal_tensor(2 * hd, config_.attention_dim, 2 * hd, rng));
    params_.add("attn.b", Tensor::Zero(1, config_.attention_dim));
    params_.add("attn.u", fan_in_normal_tensor(config_.attention_dim, 1, config_.attention_dim, rng));
    add_head(2 * hd);
  }

  std::unique_ptr<Discriminator> clone() const override { return std::make_unique<BiRnnDiscriminator>(*this); }

 protected:
  struct BiRnnCache : Cache {
    std::vector<LstmCache> fw, bw;
    std::vector<Tensor> hidden;  // [fw_t, bw_t], batch x 2 d_h
    AttentionResult attention;
  };

  Tensor embed_column(const TokenMatrix& tokens, Eigen::Index t) const {
    Tensor x(tokens.rows(), config_.embed_dim);
    for (Eigen::Index r = 0; r < tokens.rows(); ++r) x.row(r) = embedding_.row(tokens(r, t));
    return x;
  }

  Tensor compute_features(const TokenMatrix& tokens, std::unique_ptr<Cache>* cache) const override {
    const Eigen::Index n = tokens.rows();
    const Eigen::Index steps = tokens.cols();
    const int hd = config_.rnn_hidden;
    auto c = std::make_unique<BiRnnCache>();
    c->hidden.assign(static_cast<std::size_t>(steps), Tensor(n, 2 * hd));
    if (cache) {
      c->fw.resize(static_cast<std::size_t>(steps));
      c->bw.resize(static_cast<std::size_t>(steps));
    }
    LstmState fw = LstmState::zeros(n, hd);
    for (Eigen::Index t = 0; t < steps; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      lstm_forward(params_["birnn.fw.W"].value, params_["birnn.fw.b"].value, embed_column(tokens, t), fw,
                   cache ? &c->fw[ti] : nullptr);
      c->hidden[ti].leftCols(hd) = fw.h;
    }
    LstmState bw = LstmState::zeros(n, hd);
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
      const auto ti = static_cast<std::size_t>(t);
      lstm_forward(params_["birnn.bw.W"].value, params_["birnn.bw.b"].value, embed_column(tokens, t), bw,
                   cache ? &c->bw[ti] : nullptr);
      c->hidden[ti].rightCols(hd) = bw.h;
    }
    c->attention = attention_pool(c->hidden, params_["attn.W"].value, params_["attn.b"].value, params_["attn.u"].value);
    Tensor pooled = c->attention.pooled;
    if (cache) *cache = std::move(c);
    return pooled;
  }

  void backward_features(const TokenMatrix& tokens, const Cache& cache, const Tensor& ds) override {
    const auto& c = static_cast<const BiRnnCache&>(cache);
    const Eigen::Index n = tokens.rows();
    const Eigen::Index steps = tokens.cols();
    const int hd = config_.rnn_hidden;
    const Tensor& alpha = c.attention.weights;
    const Tensor& aw = params_["attn.W"].value;
    const Tensor& au = params_["attn.u"].value;

    // Softmax over time: dscore_t = a_t (da_t - sum_k a_k da_k).
    Tensor dalpha(n, steps);
    for (Eigen::Index t = 0; t < steps; ++t) dalpha.col(t) = (c.hidden[static_cast<std::size_t>(t)].cwiseProduct(ds)).rowwise().sum();
    const Vector weighted = (alpha.cwiseProduct(dalpha)).rowwise().sum();
    const Tensor dscore = (alpha.array() * (dalpha.colwise() - weighted).array()).matrix();

    std::vector<Tensor> dhidden(static_cast<std::size_t>(steps));
    for (Eigen::Index t = 0; t < steps; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      const Tensor& u = c.attention.u[ti];
      params_["attn.u"].grad.noalias() += u.transpose() * dscore.col(t);
      const Tensor dpre = ((dscore.col(t) * au.transpose()).array() * (1.0 - u.array().square())).matrix();
      params_["attn.W"].grad.noalias() += c.hidden[ti].transpose() * dpre;
      params_["attn.b"].grad.row(0) += dpre.colwise().sum();
      dhidden[ti] = (ds.array().colwise() * alpha.col(t).array()).matrix() + dpre * aw.transpose();
    }

    Tensor dh = Tensor::Zero(n, hd);
    Tensor dc = Tensor::Zero(n, hd);
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
      const auto ti = static_cast<std::size_t>(t);
      dh += dhidden[ti].leftCols(hd);
      lstm_backward(params_["birnn.fw.W"].value, c.fw[ti], dh, dc, nullptr, params_["birnn.fw.W"].grad,
                    params_["birnn.fw.b"].grad);
    }
    dh.setZero();
    dc.setZero();
    for (Eigen::Index t = 0; t < steps; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      dh += dhidden[ti].rightCols(hd);
      lstm_backward(params_["birnn.bw.W"].value, c.bw[ti], dh, dc, nullptr, params_["birnn.bw.W"].grad,
                    params_["birnn.bw.b"].grad);
    }
  }
};

}  // namespace

std::unique_ptr<Discriminator> Discriminator::create(const DiscriminatorConfig& config, Tensor embedding,
                                                     std::uint64_t seed) {
  RngStream rng(seed, stream_id({tag(Purpose::kInit), 2}));
  switch (config.kind) {
    case DiscriminatorKind::kFastText:
      return std::make_unique<FastTextDiscriminator>(config, std::move(embedding), rng);
    case DiscriminatorKind::kCnn:
      return std::make_unique<CnnDiscriminator>(config, std::move(embedding), rng);
    case DiscriminatorKind::kBiRnnAttention:
      return std::make_unique<BiRnnDiscriminator>(config, std::move(embedding), rng);
  }
  throw ValidationError("unknown discriminator kind");
}

}  // namespace mtgan
