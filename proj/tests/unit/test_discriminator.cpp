#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mtgan/grad_check.hpp"
#include "oracles.hpp"

using namespace mtgan;

namespace {

const DiscriminatorKind kAllKinds[] = {DiscriminatorKind::kFastText, DiscriminatorKind::kCnn,
                                       DiscriminatorKind::kBiRnnAttention};

DiscriminatorConfig tiny(DiscriminatorKind kind, int vocab = 6, int steps = 4) {
  DiscriminatorConfig c;
  c.kind = kind;
  c.vocab_size = vocab;
  c.seq_len = steps;
  c.embed_dim = 4;
  c.bigram_buckets = 256;
  c.filter_widths = {2, 3};
  c.filters_per_width = 3;
  c.rnn_hidden = 3;
  c.attention_dim = 3;
  return c;
}

Tensor embedding_for(int vocab, int dim, std::uint64_t seed) {
  RngStream rng(seed, 1);
  return uniform_tensor(vocab, dim, 1.0, rng);
}

std::unique_ptr<Discriminator> make(DiscriminatorKind kind, std::uint64_t seed = 1) {
  const auto c = tiny(kind);
  return Discriminator::create(c, embedding_for(c.vocab_size, c.embed_dim, seed), seed);
}

void scramble(Discriminator& d, std::uint64_t seed) {
  RngStream rng(seed, 9);
  for (auto& p : d.params()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = 0.6 * rng.normal();
  }
}

Corpus random_batch(int n, int vocab, int steps, std::uint64_t seed) {
  RngStream rng(seed, 2);
  Corpus c;
  for (int i = 0; i < n; ++i) {
    LabeledSequence s{static_cast<int>(rng.uniform_int(2)), {}};
    for (int t = 0; t < steps; ++t) s.tokens.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vocab))));
    c.push_back(s);
  }
  return c;
}

// Real items use tokens {2, 3}, synthetic items use {4, 5}.
std::pair<Corpus, Corpus> disjoint_corpora(int n, int steps, std::uint64_t seed) {
  RngStream rng(seed, 3);
  Corpus real, fake;
  for (int i = 0; i < n; ++i) {
    LabeledSequence r{i % 2, {}}, f{i % 2, {}};
    for (int t = 0; t < steps; ++t) {
      r.tokens.push_back(2 + static_cast<int>(rng.uniform_int(2)));
      f.tokens.push_back(4 + static_cast<int>(rng.uniform_int(2)));
    }
    real.push_back(r);
    fake.push_back(f);
  }
  return {real, fake};
}

}  // namespace

TEST_CASE("zero head outputs one half") {
  for (auto kind : kAllKinds) {
    const auto d = make(kind);
    const Vector p = d->predict(random_batch(10, 6, 4, 1));
    for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p(i) == 0.5);
  }
}

TEST_CASE("forwards match the straight-line oracles") {
  for (auto kind : kAllKinds) {
    CAPTURE(to_string(kind));
    auto d = make(kind, 3);
    scramble(*d, 4);
    auto batch = random_batch(8, 6, 4, 5);
    batch[1].tokens[3] = kPadId;
    const Vector p = d->predict(batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      CHECK(std::abs(p(static_cast<Eigen::Index>(i)) - oracle::discriminator(*d, batch[i])) < 1e-12);
      CHECK(p(static_cast<Eigen::Index>(i)) > 0.0);
      CHECK(p(static_cast<Eigen::Index>(i)) < 1.0);
    }
  }
}

TEST_CASE("fastText permutation behavior") {
  auto cfg = tiny(DiscriminatorKind::kFastText);
  cfg.use_bigrams = false;
  auto uni = Discriminator::create(cfg, embedding_for(6, 4, 1), 1);
  scramble(*uni, 2);
  const LabeledSequence a{0, {2, 3, 4, 5}}, b{0, {5, 4, 3, 2}};
  CHECK(std::abs(uni->probability(a) - uni->probability(b)) < 1e-15);

  auto bi = make(DiscriminatorKind::kFastText);
  scramble(*bi, 2);
  CHECK(std::abs(bi->probability(a) - bi->probability(b)) > 1e-9);
}

TEST_CASE("highway with a closed transform gate is the identity") {
  RngStream rng(1, 1);
  const Tensor x = uniform_tensor(3, 5, 1.0, rng);
  const Tensor wh = uniform_tensor(5, 5, 1.0, rng), wt = uniform_tensor(5, 5, 0.1, rng);
  const Tensor bh = uniform_tensor(1, 5, 1.0, rng);
  const Tensor bt = Tensor::Constant(1, 5, -50.0);
  CHECK((highway(x, wh, bh, wt, bt) - x).cwiseAbs().maxCoeff() < 1e-20);
}

TEST_CASE("max-pool of a constant feature map") {
  auto d = make(DiscriminatorKind::kCnn);
  scramble(*d, 5);
  d->params()["highway.bt"].value.setConstant(-50.0);
  const int tok = 3;
  TokenMatrix tokens = TokenMatrix::Constant(1, 4, tok);
  const Tensor f = d->features(tokens);
  // Every window is identical, so each pooled value is one window's response.
  int offset = 0;
  for (int h : d->config().filter_widths) {
    const Tensor& w = d->params()["cnn.W" + std::to_string(h)].value;
    const Tensor& b = d->params()["cnn.b" + std::to_string(h)].value;
    for (int j = 0; j < d->config().filters_per_width; ++j) {
      double v = b(0, j);
      for (int q = 0; q < h; ++q) {
        for (int e = 0; e < 4; ++e) v += d->embedding()(tok, e) * w(q * 4 + e, j);
      }
      CHECK(std::abs(f(0, offset + j) - std::max(v, 0.0)) < 1e-12);
    }
    offset += d->config().filters_per_width;
  }
}

TEST_CASE("cnn rejects sequences shorter than the widest filter") {
  auto c = tiny(DiscriminatorKind::kCnn, 6, 2);
  CHECK_THROWS_AS(Discriminator::create(c, embedding_for(6, 4, 1), 1), ValidationError);
  CHECK_THROWS_AS(Discriminator::create(tiny(DiscriminatorKind::kCnn), embedding_for(5, 4, 1), 1), DimensionError);
}

TEST_CASE("attention weights") {
  RngStream rng(3, 3);
  std::vector<Tensor> hidden;
  for (int t = 0; t < 6; ++t) hidden.push_back(uniform_tensor(4, 5, 2.0, rng));
  const Tensor w = uniform_tensor(5, 3, 1.0, rng), b = uniform_tensor(1, 3, 1.0, rng), u = uniform_tensor(3, 1, 2.0, rng);
  const auto r = attention_pool(hidden, w, b, u);
  CHECK((r.weights.array() >= 0.0).all());
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(std::abs(r.weights.row(i).sum() - 1.0) < 1e-10);

  const std::vector<Tensor> constant(6, hidden[0]);
  const auto c = attention_pool(constant, w, b, u);
  CHECK((c.weights.array() - 1.0 / 6.0).abs().maxCoeff() < 1e-15);
  CHECK((c.pooled - hidden[0]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("initial loss is ln 2") {
  for (auto kind : kAllKinds) {
    auto d = make(kind);
    const auto [real, fake] = disjoint_corpora(16, 4, 1);
    AdamState opt;
    RngStream drop(1, 1);
    CHECK(std::abs(d->train_step(real, fake, opt, &drop) - std::log(2.0)) < 1e-6);
  }
}

TEST_CASE("gradients pass the finite-difference check") {
  for (auto kind : kAllKinds) {
    CAPTURE(to_string(kind));
    auto d = make(kind, 7);
    scramble(*d, 8);
    auto batch = random_batch(5, 6, 4, 9);
    batch[0].tokens[2] = kPadId;
    Vector targets(5);
    targets << 1, 0, 1, 1, 0;
    const TokenMatrix tokens = to_token_matrix(batch);
    const auto labels = labels_of(batch);
    LossFunction loss = [&](ParamStore&, bool grad) { return d->loss(tokens, labels, targets, grad, nullptr); };
    const auto r = finite_diff_check(loss, d->params());
    INFO("worst ", r.worst_parameter, " analytic ", r.analytic, " numeric ", r.numeric);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("separable toy corpora are learned within 200 steps") {
  for (auto kind : kAllKinds) {
    CAPTURE(to_string(kind));
    const auto [real, fake] = disjoint_corpora(32, 4, 2);
    auto d = make(kind, 11);
    AdamState opt = AdamState::with_learning_rate(1e-2);
    for (int step = 0; step < 200; ++step) {
      RngStream drop(12, static_cast<std::uint64_t>(step));
      d->train_step(real, fake, opt, &drop);
    }
    const auto [real_test, fake_test] = disjoint_corpora(100, 4, 3);
    int correct = 0;
    for (const auto& s : real_test) correct += d->probability(s) > 0.5;
    for (const auto& s : fake_test) correct += d->probability(s) <= 0.5;
    CHECK(correct / 200.0 >= 0.99);
  }
}

TEST_CASE("embedding is frozen and evaluation is deterministic") {
  for (auto kind : kAllKinds) {
    auto d = make(kind, 13);
    const Tensor before = d->embedding();
    const auto [real, fake] = disjoint_corpora(8, 4, 4);
    AdamState opt;
    RngStream drop(1, 2);
    d->train_step(real, fake, opt, &drop);
    d->train_step(real, fake, opt, &drop);
    CHECK(d->embedding() == before);
    CHECK(d->predict(real) == d->predict(real));
  }
}

TEST_CASE("dropout only acts in training") {
  auto d = make(DiscriminatorKind::kCnn, 15);
  scramble(*d, 16);
  const auto batch = random_batch(6, 6, 4, 17);
  const TokenMatrix tokens = to_token_matrix(batch);
  const Vector targets = Vector::Ones(6);
  const double plain = d->loss(tokens, labels_of(batch), targets, false, nullptr);
  RngStream drop(18, 0);
  const double dropped = d->loss(tokens, labels_of(batch), targets, false, &drop);
  CHECK(plain != dropped);
  CHECK(plain == d->loss(tokens, labels_of(batch), targets, false, nullptr));
}

TEST_CASE("condition head is live") {
  // Same token distribution under both labels, but the label must match the
  // first token for an item to be real.
  RngStream rng(5, 5);
  Corpus real, fake;
  for (int i = 0; i < 64; ++i) {
    LabeledSequence s{0, {2 + static_cast<int>(rng.uniform_int(2)), 4, 5, 4}};
    s.label = s.tokens[0] - 2;
    real.push_back(s);
    fake.push_back({1 - s.label, s.tokens});
  }
  for (auto kind : kAllKinds) {
    auto d = make(kind, 21);
    AdamState opt = AdamState::with_learning_rate(1e-2);
    for (int step = 0; step < 100; ++step) {
      RngStream drop(22, static_cast<std::uint64_t>(step));
      d->train_step(real, fake, opt, &drop);
    }
    int changed = 0;
    for (const auto& s : real) changed += std::abs(d->probability(s) - d->probability({1 - s.label, s.tokens})) > 1e-9;
    CHECK(changed >= 0.9 * static_cast<double>(real.size()));
  }
}

TEST_CASE("discriminator kind names") {
  for (auto kind : kAllKinds) CHECK(parse_discriminator_kind(to_string(kind)) == kind);
  CHECK_THROWS_AS(parse_discriminator_kind("svm"), ValidationError);
}
