#include <doctest.h>

#include <cmath>
#include <map>

#include "mtgan/grad_check.hpp"
#include "mtgan/grammar.hpp"
#include "mtgan/lstm.hpp"
#include "oracles.hpp"

using namespace mtgan;

namespace {

GeneratorConfig tiny(int vocab, int steps, int dim = 3) {
  GeneratorConfig c;
  c.vocab_size = vocab;
  c.seq_len = steps;
  c.embed_dim = dim;
  c.hidden_dim = dim;
  c.cond_dim = 2;
  c.num_labels = 2;
  return c;
}

// Larger weights than the default initializer so gates are far from 0.5.
void scramble(Generator& g, std::uint64_t seed, double scale = 0.5) {
  RngStream rng(seed, 77);
  for (auto& p : g.params()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = scale * rng.normal();
  }
}

Corpus random_batch(int n, int vocab, int steps, std::uint64_t seed) {
  RngStream rng(seed, 5);
  Corpus c;
  for (int i = 0; i < n; ++i) {
    LabeledSequence s{static_cast<int>(rng.uniform_int(2)), {}};
    for (int t = 0; t < steps; ++t) s.tokens.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vocab))));
    c.push_back(s);
  }
  return c;
}

double cosine(const Vector& a, const Vector& b) { return a.dot(b) / (a.norm() * b.norm()); }

}  // namespace

TEST_CASE("zero generator keeps h exactly zero") {
  const Generator g = Generator::zeros(tiny(5, 4));
  LstmState s = g.initial_state(2);
  const std::vector<int> in = {0, 3}, y = {0, 1};
  for (int t = 0; t < 4; ++t) {
    const Tensor logits = g.step(s, in, y);
    CHECK(s.h.isZero(0.0));
    CHECK(logits.isZero(0.0));
  }
}

TEST_CASE("condition label changes logits") {
  Generator g(tiny(6, 3), 1);
  scramble(g, 2);
  LstmState a = g.initial_state(1), b = g.initial_state(1);
  const std::vector<int> in = {0};
  const Tensor la = g.step(a, in, std::vector<int>{0});
  const Tensor lb = g.step(b, in, std::vector<int>{1});
  CHECK((la - lb).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("generator forward matches the straight-line oracle") {
  Generator g(tiny(7, 5), 3);
  scramble(g, 4);
  for (const auto& seq : random_batch(6, 7, 5, 8)) {
    const auto ref = oracle::generator_logits(g, seq);
    const TokenMatrix tokens = to_token_matrix(std::span<const LabeledSequence>(&seq, 1));
    LstmState s = g.initial_state(1);
    for (int t = 0; t < 5; ++t) {
      const std::vector<int> in = {t == 0 ? kBosId : seq.tokens[static_cast<std::size_t>(t - 1)]};
      const Tensor logits = g.step(s, in, std::vector<int>{seq.label});
      CHECK(s.h.cwiseAbs().maxCoeff() < 1.0);
      for (int v = 0; v < 7; ++v) CHECK(std::abs(logits(0, v) - ref[static_cast<std::size_t>(t)][static_cast<std::size_t>(v)]) < 1e-12);
    }
    CHECK(std::abs(g.sequence_log_prob(seq, PadMasking::kIncludePad) - oracle::generator_log_prob(g, seq)) < 1e-11);
  }
}

TEST_CASE("step rejects out-of-range ids") {
  const Generator g(tiny(4, 3), 0);
  LstmState s = g.initial_state(1);
  CHECK_THROWS_AS(g.step(s, std::vector<int>{4}, std::vector<int>{0}), IndexError);
  CHECK_THROWS_AS(g.step(s, std::vector<int>{2}, std::vector<int>{2}), IndexError);
}

TEST_CASE("uniform model log prob") {
  const Generator g = Generator::zeros(tiny(10, 5));
  const LabeledSequence seq{0, {2, 3, 4, 5, 6}};
  CHECK(g.sequence_log_prob(seq) == doctest::Approx(-5 * std::log(10.0)).epsilon(1e-14));
  // PAD targets are excluded by default.
  const LabeledSequence padded{0, {2, 3, 4, kPadId, kPadId}};
  CHECK(g.sequence_log_prob(padded) == doctest::Approx(-3 * std::log(10.0)).epsilon(1e-14));
  CHECK(g.sequence_log_prob(padded, PadMasking::kIncludePad) == doctest::Approx(-5 * std::log(10.0)).epsilon(1e-14));
  const auto steps = g.per_step_log_probs(seq);
  REQUIRE(steps.size() == 5);
  CHECK(steps[2] == doctest::Approx(-std::log(10.0)));
}

TEST_CASE("near-deterministic model") {
  Generator g = Generator::zeros(tiny(5, 4));
  g.params()["out.b"].value(0, 3) = 50.0;
  RngStream rng(1, 1);
  const auto s = g.sample(1, rng);
  CHECK(s.tokens == std::vector<int>{3, 3, 3, 3});
  CHECK(s.label == 1);
  CHECK(std::abs(g.sequence_log_prob(s)) < 1e-12);
}

TEST_CASE("likelihood normalizes over all sequences") {
  Generator g(tiny(3, 3), 5);
  scramble(g, 6, 1.0);
  for (int y = 0; y < 2; ++y) {
    double mass = 0.0;
    for (const auto& s : oracle::all_sequences(3, 3, y)) mass += std::exp(g.sequence_log_prob(s, PadMasking::kIncludePad));
    CHECK(std::abs(mass - 1.0) < 1e-10);
  }
}

TEST_CASE("next-token distributions sum to one") {
  Generator g(tiny(6, 4), 9);
  scramble(g, 10, 1.0);
  const Corpus batch = random_batch(5, 6, 4, 3);
  const auto states = g.prefix_states(to_token_matrix(batch), labels_of(batch));
  REQUIRE(states.size() == 4);
  for (std::size_t t = 0; t < 4; ++t) {
    LstmState s = states[t];
    std::vector<int> in;
    for (const auto& b : batch) in.push_back(t == 0 ? kBosId : b.tokens[t - 1]);
    const Tensor p = softmax_rows(g.step(s, in, labels_of(batch)));
    for (Eigen::Index r = 0; r < p.rows(); ++r) CHECK(std::abs(p.row(r).sum() - 1.0) < 1e-10);
  }
}

TEST_CASE("sampling frequencies match the model distribution") {
  Generator g(tiny(3, 2), 11);
  scramble(g, 12, 1.0);
  const int n = 100000;
  RngStream rng(13, 0);
  std::map<std::vector<int>, int> counts;
  for (int i = 0; i < n; ++i) ++counts[g.sample(0, rng).tokens];
  double chi2 = 0.0;
  for (const auto& s : oracle::all_sequences(3, 2, 0)) {
    const double p = std::exp(g.sequence_log_prob(s, PadMasking::kIncludePad));
    const double expected = n * p;
    const double observed = counts[s.tokens];
    chi2 += (observed - expected) * (observed - expected) / expected;
    // 3 sigma binomial bound per sequence.
    CHECK(std::abs(observed - expected) < 3 * std::sqrt(n * p * (1 - p)) + 1);
  }
  // 8 degrees of freedom; the 0.999 quantile is 26.12.
  CHECK(chi2 < 26.12);
}

TEST_CASE("sampling is deterministic per stream") {
  Generator g(tiny(8, 6), 1);
  RngStream a(5, 1), b(5, 1);
  CHECK(g.sample(0, a) == g.sample(0, b));
  const std::vector<int> labels = {0, 1, 1, 0};
  CHECK(g.sample_batch(labels, 3, 4) == g.sample_batch(labels, 3, 4));
  const auto batch = g.sample_batch(labels, 3, 4);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    CHECK(batch[i].label == labels[i]);
    CHECK(batch[i].tokens.size() == 6);
  }
}

TEST_CASE("MLE gradient passes the finite-difference check") {
  Generator g(tiny(5, 4, 3), 21);
  scramble(g, 22);
  Corpus batch = random_batch(3, 5, 4, 23);
  batch[0].tokens[3] = kPadId;  // exercise PAD masking
  LossFunction loss = [&](ParamStore&, bool grad) { return g.mle_loss(batch, grad); };
  const auto r = finite_diff_check(loss, g.params());
  INFO("worst ", r.worst_parameter, " analytic ", r.analytic, " numeric ", r.numeric);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("policy gradient loss passes the finite-difference check") {
  Generator g(tiny(6, 5, 4), 31);
  scramble(g, 32);
  const Corpus batch = random_batch(4, 6, 5, 33);
  RngStream rng(34, 0);
  Tensor rewards(4, 5);
  for (Eigen::Index i = 0; i < rewards.size(); ++i) rewards.data()[i] = rng.uniform(-1.0, 2.0);
  LossFunction loss = [&](ParamStore&, bool grad) { return g.policy_gradient_loss(batch, rewards, grad); };
  CHECK(finite_diff_check(loss, g.params()).max_relative_error < 1e-4);
}

TEST_CASE("LSTM backward passes the finite-difference check") {
  RngStream rng(40, 0);
  ParamStore ps;
  ps.add("W", uniform_tensor(3 + 2, 12, 0.7, rng));
  ps.add("b", uniform_tensor(1, 12, 0.3, rng));
  ps.add("x0", uniform_tensor(2, 2, 1.0, rng));
  ps.add("x1", uniform_tensor(2, 2, 1.0, rng));
  const Tensor target = uniform_tensor(2, 3, 1.0, rng);
  LossFunction loss = [&](ParamStore& p, bool grad) {
    LstmState s = LstmState::zeros(2, 3);
    LstmCache c0, c1;
    lstm_forward(p["W"].value, p["b"].value, p["x0"].value, s, &c0);
    lstm_forward(p["W"].value, p["b"].value, p["x1"].value, s, &c1);
    const double value = (s.h.cwiseProduct(target)).sum() + 0.5 * s.c.squaredNorm();
    if (grad) {
      Tensor dh = target, dc = s.c, dx;
      lstm_backward(p["W"].value, c1, dh, dc, &dx, p["W"].grad, p["b"].grad);
      p["x1"].grad += dx;
      lstm_backward(p["W"].value, c0, dh, dc, &dx, p["W"].grad, p["b"].grad);
      p["x0"].grad += dx;
    }
    return value;
  };
  CHECK(finite_diff_check(loss, ps).max_relative_error < 1e-4);
}

TEST_CASE("memorizes a one-sequence corpus") {
  Generator g(tiny(8, 5, 8), 41);
  const Corpus data = {{1, {2, 5, 7, 3, 4}}};
  AdamState opt = AdamState::with_learning_rate(3e-2);
  for (int epoch = 0; epoch < 300; ++epoch) g.mle_step(data, opt);
  CHECK(g.mle_loss(data, false) < 0.01);
}

TEST_CASE("mle_step returns the pre-update loss and rejects empty batches") {
  Generator g(tiny(6, 4), 1);
  const Corpus batch = random_batch(4, 6, 4, 2);
  const double before = g.mle_loss(batch, false);
  AdamState opt;
  CHECK(g.mle_step(batch, opt) == before);
  CHECK(g.mle_loss(batch, false) < before);
  CHECK_THROWS_AS(g.mle_step(Corpus{}, opt), ValidationError);
}

TEST_CASE("zero rewards leave parameters unchanged") {
  Generator g(tiny(6, 4), 1);
  const ParamStore before = g.params();
  AdamState opt;
  g.policy_gradient_step(random_batch(4, 6, 4, 2), Tensor::Zero(4, 4), opt);
  CHECK(max_abs_difference(before, g.params()) == 0.0);
  CHECK_THROWS_AS(g.policy_gradient_step(random_batch(4, 6, 4, 2), Tensor::Zero(3, 4), opt), DimensionError);
}

TEST_CASE("unit rewards reproduce the MLE gradient") {
  Generator g(tiny(7, 5), 51);
  scramble(g, 52);
  Corpus batch = random_batch(8, 7, 5, 53);
  batch[2].tokens[4] = kPadId;
  g.params().zero_grad();
  g.mle_loss(batch, true);
  const Vector mle = g.params().flat_grad();
  g.params().zero_grad();
  g.policy_gradient_loss(batch, Tensor::Ones(8, 5), true);
  const Vector pg = g.params().flat_grad();
  g.params().zero_grad();
  CHECK(cosine(mle, pg) > 0.999);
}

TEST_CASE("softmax bandit learns the rewarded token") {
  // V = 2, T = 1: reward 1 for token 0, 0 for token 1.
  Generator g(tiny(2, 1), 61);
  AdamState opt = AdamState::with_learning_rate(1e-2);
  auto prob_a = [&] { return std::exp(g.sequence_log_prob({0, {0}}, PadMasking::kIncludePad)); };
  double prev = prob_a();
  int increases = 0;
  for (int step = 0; step < 200; ++step) {
    const auto batch = g.sample_batch(std::vector<int>(16, 0), 62, static_cast<std::uint64_t>(step));
    Tensor rewards(16, 1);
    for (int i = 0; i < 16; ++i) rewards(i, 0) = batch[static_cast<std::size_t>(i)].tokens[0] == 0 ? 1.0 : 0.0;
    g.policy_gradient_step(batch, rewards, opt);
    const double p = prob_a();
    if (step < 50 && p > prev) ++increases;
    prev = p;
  }
  CHECK(increases == 50);
  CHECK(prev > 0.95);
}

TEST_CASE("condition sensitivity after MLE on a separable grammar") {
  const Grammar grammar(preset_grammar("separable", 10));
  const Corpus data = generate_corpus(grammar, 600, 3);
  GeneratorConfig cfg = tiny(grammar.vocab().size(), 10, 16);
  cfg.cond_dim = 4;
  Generator g(cfg, 4);
  AdamState opt = AdamState::with_learning_rate(1e-2);
  for (int epoch = 0; epoch < 15; ++epoch) {
    for (std::size_t i = 0; i < data.size(); i += 50) {
      g.mle_step(std::span<const LabeledSequence>(data).subspan(i, std::min<std::size_t>(50, data.size() - i)), opt);
    }
  }
  double own = 0, other = 0;
  int n = 0;
  for (const auto& s : generate_corpus(grammar, 200, 99)) {
    if (s.label != 0) continue;
    own += g.sequence_log_prob(s);
    other += g.sequence_log_prob({1, s.tokens});
    ++n;
  }
  CHECK(own / n > other / n);
}
