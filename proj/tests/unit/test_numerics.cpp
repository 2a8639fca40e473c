#include <doctest.h>

#include <cmath>
#include <thread>

#include "mtgan/grad_check.hpp"
#include "mtgan/numerics.hpp"
#include "mtgan/parallel.hpp"
#include "mtgan/rng.hpp"

using namespace mtgan;

namespace {

Tensor random_tensor(Eigen::Index r, Eigen::Index c, RngStream& rng, double scale = 1.0) {
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = scale * rng.normal();
  return t;
}

}  // namespace

TEST_CASE("matmul examples") {
  Tensor id = Tensor::Identity(2, 2);
  Tensor a(2, 2);
  a << 1, 2, 3, 4;
  CHECK(matmul(id, a) == a);

  Tensor b(2, 3);
  b << 1, 2, 3, 4, 5, 6;
  CHECK(matmul(Tensor::Zero(2, 2), b) == Tensor::Zero(2, 3));

  Tensor v(2, 1);
  v << 5, 6;
  const Tensor p = matmul(a, v);
  CHECK(p(0, 0) == 17.0);
  CHECK(p(1, 0) == 39.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a(2, 3), b(2, 2);
  a.setZero();
  b.setZero();
  try {
    (void)matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2 x 3)") != std::string::npos);
    CHECK(msg.find("(2 x 2)") != std::string::npos);
  }
}

TEST_CASE("matmul is associative on random 5x5 chains") {
  RngStream rng(11, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_tensor(5, 5, rng), b = random_tensor(5, 5, rng), c = random_tensor(5, 5, rng);
    const Tensor left = matmul(matmul(a, b), c);
    const Tensor right = matmul(a, matmul(b, c));
    CHECK((left - right).norm() <= 1e-9 * std::max(1.0, left.norm()));
  }
}

TEST_CASE("softmax examples") {
  Tensor eq = Tensor::Constant(1, 4, 3.7);
  const Tensor s = softmax_rows(eq);
  for (int j = 0; j < 4; ++j) CHECK(s(0, j) == doctest::Approx(0.25).epsilon(1e-15));

  Tensor shifted(1, 2), base(1, 2);
  shifted << 17.0, 19.5;
  base << 0.0, 2.5;
  CHECK((softmax_rows(shifted) - softmax_rows(base)).cwiseAbs().maxCoeff() < 1e-15);

  Tensor big(1, 2);
  big << 1000.0, 0.0;
  const Tensor out = softmax_rows(big);
  REQUIRE(out.allFinite());
  // Extended-precision oracle.
  const long double e = std::exp(-1000.0L);
  const long double p0 = 1.0L / (1.0L + e);
  const long double p1 = e / (1.0L + e);
  CHECK(std::abs(static_cast<long double>(out(0, 0)) - p0) < 1e-15L);
  CHECK(std::abs(static_cast<long double>(out(0, 1)) - p1) < 1e-300L);
}

TEST_CASE("softmax rows sum to one for random inputs") {
  RngStream rng(3, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor(4, 7, rng, rng.uniform(0.1, 1000.0));
    const Tensor s = softmax_rows(x);
    REQUIRE(s.allFinite());
    CHECK((s.array() >= 0.0).all());
    for (Eigen::Index r = 0; r < s.rows(); ++r) CHECK(std::abs(s.row(r).sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("log_softmax agrees with log of softmax") {
  RngStream rng(5, 0);
  const Tensor x = random_tensor(3, 6, rng, 4.0);
  CHECK((log_softmax_rows(x).array().exp().matrix() - softmax_rows(x)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("stable sigmoid helpers") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(log_sigmoid(-800.0) == doctest::Approx(-800.0));
  CHECK(std::isfinite(log_sigmoid(800.0)));
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  ParamStore ps;
  ps.add("w", Tensor::Constant(2, 2, 0.3));
  AdamState st;
  adam_step(ps, st);
  CHECK(ps["w"].value == Tensor::Constant(2, 2, 0.3));
  CHECK(st.step == 1);
}

TEST_CASE("adam first step closed form") {
  ParamStore ps;
  ps.add("w", Tensor::Constant(1, 1, 2.0));
  ps["w"].grad(0, 0) = 1.0;
  AdamState st = AdamState::with_learning_rate(1e-3);
  adam_step(ps, st);
  const double delta = ps["w"].value(0, 0) - 2.0;
  CHECK(std::abs(delta + 1e-3 * 1.0 / (1.0 + st.epsilon)) < 1e-6);
  CHECK(ps["w"].grad(0, 0) == 0.0);
}

TEST_CASE("adam is deterministic") {
  auto run = [] {
    RngStream rng(42, 0);
    ParamStore ps;
    ps.add("a", random_tensor(3, 4, rng));
    ps.add("b", random_tensor(1, 4, rng));
    AdamState st;
    for (int k = 0; k < 10; ++k) {
      for (auto& p : ps) p.grad = random_tensor(p.value.rows(), p.value.cols(), rng);
      adam_step(ps, st);
    }
    return ps;
  };
  const ParamStore a = run(), b = run();
  CHECK(max_abs_difference(a, b) == 0.0);
}

TEST_CASE("adam rejects poisoned gradients naming the parameter") {
  ParamStore ps;
  ps.add("ok", Tensor::Zero(1, 2));
  ps.add("bad", Tensor::Zero(1, 2));
  ps["bad"].grad(0, 1) = std::nan("");
  AdamState st;
  try {
    adam_step(ps, st);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("bad") != std::string::npos);
  }
  CHECK(ps["ok"].value == Tensor::Zero(1, 2));
  CHECK(st.step == 0);
}

TEST_CASE("param store basics") {
  ParamStore ps;
  ps.add("x", Tensor::Zero(2, 3));
  CHECK_THROWS_AS(ps.add("x", Tensor::Zero(1, 1)), ValidationError);
  CHECK_THROWS_AS(ps["y"], IndexError);
  ps["x"].grad.setConstant(3.0);
  CHECK(ps.grad_norm() == doctest::Approx(std::sqrt(54.0)));
  CHECK(ps.clip_grad_norm(1.0) == doctest::Approx(std::sqrt(54.0)));
  CHECK(ps.grad_norm() == doctest::Approx(1.0));
  CHECK(ps.total_elements() == 6);
}

TEST_CASE("finite_diff_check on a quadratic") {
  RngStream rng(9, 0);
  ParamStore ps;
  ps.add("w", random_tensor(3, 3, rng));
  LossFunction loss = [](ParamStore& p, bool grad) {
    const Tensor& w = p["w"].value;
    if (grad) p["w"].grad += w;
    return 0.5 * w.squaredNorm();
  };
  CHECK(finite_diff_check(loss, ps).max_relative_error < 1e-8);

  LossFunction corrupted = [](ParamStore& p, bool grad) {
    const Tensor& w = p["w"].value;
    if (grad) p["w"].grad += (w.array() + 0.1).matrix();
    return 0.5 * w.squaredNorm();
  };
  CHECK(finite_diff_check(corrupted, ps).max_relative_error > 1e-2);

  LossFunction nan_loss = [](ParamStore&, bool) { return std::nan(""); };
  CHECK_THROWS_AS(finite_diff_check(nan_loss, ps), NumericError);
  CHECK_THROWS_AS(finite_diff_check(loss, ps, 0.0), ValidationError);
}

TEST_CASE("soft_update endpoints") {
  RngStream rng(1, 2);
  ParamStore theta, beta;
  theta.add("w", random_tensor(2, 3, rng));
  beta.add("w", random_tensor(2, 3, rng));
  const Tensor t0 = theta["w"].value, b0 = beta["w"].value;
  ParamStore b1 = beta;
  soft_update(theta, b1, 0.0);
  CHECK(b1["w"].value == t0);
  ParamStore b2 = beta;
  soft_update(theta, b2, 1.0);
  CHECK(b2["w"].value == b0);
  ParamStore other;
  other.add("v", Tensor::Zero(2, 3));
  CHECK_THROWS_AS(soft_update(theta, other, 0.5), DimensionError);
}

TEST_CASE("rng streams are reproducible and distinct") {
  RngStream a(7, 3), b(7, 3), c(7, 4), d(8, 3);
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs_c |= x != c.next_u64();
    differs_d |= x != d.next_u64();
  }
  CHECK(differs_c);
  CHECK(differs_d);
  CHECK(stream_id({1, 2}) != stream_id({2, 1}));
  CHECK(stream_id({1, 2}) != stream_id({1, 2, 0}));
}

TEST_CASE("rng uniform moments and independence across streams") {
  const int n = 200000;
  RngStream a(1, 10), b(1, 11);
  double sum = 0, sum_sq = 0, cross = 0;
  for (int i = 0; i < n; ++i) {
    const double u = a.uniform(), v = b.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sum_sq += u * u;
    cross += (u - 0.5) * (v - 0.5);
  }
  // Standard errors: mean sd/sqrt(n) ~ 6.5e-4, covariance (1/12)/sqrt(n) ~ 1.9e-4.
  CHECK(std::abs(sum / n - 0.5) < 5 * 6.5e-4);
  CHECK(std::abs(sum_sq / n - 1.0 / 3.0) < 0.005);
  CHECK(std::abs(cross / n) < 5 * 1.9e-4);
}

TEST_CASE("rng categorical chi-square") {
  const std::vector<double> w = {1.0, 2.0, 3.0, 4.0};
  std::vector<int> counts(4, 0);
  RngStream rng(123, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(rng.categorical(w))];
  double chi2 = 0;
  for (int k = 0; k < 4; ++k) {
    const double expected = n * w[static_cast<std::size_t>(k)] / 10.0;
    chi2 += (counts[static_cast<std::size_t>(k)] - expected) * (counts[static_cast<std::size_t>(k)] - expected) /
            expected;
  }
  // 3 degrees of freedom; the 0.999 quantile is 16.27.
  CHECK(chi2 < 16.27);
}

TEST_CASE("parallel_for gives identical results for any worker count") {
  auto run = [](std::size_t workers) {
    worker_count() = workers;
    std::vector<double> out(37);
    parallel_for(out.size(), [&](std::size_t i) {
      RngStream r(5, stream_id({i}));
      out[i] = r.normal();
    });
    worker_count() = 1;
    return out;
  };
  CHECK(run(1) == run(4));

  worker_count() = 3;
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                    if (i == 7) throw NumericError("boom");
                  }),
                  NumericError);
  worker_count() = 1;
}
