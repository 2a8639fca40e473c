#include <doctest.h>

#include <algorithm>
#include <clocale>
#include <cmath>
#include <sstream>

#include "bleu_table.hpp"
#include "mtgan/config.hpp"
#include "mtgan/evaluation.hpp"
#include "mtgan/grammar.hpp"
#include "oracles.hpp"

using namespace mtgan;

namespace {

EvaluatorConfig small_evaluator(int vocab, int seq_len, std::uint64_t seed) {
  RunConfig rc = preset_config("desk-scale");
  rc.seq_len = seq_len;
  RngStream rng(seed, 4);
  return evaluator_config(rc, vocab, 2, uniform_tensor(vocab, rc.embed_dim, 1.0, rng));
}

struct GrammarData {
  Grammar grammar;
  Corpus items;
};

GrammarData grammar_items(const std::string& preset, std::size_t n, int seq_len, std::uint64_t seed) {
  Grammar g(preset_grammar(preset, seq_len));
  auto items = generate_corpus(g, n, seed);
  return {std::move(g), std::move(items)};
}

}  // namespace

TEST_CASE("nll_test of a uniform model") {
  GeneratorConfig c;
  c.vocab_size = 10;
  c.seq_len = 5;
  c.embed_dim = 3;
  c.hidden_dim = 3;
  c.cond_dim = 2;
  const Generator g = Generator::zeros(c);
  RngStream rng(1, 1);
  Corpus test;
  for (int i = 0; i < 7; ++i) {
    LabeledSequence s{i % 2, {}};
    for (int t = 0; t < 5; ++t) s.tokens.push_back(2 + static_cast<int>(rng.uniform_int(8)));
    test.push_back(s);
  }
  CHECK(std::abs(nll_test(g, test) - 5.0 * std::log(10.0)) < 1e-12);
}

TEST_CASE("nll_test matches the oracle on a random model") {
  GeneratorConfig c;
  c.vocab_size = 7;
  c.seq_len = 6;
  c.embed_dim = 4;
  c.hidden_dim = 5;
  c.cond_dim = 2;
  const Generator g(c, 3);
  RngStream rng(2, 2);
  Corpus test;
  double expected = 0.0;
  for (int i = 0; i < 9; ++i) {
    LabeledSequence s{i % 2, {}};
    for (int t = 0; t < 6; ++t) s.tokens.push_back(2 + static_cast<int>(rng.uniform_int(5)));
    expected -= oracle::generator_log_prob(g, s);
    test.push_back(s);
  }
  CHECK(std::abs(nll_test(g, test) - expected / 9.0) < 1e-10);
}

TEST_CASE("bleu matches the hand-counted table") {
  for (const auto& c : bleu_table::cases()) {
    CAPTURE(c.name);
    const double want = bleu_table::expected(c);
    const double got = bleu_table::actual(c);
    CHECK(std::abs(got - want) < 1e-9);
    CHECK(std::abs(got - want) <= 1e-12 * want);
  }
}

TEST_CASE("bleu worked values") {
  // "a b x y" vs "a b c d": precisions 2/4, 1/3, eps, eps.
  const double partial = std::pow(0.5 * (1.0 / 3.0) * 1e-9 * 1e-9, 0.25);
  CHECK(std::abs(bleu_table::actual(bleu_table::cases()[1]) - partial) < 1e-15);
  CHECK(bleu_table::actual(bleu_table::cases()[0]) == 1.0);
  CHECK(bleu_table::actual(bleu_table::cases()[9]) < 1e-6);
  CHECK(std::abs(bleu_table::actual(bleu_table::cases()[3]) - std::exp(-1.0)) < 1e-15);
}

TEST_CASE("bleu string form and edge cases") {
  const std::vector<std::string_view> refs = {"a b c d"};
  CHECK(bleu("a b c d", refs) == 1.0);
  CHECK(std::abs(bleu("a b x y", refs) - bleu_table::actual(bleu_table::cases()[1])) < 1e-15);
  CHECK(bleu(std::vector<int>{}, std::vector<std::vector<int>>{{2, 3}}) == 0.0);
  CHECK(bleu(std::vector<int>{kPadId, kPadId}, std::vector<std::vector<int>>{{2, 3}}) == 0.0);
}

TEST_CASE("bleu is symmetric in references and ignores PAD") {
  RngStream rng(5, 5);
  for (int trial = 0; trial < 50; ++trial) {
    auto draw = [&](int len) {
      std::vector<int> v;
      for (int i = 0; i < len; ++i) v.push_back(2 + static_cast<int>(rng.uniform_int(4)));
      return v;
    };
    const auto cand = draw(3 + static_cast<int>(rng.uniform_int(5)));
    std::vector<std::vector<int>> refs = {draw(4), draw(6), draw(3)};
    const double base = bleu(cand, refs);
    std::vector<std::vector<int>> reversed(refs.rbegin(), refs.rend());
    CHECK(bleu(cand, reversed) == base);

    auto padded_cand = cand;
    padded_cand.insert(padded_cand.begin() + 1, kPadId);
    padded_cand.push_back(kPadId);
    auto padded_refs = refs;
    for (auto& r : padded_refs) r.insert(r.begin(), kPadId);
    CHECK(bleu(padded_cand, padded_refs) == base);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
  }
}

TEST_CASE("self_bleu") {
  const std::vector<std::vector<int>> same(5, std::vector<int>{2, 3, 4, 5, 6});
  CHECK(self_bleu(same) == 1.0);

  std::vector<std::vector<int>> disjoint;
  for (int i = 0; i < 5; ++i) disjoint.push_back({2 + 4 * i, 3 + 4 * i, 4 + 4 * i, 5 + 4 * i});
  CHECK(self_bleu(disjoint) < 1e-6);

  CHECK_THROWS_AS(self_bleu(std::vector<std::vector<int>>{{2, 3}}), ValidationError);
  CHECK_THROWS_AS(self_bleu(std::vector<std::vector<int>>{}), ValidationError);

  // Against the definition: mean of bleu(sample, all other samples).
  RngStream rng(7, 7);
  std::vector<std::vector<int>> samples;
  for (int i = 0; i < 12; ++i) {
    std::vector<int> v;
    for (int t = 0; t < 8; ++t) v.push_back(2 + static_cast<int>(rng.uniform_int(4)));
    if (i == 3) v[7] = kPadId;
    samples.push_back(v);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::vector<std::vector<int>> others;
    for (std::size_t j = 0; j < samples.size(); ++j) {
      if (j != i) others.push_back(samples[j]);
    }
    total += bleu(samples[i], others);
  }
  CHECK(std::abs(self_bleu(samples) - total / 12.0) < 1e-12);
}

TEST_CASE("random token sequences") {
  const std::vector<int> labels = {0, 1, 1, 0, 1};
  const auto r = random_token_sequences(labels, 7, 9, 3);
  REQUIRE(r.size() == 5);
  for (std::size_t i = 0; i < r.size(); ++i) {
    CHECK(r[i].label == labels[i]);
    CHECK(r[i].tokens.size() == 7);
    for (int t : r[i].tokens) {
      CHECK(t > kPadId);
      CHECK(t < 9);
    }
  }
  CHECK(random_token_sequences(labels, 7, 9, 3) == r);
  CHECK_THROWS_AS(random_token_sequences(labels, 7, 2, 3), ValidationError);
}

TEST_CASE("median") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK_THROWS_AS(median({}), ValidationError);
}

TEST_CASE("adversarial evaluation calibration") {
  auto data = grammar_items("overlapping", 600, 10, 11);
  const auto cfg = small_evaluator(data.grammar.vocab().size(), 10, 12);
  const Corpus real(data.items.begin(), data.items.begin() + 300);
  const Corpus held_out(data.items.begin() + 300, data.items.end());

  const auto same = adversarial_eval(real, held_out, cfg, 13);
  CHECK(same.per_seed.size() == 3);
  CHECK(same.adver_suc >= 0.4);
  CHECK(same.adver_suc <= 0.6);

  const auto noise = random_token_sequences(labels_of(real), 10, data.grammar.vocab().size(), 14);
  const auto easy = adversarial_eval(real, noise, cfg, 13);
  CHECK(easy.adver_suc < 0.05);

  const Corpus tiny(real.begin(), real.begin() + 5);
  CHECK_THROWS_AS(adversarial_eval(tiny, held_out, cfg, 13), InsufficientDataError);
}

TEST_CASE("ERE probes") {
  auto data = grammar_items("overlapping", 400, 10, 21);
  const auto cfg = small_evaluator(data.grammar.vocab().size(), 10, 22);
  const Corpus real(data.items.begin(), data.items.begin() + 200);
  const Corpus synthetic(data.items.begin() + 200, data.items.end());
  const auto e = ere_suite(real, synthetic, cfg, 23);
  CHECK(e.ere1 < 0.1);
  CHECK(e.ere3 < 0.05);
  for (double v : {e.ere1, e.ere2, e.ere3}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(e.ere1 <= 0.5);
  CHECK(e.ere2 <= 0.5);
  CHECK(e.mean() == doctest::Approx((e.ere1 + e.ere2 + e.ere3) / 3.0));
  CHECK(ere_suite(real, synthetic, cfg, 23).ere1 == e.ere1);

  const Corpus small(real.begin(), real.begin() + 15);
  CHECK_THROWS_AS(ere_suite(small, synthetic, cfg, 23), InsufficientDataError);
}

TEST_CASE("downstream classification on exchangeable halves") {
  auto data = grammar_items("separable", 600, 10, 31);
  const auto cfg = small_evaluator(data.grammar.vocab().size(), 10, 32);
  const Corpus a(data.items.begin(), data.items.begin() + 200);
  const Corpus b(data.items.begin() + 200, data.items.begin() + 400);
  const Corpus test(data.items.begin() + 400, data.items.end());
  const auto r = downstream_classification(a, b, test, cfg, 33);
  CHECK(std::abs(r.real - r.synthetic) <= 0.05);
  CHECK(r.real >= 0.9);
  CHECK(r.mix >= 0.9);
  CHECK(r.warnings.empty());

  Corpus skewed;
  for (const auto& s : a) {
    if (s.label == 0 || skewed.size() % 20 == 0) skewed.push_back(s);
  }
  std::size_t ones = std::count_if(skewed.begin(), skewed.end(), [](const auto& s) { return s.label == 1; });
  REQUIRE(ones * 9 < skewed.size() - ones);
  const auto w = downstream_classification(skewed, b, test, cfg, 33);
  CHECK_FALSE(w.warnings.empty());
}

TEST_CASE("suite parsing") {
  CHECK(parse_suites("micro") == std::vector<Suite>{Suite::kMicro});
  CHECK(parse_suites("all") == std::vector<Suite>{Suite::kMicro, Suite::kMacro, Suite::kApplication});
  CHECK_THROWS_AS(parse_suites("nano"), ValidationError);
  for (Suite s : parse_suites("all")) CHECK(parse_suites(to_string(s)) == std::vector<Suite>{s});
}

TEST_CASE("report columns follow the requested suites") {
  MetricsReport r;
  r.run_id = "run";
  r.seed = 4;
  r.suites = {Suite::kMicro};
  r.nll_test = 1.5;
  r.self_bleu = 0.25;
  r.adver_suc = 0.3;
  CHECK(r.csv_header() == std::vector<std::string>{"run_id", "seed", "nll_test", "self_bleu"});
  std::ostringstream os;
  write_report_csv(os, r);
  CHECK(os.str() == "run_id,seed,nll_test,self_bleu\nrun,4,1.5,0.25\n");

  r.suites = parse_suites("all");
  r.skipped["macro"] = "too few items";
  const auto h = r.csv_header();
  const auto v = r.csv_values();
  REQUIRE(h.size() == v.size());
  CHECK(h == std::vector<std::string>{"run_id", "seed", "nll_test", "self_bleu", "adver_suc", "ere1", "ere2", "ere3",
                                      "mean_ere", "cls_real", "cls_synthetic", "cls_mix"});
  CHECK(v[5] == "skipped");
  std::ostringstream text;
  write_report_text(text, r);
  CHECK(text.str().find("skipped: too few items") != std::string::npos);
}

TEST_CASE("format_number round trips without locale dependence") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(2.0) == "2");
  CHECK(format_number(-1.25e-7) == "-1.25e-07");
  RngStream rng(1, 1);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.normal() * std::pow(10.0, static_cast<double>(rng.uniform_int(20)) - 10.0);
    CHECK(std::stod(format_number(x)) == x);
  }
  const char* old = std::setlocale(LC_NUMERIC, nullptr);
  const std::string saved = old ? old : "C";
  if (std::setlocale(LC_NUMERIC, "de_DE.UTF-8") != nullptr) CHECK(format_number(0.5) == "0.5");
  std::setlocale(LC_NUMERIC, saved.c_str());
}
