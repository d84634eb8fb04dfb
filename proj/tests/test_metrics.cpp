#include <doctest.h>

#include <cmath>

#include "fixcommit/errors.hpp"
#include "fixcommit/evaluation.hpp"
#include "fixcommit/metrics.hpp"
#include "fixcommit/random.hpp"
#include "support/synthetic.hpp"

using namespace fixcommit;

namespace {

Tokens toks(const std::string& s) { return lexical_tokens(s); }

// Longest common subsequence by enumerating every subsequence of a.
std::size_t brute_force_lcs(const Tokens& a, const Tokens& b) {
  std::size_t best = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << a.size()); ++mask) {
    std::size_t j = 0, len = 0;
    bool ok = true;
    for (std::size_t i = 0; i < a.size() && ok; ++i) {
      if (!(mask >> i & 1)) continue;
      while (j < b.size() && b[j] != a[i]) ++j;
      if (j == b.size()) ok = false;
      else {
        ++j;
        ++len;
      }
    }
    if (ok) best = std::max(best, len);
  }
  return best;
}

Tokens random_tokens(Rng& rng, std::size_t max_len) {
  Tokens t(1 + rng.below(max_len));
  for (auto& s : t) s = std::string(1, static_cast<char>('a' + rng.below(3)));
  return t;
}

TripleExample example(const std::string& buggy, const std::string& fixed, const std::string& message) {
  TripleExample ex;
  ex.buggy = buggy;
  ex.fixed = fixed;
  ex.message = message;
  ex.language = "java";
  ex.line_tags = line_tags_from_diff(line_diff(buggy, fixed));
  return ex;
}

}  // namespace

TEST_CASE("bleu4 hand-derived example") {
  const std::vector<Tokens> cand = {toks("the the the cat")};
  const std::vector<Tokens> ref = {toks("the cat sat")};
  const BleuStats s = bleu4_stats(cand, ref);
  // unigrams: the x3 clipped to 1, cat 1 -> 2/4
  // bigrams: "the the" x2, "the cat" -> 1 match of 3, smoothed 2/4
  // trigrams: 0 of 2, smoothed 1/3; 4-grams: 0 of 1, smoothed 1/2
  CHECK(s.matches == std::array<std::size_t, 4>{2, 1, 0, 0});
  CHECK(s.totals == std::array<std::size_t, 4>{4, 3, 2, 1});
  CHECK(s.brevity_penalty == 1.0);
  const double expected = 100.0 * std::pow(0.5 * 0.5 * (1.0 / 3.0) * 0.5, 0.25);
  CHECK(s.score == doctest::Approx(expected).epsilon(1e-12));
  CHECK(s.score == doctest::Approx(45.180100180492246).epsilon(1e-12));

  // shorter candidate triggers the brevity penalty exp(1 - r/c)
  const std::vector<Tokens> short_cand = {toks("the cat")};
  const BleuStats b = bleu4_stats(short_cand, ref);
  CHECK(b.brevity_penalty == doctest::Approx(std::exp(1.0 - 3.0 / 2.0)).epsilon(1e-14));
}

TEST_CASE("metric extremes") {
  const std::vector<Tokens> a = {toks("int x = 1 ;"), toks("return x ;"), toks("a")};
  const std::vector<Tokens> disjoint = {toks("p q r s t"), toks("u v"), toks("w")};
  CHECK(bleu4(a, a) == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(rouge_l(a, a) == 100.0);
  CHECK(exact_match(a, a) == 100.0);
  CHECK(bleu4(disjoint, a) == 0.0);
  CHECK(rouge_l(disjoint, a) == 0.0);
  CHECK(exact_match(disjoint, a) == 0.0);
  CHECK_THROWS_AS(bleu4(a, std::vector<Tokens>{}), InputError);
  CHECK_THROWS_AS(rouge_l(a, std::vector<Tokens>{}), InputError);
  CHECK_THROWS_AS(exact_match(a, std::vector<Tokens>{}), InputError);
}

TEST_CASE("rouge-l hand example and oracle") {
  const Tokens c = toks("a b c d"), r = toks("a c d");
  CHECK(lcs_length(c, r) == 3);
  // P = 3/4, R = 1, F1 = 2PR / (P + R)
  CHECK(rouge_l_pair(c, r) == doctest::Approx(2.0 * 0.75 / 1.75).epsilon(1e-15));
  CHECK(rouge_l_pair(c, r, 2.0) == doctest::Approx(5.0 * 0.75 / (1.0 + 4.0 * 0.75)).epsilon(1e-15));
  Rng rng(21);
  for (int i = 0; i < 500; ++i) {
    const Tokens a = random_tokens(rng, 8), b = random_tokens(rng, 8);
    CHECK(lcs_length(a, b) == brute_force_lcs(a, b));
  }
}

TEST_CASE("exact match fractions and permutation invariance") {
  const std::vector<Tokens> ref = {toks("a"), toks("b"), toks("c"), toks("d")};
  const std::vector<Tokens> cand = {toks("a"), toks("x"), toks("y"), toks("z")};
  CHECK(exact_match(cand, ref) == 25.0);
  Rng rng(22);
  std::vector<Tokens> c, r;
  for (int i = 0; i < 12; ++i) {
    c.push_back(random_tokens(rng, 6));
    r.push_back(random_tokens(rng, 6));
  }
  const double b0 = bleu4(c, r), r0 = rouge_l(c, r), e0 = exact_match(c, r);
  std::vector<std::size_t> perm(c.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = (i * 5 + 3) % perm.size();
  std::vector<Tokens> pc, pr;
  for (auto k : perm) {
    pc.push_back(c[k]);
    pr.push_back(r[k]);
  }
  CHECK(bleu4(pc, pr) == doctest::Approx(b0).epsilon(1e-14));
  CHECK(rouge_l(pc, pr) == doctest::Approx(r0).epsilon(1e-14));
  CHECK(exact_match(pc, pr) == e0);
}

TEST_CASE("length buckets") {
  const std::vector<std::string> refs = {"a", "a b c", "a b c d e f", "a b"};
  const std::vector<std::string> cands = {"a", "a b", "a b c d e f", "x"};
  const std::vector<std::size_t> one = {0};
  const auto single = length_bucket_report(cands, refs, one);
  const auto global = score_texts(cands, refs);
  REQUIRE(single.size() == 1);
  CHECK(single[0].metrics.bleu4 == global.bleu4);
  CHECK(single[0].metrics.rouge_l == global.rouge_l);
  CHECK(single[0].metrics.count == 4);

  const std::vector<std::size_t> edges = {0, 2, 4, 100};
  const auto buckets = length_bucket_report(cands, refs, edges);
  REQUIRE(buckets.size() == 4);
  std::size_t total = 0;
  for (const auto& b : buckets) total += b.metrics.count;
  CHECK(total == 4);
  CHECK(buckets[3].empty);
  CHECK(buckets[3].metrics.bleu4 == 0.0);
  CHECK(buckets[0].metrics.count == 1);
  const std::vector<std::size_t> bad = {3, 2};
  CHECK_THROWS_AS(length_bucket_report(cands, refs, bad), InputError);
}

TEST_CASE("naive copy baseline") {
  const std::vector<std::size_t> edges = {0};
  const std::vector<TripleExample> differing = {example("a b\nc", "a b\nd", "fix c d"),
                                                example("x = 1 ;", "x = 2 ;", "fix x value")};
  const EvalReport r = naive_baseline(differing, edges);
  REQUIRE(r.repair.has_value());
  CHECK(r.repair->exact_match == 0.0);
  CHECK_FALSE(r.commit.has_value());
  const std::vector<TripleExample> identical = {example("a b c d", "a b c d", "fix"),
                                                example("p q r s t", "p q r s t", "fix")};
  CHECK(naive_baseline(identical, edges).repair->bleu4 == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("paired bootstrap") {
  Rng rng(23);
  std::vector<Tokens> refs, good, bad;
  for (int i = 0; i < 30; ++i) {
    refs.push_back(random_tokens(rng, 6));
    good.push_back(refs.back());
    bad.push_back(random_tokens(rng, 6));
  }
  const CorpusMetric em = [](std::span<const Tokens> c, std::span<const Tokens> r) { return exact_match(c, r); };
  const auto better = paired_bootstrap(bad, good, refs, em, 200, 1);
  CHECK(better.observed_delta > 50.0);
  CHECK(better.p_value == 0.0);
  CHECK(better.ci_low > 0.0);
  const auto same = paired_bootstrap(good, good, refs, em, 50, 1);
  CHECK(same.observed_delta == 0.0);
  CHECK(same.p_value == 1.0);
}

TEST_CASE("system predictions and reports") {
  const auto corpus = fixcommit::testing::synthetic_corpus(4, 31);
  ModelConfig mc;
  mc.vocab_size = corpus.bpe.vocab_size();
  mc.hidden = 16;
  mc.layers = 1;
  mc.heads = 2;
  mc.max_len = 64;
  TrainConfig t;
  t.max_epochs = 1;
  RegimeData data;
  data.train = corpus.examples;
  data.bpe = &corpus.bpe;
  const TrainedSystem cascaded = train_regime(Regime::cascaded, mc, t, data);
  const std::vector<std::size_t> edges = {0, 10};
  const auto preds = predict_all(cascaded, corpus.examples, corpus.bpe);
  const auto oracle = predict_all(cascaded, corpus.examples, corpus.bpe, {}, true);
  REQUIRE(preds.size() == 4);
  for (const auto& p : preds) CHECK(p.commit.has_value());
  const EvalReport report = build_report(corpus.examples, preds, edges);
  CHECK(report.commit.has_value());
  CHECK(report.tag_accuracy.has_value());
  CHECK(report.samples == 4);
  CHECK(build_report(corpus.examples, oracle, edges).commit.has_value());

  const TrainedSystem joint = train_regime(Regime::joint, mc, t, data);
  CHECK_THROWS_AS(predict(joint, corpus.examples[0], corpus.bpe, {}, true), ContractError);
  const auto jp = predict_all(joint, corpus.examples, corpus.bpe, DecodeStrategy::beam(2));
  CHECK(build_report(corpus.examples, jp, edges).commit.has_value());
}
