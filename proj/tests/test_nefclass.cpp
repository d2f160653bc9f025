#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "mathink/nefclass.hpp"
#include "support.hpp"

using namespace mathink;
using namespace mathink::nefclass;

namespace {

features::FeatureVector fv(std::vector<double> v) { return {std::move(v)}; }

// Enumerates every sample against every other instead of hashing antecedents.
std::vector<FuzzyRule> brute_force_rules(const std::vector<LabeledSample>& samples, const FuzzyPartition& p,
                                         int classes, int max_rules) {
  auto antecedent = [&](const LabeledSample& s) {
    std::vector<int> a;
    for (std::size_t d = 0; d < p.terms.size(); ++d) {
      int best = 0;
      double best_mu = -1;
      for (std::size_t t = 0; t < p.terms[d].size(); ++t) {
        const double z = (s.x[d] - p.terms[d][t].c) / p.terms[d][t].sigma;
        const double mu = std::exp(-z * z / 2);
        if (mu > best_mu) {
          best_mu = mu;
          best = static_cast<int>(t);
        }
      }
      a.push_back(best);
    }
    return a;
  };
  struct Cand {
    std::vector<int> a;
    int cls, support;
  };
  std::vector<Cand> cands;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto a = antecedent(samples[i]);
    bool first = true;
    for (std::size_t j = 0; j < i; ++j) first = first && antecedent(samples[j]) != a;
    if (!first) continue;
    std::vector<int> counts(classes, 0);
    for (const auto& s : samples)
      if (antecedent(s) == a) ++counts[s.label];
    int cls = 0;
    for (int c = 1; c < classes; ++c)
      if (counts[c] > counts[cls]) cls = c;
    cands.push_back({a, cls, counts[cls]});
  }
  std::vector<FuzzyRule> out;
  for (int c = 0; c < classes; ++c) {
    std::vector<Cand> mine;
    for (const auto& k : cands)
      if (k.cls == c) mine.push_back(k);
    std::sort(mine.begin(), mine.end(), [](const Cand& x, const Cand& y) {
      return x.support != y.support ? x.support > y.support : x.a < y.a;
    });
    for (int i = 0; i < std::min<int>(max_rules, static_cast<int>(mine.size())); ++i) out.push_back({mine[i].a, c});
  }
  return out;
}

}  // namespace

TEST_CASE("gaussian membership") {
  const GaussianMF mf{0.3, 0.2};
  CHECK(mf_eval(mf, 0.3) == 1.0);
  CHECK(mf_eval(mf, 0.5) == doctest::Approx(0.606531).epsilon(1e-6));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0), w(0.01, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double c = u(rng), s = w(rng), x = u(rng);
    const double d = x - c;
    CHECK(std::abs(mf_eval({c, s}, x) - std::exp(-(d * d) / (2 * s * s))) <= 1e-12);
  }
}

TEST_CASE("uniform partition") {
  const auto p = FuzzyPartition::uniform(3, 5);
  REQUIRE(p.dimensions() == 3);
  CHECK(p.total_terms() == 15);
  for (const auto& dim : p.terms) {
    REQUIRE(dim.size() == 5);
    for (int t = 0; t < 5; ++t) {
      CHECK(dim[t].c == doctest::Approx(t / 4.0));
      CHECK(dim[t].sigma == doctest::Approx(1.0 / 8.0));
    }
  }
}

TEST_CASE("rule activation") {
  std::mt19937_64 rng(5);
  auto m = testing::random_model(rng, 3, 2, 4, 4);
  const auto& rule = m.rules.front();
  std::vector<double> centre;
  for (int d = 0; d < 3; ++d) centre.push_back(m.partition.terms[d][rule.antecedent[d]].c);
  CHECK(rule_activation(m, rule, centre, TNorm::Min) == 1.0);
  CHECK(rule_activation(m, rule, centre, TNorm::Product) == 1.0);

  for (int i = 0; i < 200; ++i) {
    const auto x = testing::random_point(rng, 3);
    const double a = mf_eval(m.partition.terms[0][rule.antecedent[0]], x[0]);
    const double b = mf_eval(m.partition.terms[1][rule.antecedent[1]], x[1]);
    const double c = mf_eval(m.partition.terms[2][rule.antecedent[2]], x[2]);
    CHECK(rule_activation(m, rule, x, TNorm::Min) == std::min(a, std::min(b, c)));
    CHECK(std::abs(rule_activation(m, rule, x, TNorm::Product) - a * b * c) <= 1e-15);
  }

  auto far = centre;
  far[1] = 50.0;
  CHECK(rule_activation(m, rule, far, TNorm::Min) == mf_eval(m.partition.terms[1][rule.antecedent[1]], 50.0));
}

TEST_CASE("classification") {
  auto m = make_model({"a", "b"}, {0.02, 1}, 3);
  CHECK_THROWS_AS(classify(m, fv({0.5, 0.5})), DataError);
  m.rules.push_back({{0, 2}, 0});
  auto r = classify(m, fv({0.0, 1.0}));
  CHECK(r.scores == std::vector<double>{1.0, 0.0});
  CHECK(r.best == 0);
  CHECK(r.confidence == 1.0);
  CHECK_FALSE(r.rejected);
  CHECK_THROWS_AS(classify(m, fv({0.5})), DataError);

  m.rules.push_back({{0, 2}, 1});
  r = classify(m, fv({0.0, 1.0}));
  CHECK(r.scores[0] == r.scores[1]);
  CHECK(r.best == 0);

  m.rules = {{{0, 0}, 1}};
  r = classify(m, fv({1.0, 1.0}));
  CHECK(r.rejected);
  CHECK(label_of(m, r) == kUnknownLabel);
  r = classify(m, fv({0.0, 0.0}));
  CHECK(label_of(m, r) == "b");
}

TEST_CASE("empty rule base scores zero") {
  const auto m = make_model({"a", "b", "c"}, {0.02, 2}, 3);
  CHECK(class_scores(m, std::vector<double>(4, 0.5)) == std::vector<double>(3, 0.0));
}

TEST_CASE("scores match a brute force forward pass") {
  std::mt19937_64 rng(9);
  for (int model = 0; model < 50; ++model) {
    const auto tn = model % 2 ? TNorm::Product : TNorm::Min;
    const auto m = testing::random_model(rng, 2, 3, 3, 6, tn);
    for (int i = 0; i < 100; ++i) {
      const auto x = testing::random_point(rng, 2);
      const auto want = testing::brute_force_scores(m, x);
      const auto got = classify(m, fv(x));
      for (std::size_t c = 0; c < want.size(); ++c) CHECK(std::abs(got.scores[c] - want[c]) <= 1e-12);
      const auto best = std::max_element(got.scores.begin(), got.scores.end()) - got.scores.begin();
      CHECK(got.best == best);
      CHECK(std::abs(got.confidence - *std::max_element(want.begin(), want.end())) <= 1e-12);
    }
  }
}

TEST_CASE("adding a rule only raises its own class") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    auto m = testing::random_model(rng, 4, 3, 3, 5);
    const auto x = testing::random_point(rng, 4);
    const auto before = class_scores(m, x);
    FuzzyRule extra{{static_cast<int>(rng() % 3), static_cast<int>(rng() % 3), static_cast<int>(rng() % 3), 0},
                    static_cast<int>(rng() % 3)};
    m.rules.push_back(extra);
    const auto after = class_scores(m, x);
    for (int c = 0; c < 3; ++c) {
      if (c == extra.consequent)
        CHECK(after[c] >= before[c]);
      else
        CHECK(after[c] == before[c]);
    }
  }
}

TEST_CASE("raising one membership never lowers a score") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = testing::random_model(rng, 2, 2, 3, 4);
    auto x = testing::random_point(rng, 2);
    const auto& rule = m.rules[rng() % m.rules.size()];
    const auto before = class_scores(m, x);
    // moving x[0] onto the rule's centre raises that rule's membership in dimension 0
    const double c0 = m.partition.terms[0][rule.antecedent[0]].c;
    const double before_rule = rule_activation(m, rule, x, m.tnorm);
    x[0] = c0;
    CHECK(rule_activation(m, rule, x, m.tnorm) >= before_rule);
    const auto after = class_scores(m, x);
    CHECK(after[rule.consequent] >= before_rule);
    (void)before;
  }
}

TEST_CASE("rule generation") {
  const auto p = FuzzyPartition::uniform(2, 3);
  SUBCASE("one sample gives one rule") {
    const std::vector<LabeledSample> s{{fv({0.1, 0.8}), 1}};
    const auto rules = generate_rules(s, p, 2, 3);
    REQUIRE(rules.size() == 1);
    CHECK(rules[0].antecedent == std::vector<int>{0, 2});
    CHECK(rules[0].consequent == 1);
  }
  SUBCASE("a tied vote goes to the lower class") {
    const std::vector<LabeledSample> s{{fv({0.5, 0.5}), 1}, {fv({0.5, 0.5}), 0}};
    const auto rules = generate_rules(s, p, 2, 3);
    REQUIRE(rules.size() == 1);
    CHECK(rules[0].consequent == 0);
  }
  SUBCASE("per class cap keeps the best supported") {
    std::vector<LabeledSample> s;
    for (int i = 0; i < 3; ++i) s.push_back({fv({0.0, 0.0}), 0});
    for (int i = 0; i < 2; ++i) s.push_back({fv({1.0, 0.0}), 0});
    s.push_back({fv({0.0, 1.0}), 0});
    const auto rules = generate_rules(s, p, 2, 2);
    REQUIRE(rules.size() == 2);
    CHECK(rules[0].antecedent == std::vector<int>{0, 0});
    CHECK(rules[1].antecedent == std::vector<int>{2, 0});
  }
  CHECK_THROWS_AS(generate_rules(std::vector<LabeledSample>{{fv({0.5, 0.5}), 4}}, p, 2, 3), DataError);
}

TEST_CASE("generated rules match a brute force generator") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int dims = 2 + trial % 3;
    const auto samples = testing::blobs(rng, dims, 40, 0.15 + 0.02 * (trial % 5));
    const auto p = FuzzyPartition::uniform(dims, 3);
    for (int cap : {1, 3, 100}) {
      const auto got = generate_rules(samples, p, 2, cap);
      CHECK(got == brute_force_rules(samples, p, 2, cap));
      std::set<std::vector<int>> distinct;
      for (const auto& r : got) distinct.insert(r.antecedent);
      CHECK(distinct.size() == got.size());
    }
  }
}

TEST_CASE("model validation") {
  auto m = make_model({"a", "b"}, {0.02, 2}, 3);
  m.rules.push_back({{0, 1, 2, 0}, 1});
  CHECK_NOTHROW(m.validate());
  auto bad = m;
  bad.rules.push_back({{0, 1, 2, 0}, 0});
  CHECK_THROWS_AS(bad.validate(), DataError);
  bad = m;
  bad.rules[0].antecedent[0] = 3;
  CHECK_THROWS_AS(bad.validate(), DataError);
  bad = m;
  bad.partition.terms[1][0].sigma = 0.0;
  CHECK_THROWS_AS(bad.validate(), DataError);
  bad = m;
  bad.labels.push_back("a");
  CHECK_THROWS_AS(bad.validate(), DataError);
  CHECK(m.class_index("b") == 1);
  CHECK(m.class_index("q") == -1);
}
