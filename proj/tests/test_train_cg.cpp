#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>
#include <set>

#include "mathink/train.hpp"
#include "support.hpp"

using namespace mathink;
using namespace mathink::train;
using nefclass::FuzzyModel;
using nefclass::LabeledSample;

namespace {

std::vector<LabeledSample> random_batch(std::mt19937_64& rng, int inputs, int classes, int n) {
  std::vector<LabeledSample> out;
  for (int i = 0; i < n; ++i) out.push_back({{testing::random_point(rng, inputs)}, static_cast<int>(rng() % classes)});
  return out;
}

double loop_loss(const FuzzyModel& m, const std::vector<LabeledSample>& batch, double tau) {
  double total = 0;
  for (const auto& s : batch) {
    for (std::size_t c = 0; c < m.classes(); ++c) {
      double sum = 0;
      for (const auto& r : m.rules) {
        if (r.consequent != static_cast<int>(c)) continue;
        double act = 1;
        for (std::size_t d = 0; d < s.x.size(); ++d) act *= nefclass::mf_eval(m.partition.terms[d][r.antecedent[d]], s.x[d]);
        sum += std::exp(tau * act);
      }
      const double score = sum > 0 ? std::log(sum) / tau : 0.0;
      const double e = score - (static_cast<int>(c) == s.label ? 1.0 : 0.0);
      total += e * e;
    }
  }
  return total / static_cast<double>(batch.size() * m.classes());
}

FuzzyModel with_genes(FuzzyModel m, const std::vector<double>& g) {
  decode(g, m.partition);
  return m;
}

// Two classes whose single rules sit on their own samples with narrow widths.
std::pair<FuzzyModel, std::vector<LabeledSample>> solved_problem() {
  auto m = nefclass::make_model({"a", "b"}, {0.02, 1}, 2);
  for (auto& dim : m.partition.terms) {
    dim[0] = {0.0, 0.01};
    dim[1] = {1.0, 0.01};
  }
  m.rules = {{{0, 0}, 0}, {{1, 1}, 1}};
  return {m, {{{{0.0, 0.0}}, 0}, {{{1.0, 1.0}}, 1}}};
}

}  // namespace

TEST_CASE("loss of a solved problem is zero") {
  const auto [m, batch] = solved_problem();
  CHECK(loss(m, batch) == 0.0);
  for (double g : gradient(m, batch)) CHECK(std::abs(g) <= 1e-10);
}

TEST_CASE("loss of a single rule network") {
  auto m = nefclass::make_model({"only"}, {0.02, 1}, 2);
  m.partition.terms[0] = {{0.2, 0.3}, {0.9, 0.1}};
  m.partition.terms[1] = {{0.6, 0.25}, {0.1, 0.4}};
  m.rules = {{{0, 1}, 0}};
  const std::vector<LabeledSample> batch{{{{0.5, 0.3}}, 0}};
  const double z = (0.3 * 0.3) / (2 * 0.09) + (0.2 * 0.2) / (2 * 0.16);
  const double a = std::exp(-z);
  CHECK(std::abs(loss(m, batch) - (a - 1) * (a - 1)) <= 1e-12);
  CHECK(std::abs(soft_scores(m, batch[0].x.values, 20.0)[0] - a) <= 1e-12);
}

TEST_CASE("loss matches a per sample loop") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    const auto m = testing::random_model(rng, 3, 3, 3, 6, nefclass::TNorm::Product);
    const auto batch = random_batch(rng, 3, 3, 8);
    for (double tau : {5.0, 20.0}) CHECK(std::abs(loss(m, batch, tau) - loop_loss(m, batch, tau)) <= 1e-12);
  }
}

TEST_CASE("gradient matches central differences") {
  std::mt19937_64 rng(3);
  const double h = 1e-5;
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = testing::random_model(rng, 3, 3, 3, 6, nefclass::TNorm::Product);
    const auto batch = random_batch(rng, 3, 3, 6);
    const auto g = gradient(m, batch);
    const auto x = encode(m.partition);
    REQUIRE(g.size() == x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto up = x, down = x;
      up[i] += h;
      down[i] -= h;
      const double fd = (loss(with_genes(m, up), batch) - loss(with_genes(m, down), batch)) / (2 * h);
      const double scale = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
      CHECK(std::abs(fd - g[i]) / scale <= 1e-4);
    }
  }
}

TEST_CASE("gradient projection at active bounds") {
  const std::vector<double> lo{0.0, nefclass::kSigmaMin}, hi{1.0, 1.0};
  std::vector<double> x{0.5, nefclass::kSigmaMin};
  std::vector<double> g{0.3, 0.7};
  project_gradient(x, g, lo, hi);
  CHECK(g == std::vector<double>{0.3, 0.0});
  g = {0.3, -0.7};
  project_gradient(x, g, lo, hi);
  CHECK(g == std::vector<double>{0.3, -0.7});
  x = {1.0, 0.5};
  g = {-0.2, 0.1};
  project_gradient(x, g, lo, hi);
  CHECK(g == std::vector<double>{0.0, 0.1});
}

TEST_CASE("conjugate gradients solve a convex quadratic") {
  // f = 1/2 x'Ax - b'x with a fixed SPD matrix; minimiser solves Ax = b.
  const double A[5][5] = {{4, 1, 0, 0, 0}, {1, 3, 1, 0, 0}, {0, 1, 5, 1, 0}, {0, 0, 1, 2, 0.5}, {0, 0, 0, 0.5, 6}};
  const double b[5] = {1, -2, 3, 0.5, -1};
  const Objective f = [&](std::span<const double> x, std::span<double> grad) {
    double v = 0;
    for (int i = 0; i < 5; ++i) {
      double ax = 0;
      for (int j = 0; j < 5; ++j) ax += A[i][j] * x[j];
      grad[i] = ax - b[i];
      v += 0.5 * x[i] * ax - b[i] * x[i];
    }
    return v;
  };
  CGConfig cfg;
  cfg.gradient_tolerance = 1e-8;
  const auto r = minimize_cg(f, std::vector<double>(5, 0.0), cfg);
  std::vector<double> grad(5);
  f(r.x, grad);
  double norm = 0;
  for (double v : grad) norm += v * v;
  CHECK(std::sqrt(norm) < 1e-8);
  CHECK(r.iterations <= 5);
  CHECK(r.converged);
}

TEST_CASE("fine-tuning never raises the loss") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = testing::random_model(rng, 4, 3, 3, 6, nefclass::TNorm::Min);
    const auto batch = random_batch(rng, 4, 3, 12);
    CGConfig cfg;
    cfg.max_iterations = 30;
    const auto r = run_cg(cfg, m, batch);
    REQUIRE_FALSE(r.loss_history.empty());
    for (std::size_t i = 1; i < r.loss_history.size(); ++i) CHECK(r.loss_history[i] <= r.loss_history[i - 1]);
    CHECK(r.loss_after <= r.loss_before);
    CHECK(r.loss_after == doctest::Approx(loss(r.model, batch)));
    CHECK(r.model.rules == m.rules);
    CHECK(r.model.tnorm == m.tnorm);
  }
}

TEST_CASE("a solved model is left alone") {
  const auto [m, batch] = solved_problem();
  const auto r = run_cg(CGConfig{}, m, batch);
  CHECK(r.iterations <= 1);
  CHECK(r.model == m);
}

TEST_CASE("a corrected sample takes its new label") {
  std::mt19937_64 rng(21);
  auto samples = testing::blobs(rng, 2, 10, 0.08);
  auto m = nefclass::make_model({"low", "high"}, {0.02, 1}, 3);
  m.rules = nefclass::generate_rules(samples, m.partition, 2, 3);
  const LabeledSample corrected{{{0.45, 0.45}}, 1};
  REQUIRE(nefclass::classify(m, corrected.x).best == 0);
  const auto batch = correction_batch(corrected, samples, 19, 4);
  REQUIRE(batch.size() == 20);
  const auto r = run_cg(CGConfig{}, m, batch);
  CHECK(nefclass::classify(r.model, corrected.x).best == 1);
}

TEST_CASE("correction batches") {
  std::vector<LabeledSample> reservoir;
  for (int i = 0; i < 50; ++i) reservoir.push_back({{{i / 50.0}}, i});
  const LabeledSample head{{{0.5}}, -1};
  auto small = correction_batch(head, std::span(reservoir).first(10), 31, 1);
  REQUIRE(small.size() == 11);
  CHECK(small[0].label == -1);
  for (int i = 0; i < 10; ++i) CHECK(small[i + 1].label == i);

  const auto big = correction_batch(head, reservoir, 31, 1);
  REQUIRE(big.size() == 32);
  CHECK(big[0].label == -1);
  std::set<int> seen;
  for (std::size_t i = 1; i < big.size(); ++i) seen.insert(big[i].label);
  CHECK(seen.size() == 31);
  CHECK(seen.count(49) == 1);
  CHECK(seen.count(48) == 1);
  CHECK(correction_batch(head, reservoir, 31, 1).size() == big.size());
  const auto again = correction_batch(head, reservoir, 31, 1);
  for (std::size_t i = 0; i < big.size(); ++i) CHECK(again[i].label == big[i].label);
}

TEST_CASE("fine-tuning a full size model is fast") {
  std::mt19937_64 rng(40);
  std::vector<std::string> labels;
  for (int c = 0; c < 40; ++c) labels.push_back("c" + std::to_string(c));
  auto m = nefclass::make_model(labels, {}, 5);
  const auto batch = random_batch(rng, 32, 40, 32);
  m.rules = nefclass::generate_rules(batch, m.partition, 40, 3);
  const auto start = std::chrono::steady_clock::now();
  const auto r = run_cg(CGConfig{}, m, batch);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  CHECK(ms <= 500.0);
  CHECK(r.loss_after <= r.loss_before);
}
