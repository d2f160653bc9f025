#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mathink/eval.hpp"
#include "support.hpp"

using namespace mathink;
using namespace mathink::eval;

namespace {

std::vector<corpus::Expression> clean_expressions(int n) {
  corpus::CorpusConfig c;
  c.seed = 3;
  c.train_count = n;
  c.test_count = 0;
  c.jitter = corpus::Jitter::none();
  return corpus::generate(c).train;
}

}  // namespace

TEST_CASE("feeding true labels scores full marks") {
  const auto ex = clean_expressions(40);
  const auto r = evaluate(testing::clean_snapshot()->model, structure::default_knowledge(), ex, {true, true});
  CHECK(r.stroke_accuracy == 100.0);
  CHECK(r.reconstruction_accuracy == 100.0);
  CHECK(r.structural_accuracy == 100.0);
  CHECK(r.expressions == 40);
  CHECK(r.mean_latency_ms == 0.0);
}

TEST_CASE("one wrong stroke costs exactly one stroke") {
  const auto model = testing::clean_snapshot()->model;
  const auto k = structure::default_knowledge();
  std::vector<corpus::Expression> ex;
  for (const auto& e : clean_expressions(60))
    if (evaluate(model, k, std::vector{e}).correct_strokes == static_cast<int>(e.strokes.size())) ex.push_back(e);
  REQUIRE(ex.size() >= 20);
  const auto base = evaluate(model, k, ex);
  REQUIRE(base.stroke_accuracy == 100.0);

  auto flipped = ex;
  auto& label = flipped[3].stroke_labels[0];
  label = label == "x" ? "y" : "x";
  const auto r = evaluate(model, k, flipped);
  const double n = r.strokes;
  CHECK(std::abs(r.stroke_accuracy - (n - 1) / n * 100.0) <= 1e-9);
  CHECK(r.correct_strokes == r.strokes - 1);
  CHECK(r.eligible_symbols == base.eligible_symbols - 1);
}

TEST_CASE("percentages agree with the confusion matrix") {
  corpus::CorpusConfig c;
  c.seed = 4;
  c.train_count = 30;
  c.test_count = 0;
  const auto ex = corpus::generate(c).train;
  const auto model = testing::clean_snapshot()->model;
  for (bool reject : {true, false}) {
    const auto r = evaluate(model, structure::default_knowledge(), ex, {reject, false});
    CHECK(std::abs(r.stroke_accuracy - accuracy_from_confusion(r.confusion)) <= 1e-9);
    int total = 0, diagonal = 0;
    for (const auto& [truth, row] : r.confusion)
      for (const auto& [pred, count] : row) {
        total += count;
        if (truth == pred) diagonal += count;
      }
    CHECK(total == r.strokes);
    CHECK(diagonal == r.correct_strokes);
    CHECK(std::abs(r.structural_accuracy - 100.0 * r.correct_trees / r.expressions) <= 1e-9);
    CHECK(r.failed_expressions.size() == static_cast<std::size_t>(r.expressions - r.correct_trees));
    CHECK(r.mean_latency_ms > 0.0);
    CHECK(r.p95_latency_ms >= 0.0);
    if (!reject) CHECK(r.confusion.count(nefclass::kUnknownLabel) == 0);
    const auto j = to_json(r);
    CHECK(j.at("stroke_accuracy") == r.stroke_accuracy);
    CHECK(j.at("latency_ms").at("p95") == r.p95_latency_ms);
  }
}

TEST_CASE("nearest rank percentile") {
  CHECK(percentile({}, 95) == 0.0);
  CHECK(percentile({3, 1, 2}, 100) == 3.0);
  CHECK(percentile({3, 1, 2}, 50) == 2.0);
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(101 - i);
  CHECK(percentile(v, 95) == 95.0);
  CHECK(percentile(v, 1) == 1.0);
  std::vector<double> twenty;
  for (int i = 1; i <= 20; ++i) twenty.push_back(i);
  CHECK(percentile(twenty, 95) == 19.0);
}

TEST_CASE("unknown stroke labels are refused") {
  auto ex = clean_expressions(2);
  ex[0].stroke_labels[0] = "omega";
  CHECK_THROWS_AS(stroke_samples(testing::clean_snapshot()->model, ex), DataError);
}
