#include "mathink/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mathink/engine.hpp"
#include "mathink/error.hpp"
#include "mathink/structure.hpp"

namespace mathink::eval {

std::vector<nefclass::LabeledSample> stroke_samples(const nefclass::FuzzyModel& model,
                                                    std::span<const corpus::Expression> expressions) {
  std::vector<nefclass::LabeledSample> out;
  for (const auto& e : expressions) {
    for (std::size_t i = 0; i < e.strokes.size(); ++i) {
      const int k = model.class_index(e.stroke_labels.at(i));
      if (k < 0) throw DataError(e.id + ": stroke label '" + e.stroke_labels[i] + "' is not a model class");
      out.push_back({features::extract_features(e.strokes[i], model.feature_params), k});
    }
  }
  return out;
}

double accuracy_from_confusion(const std::map<std::string, std::map<std::string, int>>& confusion) {
  long total = 0, hit = 0;
  for (const auto& [truth, row] : confusion) {
    for (const auto& [predicted, n] : row) {
      total += n;
      if (predicted == truth) hit += n;
    }
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(hit) / static_cast<double>(total);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

namespace {

double percent(int num, int den) { return den == 0 ? 0.0 : 100.0 * num / den; }

}  // namespace

EvalReport evaluate(const nefclass::FuzzyModel& model, const structure::Knowledge& knowledge,
                    std::span<const corpus::Expression> expressions, const EvalOptions& options) {
  EvalReport r;
  std::vector<double> latencies;
  for (const auto& e : expressions) {
    ++r.expressions;
    std::vector<structure::RecognizedStroke> strokes;
    std::map<std::string, bool> stroke_ok;
    for (std::size_t i = 0; i < e.strokes.size(); ++i) {
      const auto& stroke = e.strokes[i];
      const std::string& truth = e.stroke_labels.at(i);
      std::string predicted = truth;
      double confidence = 1.0;
      if (!options.feed_labels) {
        const auto rec = engine::recognize_stroke(model, stroke);
        latencies.push_back(rec.seconds * 1000.0);
        predicted = options.reject ? rec.label : model.labels.at(rec.classification.best);
        confidence = rec.classification.confidence;
        if (rec.classification.rejected) ++r.rejected_strokes;
      }
      ++r.strokes;
      ++r.confusion[truth][predicted];
      stroke_ok[stroke.id] = predicted == truth;
      if (predicted == truth) ++r.correct_strokes;
      strokes.push_back({stroke.id, predicted, ink::bbox_of(stroke), confidence});
    }

    const auto report = structure::analyze(strokes, knowledge);
    std::set<std::pair<std::string, std::vector<std::string>>> found;
    for (const auto& s : report.symbols) found.insert({s.label, s.strokes});
    for (const auto& t : e.symbols) {
      if (!std::all_of(t.strokes.begin(), t.strokes.end(), [&](const auto& id) { return stroke_ok.at(id); }))
        continue;
      ++r.eligible_symbols;
      auto ids = t.strokes;
      std::sort(ids.begin(), ids.end());
      if (found.count({t.label, ids})) ++r.reconstructed_symbols;
    }
    if (report.tree == e.tree)
      ++r.correct_trees;
    else
      r.failed_expressions.push_back(e.id);
  }

  r.stroke_accuracy = percent(r.correct_strokes, r.strokes);
  r.reconstruction_accuracy = percent(r.reconstructed_symbols, r.eligible_symbols);
  r.structural_accuracy = percent(r.correct_trees, r.expressions);
  if (!latencies.empty()) {
    double sum = 0.0;
    for (double v : latencies) sum += v;
    r.mean_latency_ms = sum / static_cast<double>(latencies.size());
    r.p95_latency_ms = percentile(latencies, 95.0);
  }
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json confusion = nlohmann::json::object();
  for (const auto& [truth, row] : r.confusion)
    for (const auto& [predicted, n] : row) confusion[truth][predicted] = n;
  return {
      {"expressions", r.expressions},
      {"strokes", r.strokes},
      {"correct_strokes", r.correct_strokes},
      {"rejected_strokes", r.rejected_strokes},
      {"eligible_symbols", r.eligible_symbols},
      {"reconstructed_symbols", r.reconstructed_symbols},
      {"correct_trees", r.correct_trees},
      {"stroke_accuracy", r.stroke_accuracy},
      {"reconstruction_accuracy", r.reconstruction_accuracy},
      {"structural_accuracy", r.structural_accuracy},
      {"latency_ms", {{"mean", r.mean_latency_ms}, {"p95", r.p95_latency_ms}}},
      {"confusion", confusion},
      {"failed_expressions", r.failed_expressions},
  };
}

}  // namespace mathink::eval
