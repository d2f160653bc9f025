#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mathink/corpus.hpp"
#include "mathink/knowledge.hpp"
#include "mathink/nefclass.hpp"

namespace mathink::eval {

/// One labeled sample per stroke. Throws DataError for a stroke label the
/// model does not know.
std::vector<nefclass::LabeledSample> stroke_samples(const nefclass::FuzzyModel& model,
                                                    std::span<const corpus::Expression> expressions);

struct EvalOptions {
  bool reject = true;        // rejected strokes count as "unknown"
  bool feed_labels = false;  // skip the classifier and use the true labels
};

struct EvalReport {
  int expressions = 0;
  int strokes = 0;
  int correct_strokes = 0;
  int rejected_strokes = 0;
  int eligible_symbols = 0;  // true symbols whose strokes were all classified correctly
  int reconstructed_symbols = 0;
  int correct_trees = 0;

  double stroke_accuracy = 0.0;  // percent
  double reconstruction_accuracy = 0.0;
  double structural_accuracy = 0.0;
  double mean_latency_ms = 0.0;  // features + classify per stroke
  double p95_latency_ms = 0.0;

  /// confusion[truth][predicted] = count
  std::map<std::string, std::map<std::string, int>> confusion;
  std::vector<std::string> failed_expressions;
};

EvalReport evaluate(const nefclass::FuzzyModel& model, const structure::Knowledge& knowledge,
                    std::span<const corpus::Expression> expressions, const EvalOptions& options = {});

/// Percent of confusion mass on the diagonal.
double accuracy_from_confusion(const std::map<std::string, std::map<std::string, int>>& confusion);

/// Nearest-rank percentile of the values, q in (0, 100].
double percentile(std::vector<double> values, double q);

nlohmann::json to_json(const EvalReport& report);

}  // namespace mathink::eval
