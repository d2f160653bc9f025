#pragma once

#include <span>
#include <string>
#include <vector>

#include "mathink/features.hpp"

namespace mathink::nefclass {

inline constexpr double kSigmaMin = 1e-3;
inline constexpr double kSigmaMax = 1.0;

struct GaussianMF {
  double c = 0.5;
  double sigma = 0.125;
  bool operator==(const GaussianMF&) const = default;
};

/// exp(-(x - c)^2 / (2 sigma^2))
double mf_eval(const GaussianMF& mf, double x);

/// Linguistic terms per input dimension.
struct FuzzyPartition {
  std::vector<std::vector<GaussianMF>> terms;

  std::size_t dimensions() const { return terms.size(); }
  std::size_t total_terms() const;
  bool operator==(const FuzzyPartition&) const = default;

  /// T terms per dimension, centers evenly spaced on [0, 1], sigma = 1 / (2 (T - 1)).
  static FuzzyPartition uniform(std::size_t dimensions, int terms_per_dimension);
};

struct FuzzyRule {
  std::vector<int> antecedent;  // one term index per input dimension
  int consequent = 0;
  bool operator==(const FuzzyRule&) const = default;
};

enum class TNorm { Min, Product };

struct FuzzyModel {
  std::vector<std::string> labels;
  FuzzyPartition partition;
  std::vector<FuzzyRule> rules;
  features::SimplifyParams feature_params;
  TNorm tnorm = TNorm::Min;
  double reject_threshold = 0.1;
  int max_rules_per_class = 3;

  std::size_t inputs() const { return partition.dimensions(); }
  std::size_t classes() const { return labels.size(); }
  /// Index of a label, or -1.
  int class_index(const std::string& label) const;

  /// Throws DataError on the first broken invariant.
  void validate() const;

  bool operator==(const FuzzyModel&) const = default;
};

struct Classification {
  std::vector<double> scores;
  int best = 0;
  double confidence = 0.0;
  bool rejected = false;  // confidence below the model's reject threshold
};

inline const std::string kUnknownLabel = "unknown";

double rule_activation(const FuzzyModel& model, const FuzzyRule& rule, std::span<const double> x, TNorm tnorm);
double rule_activation(const FuzzyModel& model, const FuzzyRule& rule, const features::FeatureVector& x);

/// Class scores with max aggregation over rules. Never throws on an empty rule
/// base (every score is 0); checks the input length.
std::vector<double> class_scores(const FuzzyModel& model, std::span<const double> x);

/// Throws DataError on dimension mismatch or a model without rules.
Classification classify(const FuzzyModel& model, const features::FeatureVector& x);

/// Label for a classification, or kUnknownLabel when rejected.
std::string label_of(const FuzzyModel& model, const Classification& c);

struct LabeledSample {
  features::FeatureVector x;
  int label = 0;
};

/// Per-dimension best-matching term (ties to the lowest term index).
std::vector<int> best_antecedent(const FuzzyPartition& partition, std::span<const double> x);

/// One candidate rule per distinct best-matching antecedent, consequent by
/// majority vote (ties to the lowest class), keeping at most
/// max_rules_per_class rules per class by descending support.
std::vector<FuzzyRule> generate_rules(std::span<const LabeledSample> samples, const FuzzyPartition& partition,
                                      int class_count, int max_rules_per_class);

/// Fresh model with a uniform partition and no rules.
FuzzyModel make_model(std::vector<std::string> labels, features::SimplifyParams params, int terms_per_dimension = 5);

}  // namespace mathink::nefclass
