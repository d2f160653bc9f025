#include "mathink/nefclass.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace mathink::nefclass {

double mf_eval(const GaussianMF& mf, double x) {
  const double d = x - mf.c;
  return std::exp(-(d * d) / (2.0 * mf.sigma * mf.sigma));
}

std::size_t FuzzyPartition::total_terms() const {
  std::size_t n = 0;
  for (const auto& dim : terms) n += dim.size();
  return n;
}

FuzzyPartition FuzzyPartition::uniform(std::size_t dimensions, int terms_per_dimension) {
  if (terms_per_dimension < 1) throw DataError("a partition needs at least one term per dimension");
  FuzzyPartition p;
  std::vector<GaussianMF> dim;
  if (terms_per_dimension == 1) {
    dim.push_back({0.5, 0.5});
  } else {
    const double sigma = 1.0 / (2.0 * (terms_per_dimension - 1));
    for (int t = 0; t < terms_per_dimension; ++t)
      dim.push_back({static_cast<double>(t) / (terms_per_dimension - 1), sigma});
  }
  p.terms.assign(dimensions, dim);
  return p;
}

int FuzzyModel::class_index(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  return it == labels.end() ? -1 : static_cast<int>(it - labels.begin());
}

void FuzzyModel::validate() const {
  if (labels.empty()) throw DataError("model has no classes");
  if (std::set<std::string>(labels.begin(), labels.end()).size() != labels.size())
    throw DataError("model class labels are not unique");
  if (static_cast<int>(inputs()) != feature_params.feature_length())
    throw DataError("model input count " + std::to_string(inputs()) + " does not match feature length " +
                    std::to_string(feature_params.feature_length()));
  if (feature_params.epsilon < 0.0 || feature_params.vertices < 2) throw DataError("invalid feature parameters");
  for (std::size_t d = 0; d < partition.terms.size(); ++d) {
    if (partition.terms[d].empty()) throw DataError("dimension " + std::to_string(d) + " has no terms");
    for (const auto& mf : partition.terms[d]) {
      if (!std::isfinite(mf.c) || mf.c < 0.0 || mf.c > 1.0)
        throw DataError("center out of [0,1] in dimension " + std::to_string(d));
      if (!std::isfinite(mf.sigma) || mf.sigma < kSigmaMin || mf.sigma > kSigmaMax)
        throw DataError("width out of bounds in dimension " + std::to_string(d));
    }
  }
  std::set<std::vector<int>> seen;
  for (std::size_t r = 0; r < rules.size(); ++r) {
    const auto& rule = rules[r];
    if (rule.antecedent.size() != inputs()) throw DataError("rule " + std::to_string(r) + " has wrong arity");
    for (std::size_t d = 0; d < rule.antecedent.size(); ++d)
      if (rule.antecedent[d] < 0 || rule.antecedent[d] >= static_cast<int>(partition.terms[d].size()))
        throw DataError("rule " + std::to_string(r) + " references a missing term");
    if (rule.consequent < 0 || rule.consequent >= static_cast<int>(classes()))
      throw DataError("rule " + std::to_string(r) + " has an unknown class");
    if (!seen.insert(rule.antecedent).second) throw DataError("rule " + std::to_string(r) + " duplicates an antecedent");
  }
  if (!(reject_threshold >= 0.0 && reject_threshold <= 1.0)) throw DataError("reject threshold out of [0,1]");
  if (max_rules_per_class < 0) throw DataError("negative rule budget");
}

double rule_activation(const FuzzyModel& model, const FuzzyRule& rule, std::span<const double> x, TNorm tnorm) {
  if (x.size() != model.inputs() || rule.antecedent.size() != model.inputs())
    throw DataError("dimension mismatch: expected " + std::to_string(model.inputs()) + " inputs");
  double acc = 1.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double mu = mf_eval(model.partition.terms[d][rule.antecedent[d]], x[d]);
    acc = tnorm == TNorm::Min ? std::min(acc, mu) : acc * mu;
  }
  return acc;
}

double rule_activation(const FuzzyModel& model, const FuzzyRule& rule, const features::FeatureVector& x) {
  return rule_activation(model, rule, x.values, model.tnorm);
}

std::vector<double> class_scores(const FuzzyModel& model, std::span<const double> x) {
  const std::size_t dims = model.inputs();
  if (x.size() != dims)
    throw DataError("dimension mismatch: expected " + std::to_string(dims) + " inputs, got " +
                    std::to_string(x.size()));

  // Exponents z = (x - c)^2 / (2 sigma^2) per (dimension, term); memberships are exp(-z).
  std::vector<std::vector<double>> z(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    const auto& terms = model.partition.terms[d];
    z[d].resize(terms.size());
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const double diff = x[d] - terms[t].c;
      z[d][t] = diff * diff / (2.0 * terms[t].sigma * terms[t].sigma);
    }
  }

  // Best (lowest) aggregated exponent per class. min t-norm -> max exponent,
  // product t-norm -> sum of exponents; both map back through exp(-.).
  std::vector<double> best(model.classes(), std::numeric_limits<double>::infinity());
  for (const auto& rule : model.rules) {
    double& bound = best[rule.consequent];
    double acc = 0.0;
    bool pruned = false;
    for (std::size_t d = 0; d < dims; ++d) {
      const double v = z[d][rule.antecedent[d]];
      acc = model.tnorm == TNorm::Min ? std::max(acc, v) : acc + v;
      if (acc >= bound) {
        pruned = true;
        break;
      }
    }
    if (!pruned) bound = acc;
  }
  std::vector<double> scores(model.classes(), 0.0);
  for (std::size_t c = 0; c < scores.size(); ++c)
    if (std::isfinite(best[c])) scores[c] = std::exp(-best[c]);
  return scores;
}

Classification classify(const FuzzyModel& model, const features::FeatureVector& x) {
  if (model.rules.empty()) throw DataError("model has no rules");
  Classification out;
  out.scores = class_scores(model, x.values);
  out.best = static_cast<int>(std::max_element(out.scores.begin(), out.scores.end()) - out.scores.begin());
  out.confidence = out.scores[out.best];
  out.rejected = out.confidence < model.reject_threshold;
  return out;
}

std::string label_of(const FuzzyModel& model, const Classification& c) {
  return c.rejected ? kUnknownLabel : model.labels.at(c.best);
}

std::vector<int> best_antecedent(const FuzzyPartition& partition, std::span<const double> x) {
  std::vector<int> ante(partition.dimensions(), 0);
  for (std::size_t d = 0; d < partition.dimensions(); ++d) {
    const auto& terms = partition.terms[d];
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const double diff = x[d] - terms[t].c;
      const double zt = diff * diff / (2.0 * terms[t].sigma * terms[t].sigma);
      if (zt < best) {
        best = zt;
        ante[d] = static_cast<int>(t);
      }
    }
  }
  return ante;
}

std::vector<FuzzyRule> generate_rules(std::span<const LabeledSample> samples, const FuzzyPartition& partition,
                                      int class_count, int max_rules_per_class) {
  std::map<std::vector<int>, std::vector<int>> votes;
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= class_count) throw DataError("sample label out of range");
    if (s.x.size() != partition.dimensions()) throw DataError("sample dimension mismatch");
    auto& v = votes[best_antecedent(partition, s.x.values)];
    if (v.empty()) v.assign(class_count, 0);
    ++v[s.label];
  }

  struct Candidate {
    const std::vector<int>* antecedent;
    int consequent;
    int support;
  };
  std::vector<std::vector<Candidate>> per_class(class_count);
  for (const auto& [ante, counts] : votes) {
    const int cls = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    per_class[cls].push_back({&ante, cls, counts[cls]});
  }

  std::vector<FuzzyRule> rules;
  for (auto& cands : per_class) {
    // votes is ordered, so equal supports keep lexicographic antecedent order.
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.support > b.support; });
    const std::size_t keep = std::min<std::size_t>(cands.size(), static_cast<std::size_t>(std::max(0, max_rules_per_class)));
    for (std::size_t i = 0; i < keep; ++i) rules.push_back({*cands[i].antecedent, cands[i].consequent});
  }
  return rules;
}

FuzzyModel make_model(std::vector<std::string> labels, features::SimplifyParams params, int terms_per_dimension) {
  FuzzyModel m;
  m.labels = std::move(labels);
  m.feature_params = params;
  m.partition = FuzzyPartition::uniform(params.feature_length(), terms_per_dimension);
  return m;
}

}  // namespace mathink::nefclass
