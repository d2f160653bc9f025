#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mathink/train.hpp"

namespace mathink::train {

void CGConfig::validate() const {
  if (max_iterations < 1) throw DataError("max_iterations must be >= 1");
  if (!(gradient_tolerance > 0.0)) throw DataError("gradient_tolerance must be > 0");
  if (!(shrink > 0.0 && shrink < 1.0)) throw DataError("shrink must lie in (0, 1)");
  if (!(sufficient_decrease > 0.0 && sufficient_decrease < 0.5)) throw DataError("sufficient_decrease must lie in (0, 0.5)");
  if (!(initial_step > 0.0)) throw DataError("initial_step must be > 0");
  if (!(temperature > 0.0)) throw DataError("temperature must be > 0");
}

void project_gradient(std::span<const double> x, std::span<double> grad, std::span<const double> lower,
                      std::span<const double> upper) {
  if (lower.empty()) return;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    // Descent moves along -grad; a step that would leave the box is blocked.
    if (x[i] <= lower[i] && grad[i] > 0.0) grad[i] = 0.0;
    if (x[i] >= upper[i] && grad[i] < 0.0) grad[i] = 0.0;
  }
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

CGResult minimize_cg(const Objective& f, std::vector<double> x0, const CGConfig& config, std::span<const double> lower,
                     std::span<const double> upper) {
  config.validate();
  const bool bounded = !lower.empty();
  const std::size_t n = x0.size();
  const int restart = config.restart_period > 0 ? config.restart_period : static_cast<int>(std::max<std::size_t>(1, n));

  auto project = [&](std::vector<double>& x) {
    if (bounded) clamp_to_bounds(x, lower, upper);
  };

  CGResult r;
  r.x = std::move(x0);
  project(r.x);
  std::vector<double> g(n), pg(n);
  r.value = f(r.x, g);
  pg = g;
  project_gradient(r.x, pg, lower, upper);
  r.history.push_back(r.value);

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = -pg[i];

  std::vector<double> trial(n), g_trial(n), best_x(n), best_g(n);
  double prev_alpha = config.initial_step;
  double prev_slope = 0.0;
  int since_restart = 0;

  while (r.iterations < config.max_iterations) {
    if (std::sqrt(dot(pg, pg)) <= config.gradient_tolerance) {
      r.converged = true;
      break;
    }
    double slope = dot(g, d);
    bool steepest = since_restart == 0;
    if (!(slope < 0.0)) {
      for (std::size_t i = 0; i < n; ++i) d[i] = -pg[i];
      slope = dot(g, d);
      steepest = true;
      since_restart = 0;
    }

    double alpha = (prev_slope < 0.0 && r.iterations > 0) ? prev_alpha * prev_slope / slope : config.initial_step;
    if (!(alpha > 0.0) || !std::isfinite(alpha)) alpha = config.initial_step;

    // Backtracking with a safeguarded quadratic interpolation step; exact on quadratics.
    auto eval_at = [&](double a, std::vector<double>& xs, std::vector<double>& gs) {
      for (std::size_t i = 0; i < n; ++i) xs[i] = r.x[i] + a * d[i];
      project(xs);
      return f(xs, gs);
    };
    bool accepted = false;
    double best_value = r.value;
    double accepted_alpha = 0.0;
    for (int ls = 0; ls < config.max_line_search_steps && !accepted; ++ls) {
      const double ft = eval_at(alpha, trial, g_trial);
      const double curvature = ft - r.value - slope * alpha;
      double candidate_alpha = alpha;
      double candidate_value = ft;
      if (std::isfinite(ft) && ft <= r.value + config.sufficient_decrease * alpha * slope) {
        best_x = trial;
        best_g = g_trial;
        accepted = true;
      }
      if (curvature > 0.0) {
        const double aq = -slope * alpha * alpha / (2.0 * curvature);
        if (std::isfinite(aq) && aq > 0.0 && std::abs(aq - alpha) > 1e-12 * alpha) {
          std::vector<double> xq(n), gq(n);
          const double fq = eval_at(aq, xq, gq);
          if (std::isfinite(fq) && fq <= r.value + config.sufficient_decrease * aq * slope &&
              (!accepted || fq < candidate_value)) {
            best_x = std::move(xq);
            best_g = std::move(gq);
            candidate_alpha = aq;
            candidate_value = fq;
            accepted = true;
          }
          if (!accepted) alpha = std::clamp(aq, 0.1 * alpha, config.shrink * alpha);
        } else if (!accepted) {
          alpha *= config.shrink;
        }
      } else if (!accepted) {
        alpha *= config.shrink;
      }
      if (accepted) {
        best_value = candidate_value;
        accepted_alpha = candidate_alpha;
      }
    }

    if (!accepted) {
      if (steepest) break;  // no descent possible along the projected gradient
      for (std::size_t i = 0; i < n; ++i) d[i] = -pg[i];
      since_restart = 0;
      continue;
    }

    r.x = best_x;
    r.value = best_value;
    r.history.push_back(r.value);
    ++r.iterations;
    prev_alpha = accepted_alpha;
    prev_slope = slope;

    std::vector<double> pg_new = best_g;
    project_gradient(r.x, pg_new, lower, upper);
    const double denom = dot(pg, pg);
    double beta = denom > 0.0 ? (dot(pg_new, pg_new) - dot(pg_new, pg)) / denom : 0.0;
    beta = std::max(0.0, beta);
    if (++since_restart >= restart) {
      beta = 0.0;
      since_restart = 0;
    }
    g = best_g;
    pg = std::move(pg_new);
    for (std::size_t i = 0; i < n; ++i) d[i] = -pg[i] + beta * d[i];
    if (bounded)
      for (std::size_t i = 0; i < n; ++i)
        if ((r.x[i] <= lower[i] && d[i] < 0.0) || (r.x[i] >= upper[i] && d[i] > 0.0)) d[i] = 0.0;
  }
  if (!r.converged) r.converged = std::sqrt(dot(pg, pg)) <= config.gradient_tolerance;
  return r;
}

// ---------------------------------------------------------------------------

namespace {

struct Layout {
  std::vector<std::size_t> offset;  // first parameter index of each dimension
};

Layout layout_of(const nefclass::FuzzyPartition& p) {
  Layout l;
  std::size_t off = 0;
  for (const auto& dim : p.terms) {
    l.offset.push_back(off);
    off += 2 * dim.size();
  }
  return l;
}

struct Forward {
  std::vector<double> activation;  // per rule
  std::vector<double> scores;      // per class
  std::vector<double> weight;      // per rule: d score / d activation
};

Forward forward(const FuzzyModel& model, std::span<const double> x, double tau) {
  const std::size_t dims = model.inputs();
  if (x.size() != dims) throw DataError("dimension mismatch in soft scores");
  Forward fw;
  fw.activation.resize(model.rules.size());
  for (std::size_t r = 0; r < model.rules.size(); ++r) {
    double z = 0.0;
    for (std::size_t d = 0; d < dims; ++d) {
      const auto& mf = model.partition.terms[d][model.rules[r].antecedent[d]];
      const double diff = x[d] - mf.c;
      z += diff * diff / (2.0 * mf.sigma * mf.sigma);
    }
    fw.activation[r] = std::exp(-z);
  }
  const std::size_t classes = model.classes();
  std::vector<double> peak(classes, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < model.rules.size(); ++r)
    peak[model.rules[r].consequent] = std::max(peak[model.rules[r].consequent], fw.activation[r]);
  std::vector<double> sum(classes, 0.0);
  fw.weight.resize(model.rules.size());
  for (std::size_t r = 0; r < model.rules.size(); ++r) {
    const int c = model.rules[r].consequent;
    fw.weight[r] = std::exp(tau * (fw.activation[r] - peak[c]));
    sum[c] += fw.weight[r];
  }
  fw.scores.assign(classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c)
    if (sum[c] > 0.0) fw.scores[c] = peak[c] + std::log(sum[c]) / tau;
  for (std::size_t r = 0; r < model.rules.size(); ++r) fw.weight[r] /= sum[model.rules[r].consequent];
  return fw;
}

}  // namespace

std::vector<double> soft_scores(const FuzzyModel& model, std::span<const double> x, double temperature) {
  return forward(model, x, temperature).scores;
}

double loss(const FuzzyModel& model, std::span<const LabeledSample> batch, double temperature) {
  if (batch.empty()) throw DataError("loss needs a non-empty batch");
  const double norm = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(model.classes()));
  double total = 0.0;
  for (const auto& s : batch) {
    const auto scores = forward(model, s.x.values, temperature).scores;
    for (std::size_t c = 0; c < scores.size(); ++c) {
      const double e = scores[c] - (static_cast<int>(c) == s.label ? 1.0 : 0.0);
      total += e * e;
    }
  }
  return total * norm;
}

std::vector<double> gradient(const FuzzyModel& model, std::span<const LabeledSample> batch, double temperature) {
  if (batch.empty()) throw DataError("gradient needs a non-empty batch");
  const auto layout = layout_of(model.partition);
  std::vector<double> grad(2 * model.partition.total_terms(), 0.0);
  const double norm = 2.0 / (static_cast<double>(batch.size()) * static_cast<double>(model.classes()));
  for (const auto& s : batch) {
    const auto fw = forward(model, s.x.values, temperature);
    for (std::size_t r = 0; r < model.rules.size(); ++r) {
      const auto& rule = model.rules[r];
      const double target = rule.consequent == s.label ? 1.0 : 0.0;
      const double coef = norm * (fw.scores[rule.consequent] - target) * fw.weight[r] * fw.activation[r];
      if (coef == 0.0) continue;
      for (std::size_t d = 0; d < rule.antecedent.size(); ++d) {
        const auto& mf = model.partition.terms[d][rule.antecedent[d]];
        const double diff = s.x.values[d] - mf.c;
        const double inv_s2 = 1.0 / (mf.sigma * mf.sigma);
        const std::size_t idx = layout.offset[d] + 2 * static_cast<std::size_t>(rule.antecedent[d]);
        grad[idx] += coef * diff * inv_s2;
        grad[idx + 1] += coef * diff * diff * inv_s2 / mf.sigma;
      }
    }
  }
  return grad;
}

FineTuneResult run_cg(const CGConfig& config, const FuzzyModel& model, std::span<const LabeledSample> batch) {
  if (batch.empty()) throw DataError("fine-tuning needs a non-empty batch");
  FuzzyModel work = model;
  auto objective = [&](std::span<const double> params, std::span<double> grad) {
    decode(params, work.partition);
    const auto g = gradient(work, batch, config.temperature);
    std::copy(g.begin(), g.end(), grad.begin());
    return loss(work, batch, config.temperature);
  };

  std::vector<double> lower, upper;
  parameter_bounds(model.partition, lower, upper);
  auto cg = minimize_cg(objective, encode(model.partition), config, lower, upper);

  FineTuneResult out;
  out.model = model;
  decode(cg.x, out.model.partition);
  out.loss_before = cg.history.front();
  out.loss_after = cg.value;
  out.iterations = cg.iterations;
  out.converged = cg.converged;
  out.loss_history = std::move(cg.history);
  return out;
}

std::vector<LabeledSample> correction_batch(const LabeledSample& corrected, std::span<const LabeledSample> reservoir,
                                            std::size_t extra, std::uint64_t seed) {
  std::vector<LabeledSample> batch{corrected};
  if (reservoir.size() <= extra) {
    batch.insert(batch.end(), reservoir.begin(), reservoir.end());
    return batch;
  }
  const std::size_t recent = extra / 2;
  const std::size_t older = reservoir.size() - recent;
  for (std::size_t i = older; i < reservoir.size(); ++i) batch.push_back(reservoir[i]);
  std::vector<std::size_t> idx(older);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(extra - recent);
  std::sort(idx.begin(), idx.end());
  for (auto i : idx) batch.push_back(reservoir[i]);
  return batch;
}

}  // namespace mathink::train
