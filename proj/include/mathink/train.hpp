#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mathink/nefclass.hpp"

namespace mathink::train {

using nefclass::FuzzyModel;
using nefclass::LabeledSample;

// ---------------------------------------------------------------------------
// Parameter vector shared by both trainers: (c, sigma) for every term,
// dimension-major.

std::vector<double> encode(const nefclass::FuzzyPartition& partition);
/// Writes genes back into a partition of the same shape; throws DataError on
/// length mismatch.
void decode(std::span<const double> genes, nefclass::FuzzyPartition& partition);
/// Lower/upper bounds matching encode(): centers in [0, 1], widths in [sigma_min, 1].
void parameter_bounds(const nefclass::FuzzyPartition& partition, std::vector<double>& lower, std::vector<double>& upper);
void clamp_to_bounds(std::span<double> params, std::span<const double> lower, std::span<const double> upper);

/// Fraction of samples whose argmax class equals the label (no rejection).
double accuracy(const FuzzyModel& model, std::span<const LabeledSample> samples);

// ---------------------------------------------------------------------------
// Genetic algorithm

struct GAConfig {
  int population_size = 40;
  int generations = 60;
  int tournament_k = 3;
  double crossover_rate = 0.9;
  double mutation_rate = 0.1;
  double mutation_sigma = 0.05;
  int elitism_count = 2;
  std::uint64_t rng_seed = 1;
  int threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

/// Decodes the chromosome, regenerates the rule base from the samples and
/// returns training accuracy.
double fitness(const FuzzyModel& model, std::span<const double> chromosome, std::span<const LabeledSample> train_set);

/// The model with the chromosome decoded and rules regenerated from the samples.
FuzzyModel materialize(const FuzzyModel& model, std::span<const double> chromosome,
                       std::span<const LabeledSample> train_set);

struct GAResult {
  FuzzyModel model;
  double fitness = 0.0;
  /// history[0] is the initial model; history[g] the population best after generation g.
  std::vector<double> history;
};

GAResult run_ga(const GAConfig& config, std::span<const LabeledSample> train_set, const FuzzyModel& initial_model);

// ---------------------------------------------------------------------------
// Conjugate gradients

struct CGConfig {
  int max_iterations = 100;
  double gradient_tolerance = 1e-6;
  double initial_step = 1.0;
  double shrink = 0.5;
  double sufficient_decrease = 1e-4;
  int max_line_search_steps = 40;
  int restart_period = 0;  // 0 = number of parameters
  double temperature = 20.0;
  std::uint64_t rng_seed = 1;  // used when subsampling a stored reservoir into a batch

  void validate() const;
};

/// Value at x; writes the gradient into grad (same length as x).
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct CGResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Objective value at the start and after every accepted step.
  std::vector<double> history;
};

/// Zeroes gradient components that point out of an active bound.
void project_gradient(std::span<const double> x, std::span<double> grad, std::span<const double> lower,
                      std::span<const double> upper);

/// Polak-Ribiere (PR+) nonlinear CG with an interpolating backtracking line
/// search, periodic restart and projection onto box bounds after each step.
/// Empty bounds mean unconstrained.
CGResult minimize_cg(const Objective& f, std::vector<double> x0, const CGConfig& config,
                     std::span<const double> lower = {}, std::span<const double> upper = {});

/// Smooth surrogate of the classifier: product t-norm per rule and a
/// log-sum-exp soft maximum (temperature tau) over the rules of each class.
std::vector<double> soft_scores(const FuzzyModel& model, std::span<const double> x, double temperature);

/// Mean squared error between soft scores and one-hot targets over the batch.
double loss(const FuzzyModel& model, std::span<const LabeledSample> batch, double temperature = 20.0);

/// Analytic gradient of loss() in encode() layout.
std::vector<double> gradient(const FuzzyModel& model, std::span<const LabeledSample> batch, double temperature = 20.0);

struct FineTuneResult {
  FuzzyModel model;
  double loss_before = 0.0;
  double loss_after = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loss_history;
};

/// CG fine-tuning of all membership parameters; the rule base is kept.
/// Returns the lowest-loss model seen, so loss_after <= loss_before.
FineTuneResult run_cg(const CGConfig& config, const FuzzyModel& model, std::span<const LabeledSample> batch);

/// The corrected sample first, then up to extra samples drawn from the
/// reservoir: all of them when it fits, otherwise a seeded random subset that
/// always includes the most recent entries.
std::vector<LabeledSample> correction_batch(const LabeledSample& corrected, std::span<const LabeledSample> reservoir,
                                            std::size_t extra, std::uint64_t seed);

}  // namespace mathink::train
