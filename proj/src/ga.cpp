#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "mathink/train.hpp"

namespace mathink::train {

std::vector<double> encode(const nefclass::FuzzyPartition& partition) {
  std::vector<double> genes;
  genes.reserve(2 * partition.total_terms());
  for (const auto& dim : partition.terms)
    for (const auto& mf : dim) {
      genes.push_back(mf.c);
      genes.push_back(mf.sigma);
    }
  return genes;
}

void decode(std::span<const double> genes, nefclass::FuzzyPartition& partition) {
  if (genes.size() != 2 * partition.total_terms())
    throw DataError("chromosome length " + std::to_string(genes.size()) + " does not match partition (" +
                    std::to_string(2 * partition.total_terms()) + ")");
  std::size_t i = 0;
  for (auto& dim : partition.terms)
    for (auto& mf : dim) {
      mf.c = genes[i++];
      mf.sigma = genes[i++];
    }
}

void parameter_bounds(const nefclass::FuzzyPartition& partition, std::vector<double>& lower,
                      std::vector<double>& upper) {
  const std::size_t n = 2 * partition.total_terms();
  lower.resize(n);
  upper.resize(n);
  for (std::size_t i = 0; i < n; i += 2) {
    lower[i] = 0.0;
    upper[i] = 1.0;
    lower[i + 1] = nefclass::kSigmaMin;
    upper[i + 1] = nefclass::kSigmaMax;
  }
}

void clamp_to_bounds(std::span<double> params, std::span<const double> lower, std::span<const double> upper) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i] = std::clamp(params[i], lower[i], upper[i]);
}

double accuracy(const FuzzyModel& model, std::span<const LabeledSample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : samples) {
    const auto scores = nefclass::class_scores(model, s.x.values);
    const int best = static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    if (best == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

void GAConfig::validate() const {
  if (population_size < 2) throw DataError("population_size must be >= 2");
  if (elitism_count < 1 || elitism_count > population_size) throw DataError("elitism_count must be in [1, population]");
  if (tournament_k < 1) throw DataError("tournament_k must be >= 1");
  if (generations < 0) throw DataError("generations must be >= 0");
  for (double r : {crossover_rate, mutation_rate})
    if (!(r >= 0.0 && r <= 1.0)) throw DataError("rates must lie in [0, 1]");
  if (!(mutation_sigma >= 0.0)) throw DataError("mutation_sigma must be >= 0");
}

FuzzyModel materialize(const FuzzyModel& model, std::span<const double> chromosome,
                       std::span<const LabeledSample> train_set) {
  FuzzyModel out = model;
  decode(chromosome, out.partition);
  out.rules = nefclass::generate_rules(train_set, out.partition, static_cast<int>(out.classes()),
                                       out.max_rules_per_class);
  return out;
}

double fitness(const FuzzyModel& model, std::span<const double> chromosome, std::span<const LabeledSample> train_set) {
  return accuracy(materialize(model, chromosome, train_set), train_set);
}

namespace {

// Deterministic regardless of thread count: each slot is written by exactly one worker.
void evaluate_population(const FuzzyModel& model, const std::vector<std::vector<double>>& population,
                         std::span<const LabeledSample> train_set, std::vector<double>& scores, int threads) {
  scores.assign(population.size(), 0.0);
  const std::size_t workers = std::min<std::size_t>(population.size(), static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < population.size(); ++i) scores[i] = fitness(model, population[i], train_set);
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < population.size(); i += workers) scores[i] = fitness(model, population[i], train_set);
    });
}

std::size_t tournament(const std::vector<double>& scores, int k, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, scores.size() - 1);
  std::size_t best = pick(rng);
  for (int i = 1; i < k; ++i) {
    const std::size_t c = pick(rng);
    if (scores[c] > scores[best] || (scores[c] == scores[best] && c < best)) best = c;
  }
  return best;
}

}  // namespace

GAResult run_ga(const GAConfig& config, std::span<const LabeledSample> train_set, const FuzzyModel& initial_model) {
  config.validate();
  if (train_set.empty()) throw DataError("GA training needs a non-empty training set");
  const int threads =
      config.threads > 0 ? config.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  std::vector<double> lower, upper;
  parameter_bounds(initial_model.partition, lower, upper);
  std::vector<double> best_genes = encode(initial_model.partition);
  clamp_to_bounds(best_genes, lower, upper);
  double best_fitness = fitness(initial_model, best_genes, train_set);

  GAResult result;
  result.history.push_back(best_fitness);

  std::mt19937_64 rng(config.rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, config.mutation_sigma);

  auto mutate = [&](std::vector<double>& genes) {
    for (auto& g : genes)
      if (unit(rng) < config.mutation_rate) g += noise(rng);
    clamp_to_bounds(genes, lower, upper);
  };

  std::vector<std::vector<double>> population;
  std::vector<double> scores;
  for (int gen = 1; gen <= config.generations; ++gen) {
    if (gen == 1) {
      population.assign(config.population_size, best_genes);
      for (std::size_t i = 1; i < population.size(); ++i) {
        for (auto& g : population[i]) g += noise(rng);
        clamp_to_bounds(population[i], lower, upper);
      }
    } else {
      std::vector<std::size_t> order(population.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

      std::vector<std::vector<double>> next;
      next.reserve(population.size());
      for (int e = 0; e < config.elitism_count; ++e) next.push_back(population[order[e]]);
      while (next.size() < population.size()) {
        const auto& p1 = population[tournament(scores, config.tournament_k, rng)];
        const auto& p2 = population[tournament(scores, config.tournament_k, rng)];
        std::vector<double> child = p1;
        if (unit(rng) < config.crossover_rate)
          for (std::size_t i = 0; i < child.size(); ++i) {
            const double a = unit(rng);
            child[i] = a * p1[i] + (1.0 - a) * p2[i];
          }
        mutate(child);
        next.push_back(std::move(child));
      }
      population = std::move(next);
    }

    evaluate_population(initial_model, population, train_set, scores, threads);
    const std::size_t top = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    if (scores[top] > best_fitness) {
      best_fitness = scores[top];
      best_genes = population[top];
    }
    result.history.push_back(scores[top]);
  }

  result.model = materialize(initial_model, best_genes, train_set);
  result.fitness = best_fitness;
  return result;
}

}  // namespace mathink::train
