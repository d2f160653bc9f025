#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "mathink/expr.hpp"
#include "mathink/ink.hpp"

namespace mathink::corpus {

/// The stroke classes of the synthetic symbol set, in model label order.
const std::vector<std::string>& stroke_classes();

struct Jitter {
  double shape = 0.03;          // smooth deformation amplitude, fraction of glyph size
  double rotation_deg = 5.0;    // uniform in [-rotation_deg, rotation_deg]
  double scale_min = 0.8;
  double scale_max = 1.2;
  double container_scale = 0.05;  // bars, radicals and brackets: 1 +- this / max(1, size in em)
  double container_rotation_deg = 1.5;
  double point_noise = 0.004;   // per-point noise, in em
  double offset = 0.015;        // glyph displacement, in em

  static Jitter none() { return {0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0}; }
  bool operator==(const Jitter&) const = default;
};

struct CorpusConfig {
  std::uint64_t seed = 1;
  int train_count = 300;
  int test_count = 150;
  Jitter jitter;
  double em = 40.0;  // ink units per em
};

struct TruthSymbol {
  std::string label;
  std::vector<std::string> strokes;
  bool operator==(const TruthSymbol&) const = default;
};

struct Expression {
  std::string id;
  std::vector<ink::Stroke> strokes;
  std::vector<std::string> stroke_labels;  // parallel to strokes
  std::vector<TruthSymbol> symbols;
  expr::ExprNode tree;
  bool operator==(const Expression&) const = default;
};

struct Corpus {
  CorpusConfig config;
  std::vector<Expression> train;
  std::vector<Expression> test;
};

/// Deterministic for a given config.
Corpus generate(const CorpusConfig& config);

/// Ink for a given tree. Throws DataError for constructs the layout engine
/// does not draw.
Expression render_expression(const expr::ExprNode& tree, const Jitter& jitter, std::mt19937_64& rng,
                             double em = 40.0, const std::string& id = "e");

/// A random expression tree drawn from the generator's grammar.
expr::ExprNode random_tree(std::mt19937_64& rng);

/// One stroke of the given class at the origin, for classifier tests.
ink::Stroke glyph_stroke(const std::string& cls, const Jitter& jitter, std::mt19937_64& rng, double em = 40.0,
                         const std::string& id = "g");

nlohmann::json to_json(const Expression& e);
Expression expression_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json to_json(const Corpus& c);
Corpus corpus_from_json(const nlohmann::json& j);

}  // namespace mathink::corpus
