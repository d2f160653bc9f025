#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mathink/expr.hpp"
#include "mathink/ink.hpp"
#include "mathink/knowledge.hpp"

namespace mathink::structure {

using ink::BBox;

/// A classified stroke entering structural analysis.
struct RecognizedStroke {
  std::string stroke_id;
  std::string label;
  BBox bbox;
  double confidence = 1.0;
};

/// A (possibly multi-stroke) symbol. bbox is the union of its strokes' boxes.
struct SymbolInstance {
  std::string id;
  std::string label;
  std::vector<std::string> strokes;  // sorted
  BBox bbox;
  double confidence = 1.0;

  bool operator==(const SymbolInstance&) const = default;
};

struct PlacementCandidate {
  std::string anchor;
  RelPosition position = RelPosition::Right;
  double p = 0.0;   // percent of the placed box inside the region
  double k = 0.0;   // position coefficient
  double np = 0.0;  // p * k
};

/// 100 * area(placed ∩ region) / area(placed). A zero-area placed box counts
/// as fully inside when it lies within the region and as outside otherwise.
double overlap_percent(const BBox& placed, const BBox& region);

BBox position_region(const BBox& anchor, RelPosition position, const RegionGeometry& geometry);
inline BBox position_region(const SymbolInstance& anchor, RelPosition position, const RegionGeometry& geometry) {
  return position_region(anchor.bbox, position, geometry);
}

/// Grows each side shorter than min_extent to min_extent, keeping the center.
BBox inflate(const BBox& box, double min_extent);

/// Reading order: center x, then top y.
bool reading_order_less(const BBox& a, const BBox& b);

/// All (anchor, position) candidates with their scores, anchors in the given order.
std::vector<PlacementCandidate> placement_candidates(const SymbolInstance& sym, std::span<const SymbolInstance> anchors,
                                                     const PositionTable& table, const RegionGeometry& geometry);

/// Best placement by NP; ties go to higher P, then the earlier anchor in
/// reading order, then position order. None when every NP is 0.
std::optional<PlacementCandidate> place_symbol(const SymbolInstance& sym, std::span<const SymbolInstance> anchors,
                                               const PositionTable& table, const RegionGeometry& geometry);

/// Evaluates one spatial predicate between two boxes (already inflated).
bool evaluate_predicate(Predicate predicate, const BBox& first, const BBox& second, double threshold);

/// Thrown when reconstruction fails to reach a fixed point.
class ReconstructionError : public StructureError {
 public:
  ReconstructionError(const std::string& what, std::vector<std::string> rule_ids)
      : StructureError(what), rule_ids_(std::move(rule_ids)) {}
  const std::vector<std::string>& rule_ids() const { return rule_ids_; }

 private:
  std::vector<std::string> rule_ids_;
};

/// Greedy, priority-ordered rule application to a fixed point. Unmatched
/// strokes pass through as single-stroke symbols. A match is skipped when a
/// symbol outside it lies mostly within the members' joint box, center
/// included. The result
/// is in reading order.
std::vector<SymbolInstance> reconstruct(std::span<const RecognizedStroke> strokes,
                                        std::span<const HeuristicRule> rules, const RegionGeometry& geometry);

/// Builds the expression tree. Throws StructureError listing every problem
/// (unmatched brackets, empty required slots).
expr::ExprNode group_symbols(std::span<const SymbolInstance> instances, const PositionTable& table,
                             const RegionGeometry& geometry);

struct Diagnostic {
  std::string stage;    // "reconstruct" or "group"
  std::string message;
  std::vector<std::string> subjects;  // symbol or rule ids involved

  bool operator==(const Diagnostic&) const = default;
};

struct AnalysisReport {
  std::vector<SymbolInstance> symbols;
  expr::ExprNode tree;
  std::vector<Diagnostic> diagnostics;
};

/// reconstruct -> place -> group. Never throws on structural problems: they
/// are reported as diagnostics and the tree falls back to treating the
/// offending symbols as plain symbols.
AnalysisReport analyze(std::span<const RecognizedStroke> strokes, const Knowledge& knowledge);

}  // namespace mathink::structure
