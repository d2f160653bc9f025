#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace mathink::structure {

/// Position of a placed symbol relative to an anchor.
enum class RelPosition { Left, Right, Above, Below, SuperScript, SubScript, UpperLeft, LowerLeft, Inside };

inline constexpr std::size_t kPositionCount = 9;
inline constexpr std::array<RelPosition, kPositionCount> kAllPositions = {
    RelPosition::Left,        RelPosition::Right,     RelPosition::Above,     RelPosition::Below, RelPosition::SuperScript,
    RelPosition::SubScript,   RelPosition::UpperLeft, RelPosition::LowerLeft, RelPosition::Inside};

std::string_view to_string(RelPosition p);
RelPosition position_from_string(std::string_view s);

/// Coefficient values: forbidden, allowed, required.
inline constexpr double kForbidden = 0.0;
inline constexpr double kAllowed = 1.0;
inline constexpr double kRequired = 1.5;

using Coefficients = std::array<double, kPositionCount>;

/// Per symbol class, the coefficient k of every relative position. Labels
/// without an entry use the "default" row.
struct PositionTable {
  std::map<std::string, Coefficients> classes;

  double k(const std::string& label, RelPosition p) const;
  const Coefficients& row(const std::string& label) const;
  void validate() const;
  bool operator==(const PositionTable&) const = default;
};

/// Geometry of position regions.
struct RegionGeometry {
  double reach = 1.0;         // region extent as a multiple of the anchor's size
  double script_band = 0.5;   // fraction of anchor height separating Right from the script regions
  double inset = 0.1;         // Inside region = anchor box shrunk by this fraction per side
  double epsilon_box = 0.02;  // minimum box extent, as a fraction of the scene diagonal
  // Classes drawn below the baseline; scripts attach to their box with the
  // lower descender_depth fraction cut off.
  std::vector<std::string> descenders{"p", "q", "y", "exp"};
  double descender_depth = 0.35;
  bool operator==(const RegionGeometry&) const = default;
};

enum class Predicate { StackedVertically, OverlapsHorizontally, Contains, Crosses, DotAbove, AdjacentRight };

std::string_view to_string(Predicate p);
Predicate predicate_from_string(std::string_view s);

struct SpatialPredicate {
  int first = 0;
  int second = 1;
  Predicate predicate = Predicate::AdjacentRight;
  double threshold = 0.5;
  bool operator==(const SpatialPredicate&) const = default;
};

/// Reconstruction rule. Component patterns are a label, "any", "@digit" or
/// "@letter". Without `rewrite` the matched components merge into one symbol
/// labelled `result`; with it only that component is relabelled.
struct HeuristicRule {
  std::string id;
  std::vector<std::string> components;
  std::vector<SpatialPredicate> predicates;
  std::string result;
  int priority = 0;
  std::optional<int> rewrite;
  bool operator==(const HeuristicRule&) const = default;
};

bool label_matches(std::string_view pattern, std::string_view label);

/// Heuristic rules sorted by descending priority, then id.
std::vector<HeuristicRule> ordered_rules(std::vector<HeuristicRule> rules);

/// Everything structural analysis needs besides the symbols themselves.
struct Knowledge {
  PositionTable positions;
  RegionGeometry geometry;
  std::vector<HeuristicRule> rules;

  void validate() const;
  bool operator==(const Knowledge&) const = default;
};

/// Per-user changes layered over a base knowledge document. Rules with an
/// existing id replace the base rule; new ids are added. Position rows replace
/// whole class rows.
struct KnowledgeOverlay {
  std::vector<HeuristicRule> rules;
  std::map<std::string, Coefficients> positions;

  bool empty() const { return rules.empty() && positions.empty(); }
  bool operator==(const KnowledgeOverlay&) const = default;
};

Knowledge apply_overlay(const Knowledge& base, const KnowledgeOverlay& overlay);

/// The shipped knowledge base: position table for the symbol set, region
/// geometry and heuristic rules (multi-stroke symbols, abbreviations,
/// context corrections).
Knowledge default_knowledge();

nlohmann::json to_json(const Knowledge& k);
Knowledge knowledge_from_json(const nlohmann::json& j, const std::string& path = "");
nlohmann::json to_json(const KnowledgeOverlay& o);
KnowledgeOverlay overlay_from_json(const nlohmann::json& j, const std::string& path = "");
nlohmann::json to_json(const HeuristicRule& r);
HeuristicRule rule_from_json(const nlohmann::json& j, const std::string& path = "");

}  // namespace mathink::structure
