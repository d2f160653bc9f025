#include "mathink/knowledge.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "mathink/error.hpp"

namespace mathink::structure {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kPositionCount> kPositionNames = {
    "left", "right", "above", "below", "superscript", "subscript", "upper-left", "lower-left", "inside"};

constexpr std::array<std::string_view, 6> kPredicateNames = {"stacked-vertically", "overlaps-horizontally", "contains",
                                                             "crosses",            "dot-above",             "adjacent-right"};

}  // namespace

std::string_view to_string(RelPosition p) { return kPositionNames[static_cast<std::size_t>(p)]; }

RelPosition position_from_string(std::string_view s) {
  auto it = std::find(kPositionNames.begin(), kPositionNames.end(), s);
  if (it == kPositionNames.end()) throw DataError("unknown position '" + std::string(s) + "'");
  return static_cast<RelPosition>(it - kPositionNames.begin());
}

std::string_view to_string(Predicate p) { return kPredicateNames[static_cast<std::size_t>(p)]; }

Predicate predicate_from_string(std::string_view s) {
  auto it = std::find(kPredicateNames.begin(), kPredicateNames.end(), s);
  if (it == kPredicateNames.end()) throw DataError("unknown predicate '" + std::string(s) + "'");
  return static_cast<Predicate>(it - kPredicateNames.begin());
}

const Coefficients& PositionTable::row(const std::string& label) const {
  auto it = classes.find(label);
  if (it == classes.end()) it = classes.find("default");
  if (it == classes.end()) throw DataError("position table has neither '" + label + "' nor a default row");
  return it->second;
}

double PositionTable::k(const std::string& label, RelPosition p) const {
  return row(label)[static_cast<std::size_t>(p)];
}

void PositionTable::validate() const {
  if (!classes.count("default")) throw DataError("position table lacks a default row");
  for (const auto& [label, coeffs] : classes)
    for (std::size_t i = 0; i < coeffs.size(); ++i)
      if (coeffs[i] != kForbidden && coeffs[i] != kAllowed && coeffs[i] != kRequired)
        throw DataError("position table row '" + label + "' has coefficient " + std::to_string(coeffs[i]) + " for " +
                        std::string(kPositionNames[i]) + "; allowed values are 0, 1 and 1.5");
}

bool label_matches(std::string_view pattern, std::string_view label) {
  if (pattern == "any") return true;
  if (pattern == "@digit") return label.size() == 1 && std::isdigit(static_cast<unsigned char>(label[0]));
  if (pattern == "@letter") return label.size() == 1 && std::islower(static_cast<unsigned char>(label[0]));
  return pattern == label;
}

std::vector<HeuristicRule> ordered_rules(std::vector<HeuristicRule> rules) {
  std::stable_sort(rules.begin(), rules.end(), [](const HeuristicRule& a, const HeuristicRule& b) {
    if (a.priority != b.priority) return a.priority > b.priority;
    return a.id < b.id;
  });
  return rules;
}

void Knowledge::validate() const {
  positions.validate();
  if (!(geometry.reach > 0.0) || !(geometry.script_band >= 0.0 && geometry.script_band <= 1.0) ||
      !(geometry.inset >= 0.0 && geometry.inset < 0.5) || !(geometry.epsilon_box >= 0.0) ||
      !(geometry.descender_depth >= 0.0 && geometry.descender_depth < 1.0))
    throw DataError("invalid region geometry");
  std::set<std::string> ids;
  for (const auto& r : rules) {
    if (r.id.empty()) throw DataError("heuristic rule without an id");
    if (!ids.insert(r.id).second) throw DataError("duplicate heuristic rule id '" + r.id + "'");
    if (r.components.empty()) throw DataError("rule '" + r.id + "' has no components");
    if (r.result.empty()) throw DataError("rule '" + r.id + "' has no result label");
    const int n = static_cast<int>(r.components.size());
    for (const auto& p : r.predicates)
      if (p.first < 0 || p.first >= n || p.second < 0 || p.second >= n || p.first == p.second)
        throw DataError("rule '" + r.id + "' has a predicate on missing components");
    if (r.rewrite && (*r.rewrite < 0 || *r.rewrite >= n))
      throw DataError("rule '" + r.id + "' rewrites a missing component");
  }
}

Knowledge apply_overlay(const Knowledge& base, const KnowledgeOverlay& overlay) {
  Knowledge out = base;
  for (const auto& rule : overlay.rules) {
    auto it = std::find_if(out.rules.begin(), out.rules.end(), [&](const HeuristicRule& r) { return r.id == rule.id; });
    if (it != out.rules.end())
      *it = rule;
    else
      out.rules.push_back(rule);
  }
  for (const auto& [label, coeffs] : overlay.positions) out.positions.classes[label] = coeffs;
  return out;
}

Knowledge default_knowledge() {
  using P = RelPosition;
  auto make = [](std::initializer_list<std::pair<P, double>> entries) {
    Coefficients c{};
    c.fill(kForbidden);
    for (auto [p, k] : entries) c[static_cast<std::size_t>(p)] = k;
    return c;
  };
  const auto sides = make({{P::Left, kAllowed}, {P::Right, kAllowed}});

  Knowledge k;
  auto& t = k.positions.classes;
  t["default"] = make({{P::Left, kAllowed}, {P::Right, kAllowed}, {P::SuperScript, kAllowed}, {P::SubScript, kAllowed}});
  const auto digit = make({{P::Left, kAllowed}, {P::Right, kAllowed}, {P::SuperScript, kAllowed}});
  for (char c = '0'; c <= '9'; ++c) t[std::string(1, c)] = digit;
  t["number"] = digit;
  t["-"] = make({{P::Left, kAllowed}, {P::Right, kAllowed}, {P::Above, kRequired}, {P::Below, kRequired}});
  for (const char* s : {"+", "=", "|", ".", ",", "(", "[", "fraction", "root", "bigop"}) t[s] = sides;
  for (const char* s : {")", "]", "group"}) t[s] = t["default"];
  for (const char* s : {"sum", "prod"})
    t[s] = make({{P::Left, kAllowed}, {P::Right, kRequired}, {P::Above, kAllowed}, {P::Below, kAllowed}});
  t["int"] = make({{P::Left, kAllowed},
                   {P::Right, kRequired},
                   {P::Above, kAllowed},
                   {P::Below, kAllowed},
                   {P::SuperScript, kAllowed},
                   {P::SubScript, kAllowed}});
  t["sqrt"] = make({{P::Left, kAllowed}, {P::Right, kAllowed}, {P::UpperLeft, kAllowed}, {P::Inside, kRequired}});
  for (const char* s : {"sin", "cos", "exp", "min", "max"})
    t[s] = make({{P::Left, kAllowed}, {P::Right, kRequired}, {P::SuperScript, kAllowed}});

  using Pr = Predicate;
  k.rules.push_back({"equals",
                     {"-", "-"},
                     {{0, 1, Pr::StackedVertically, 0.8}, {0, 1, Pr::OverlapsHorizontally, 0.6}},
                     "=",
                     100,
                     std::nullopt});
  k.rules.push_back({"plus", {"-", "|"}, {{0, 1, Pr::Crosses, 0.15}}, "+", 100, std::nullopt});
  k.rules.push_back({"dotted-i", {".", "|"}, {{0, 1, Pr::DotAbove, 0.6}}, "i", 90, std::nullopt});
  for (const char* word : {"sin", "cos", "exp", "min", "max"}) {
    const std::string w = word;
    k.rules.push_back({"abbrev-" + w,
                       {w.substr(0, 1), w.substr(1, 1), w.substr(2, 1)},
                       {{0, 1, Pr::AdjacentRight, 0.5}, {1, 2, Pr::AdjacentRight, 0.5}},
                       w,
                       50,
                       std::nullopt});
  }
  k.rules.push_back({"zero-between-digits",
                     {"@digit", "o", "@digit"},
                     {{0, 1, Pr::AdjacentRight, 0.6}, {1, 2, Pr::AdjacentRight, 0.6}},
                     "0",
                     10,
                     1});
  k.rules.push_back({"one-between-digits",
                     {"@digit", "|", "@digit"},
                     {{0, 1, Pr::AdjacentRight, 0.6}, {1, 2, Pr::AdjacentRight, 0.6}},
                     "1",
                     10,
                     1});
  return k;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

const json& at(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw DataError("expected an object at " + (path.empty() ? "/" : path));
  auto it = j.find(key);
  if (it == j.end()) throw DataError("missing '" + std::string(key) + "' at " + (path.empty() ? "/" : path));
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw DataError("expected a number at " + path);
  return j.get<double>();
}

std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) throw DataError("expected a string at " + path);
  return j.get<std::string>();
}

json coefficients_json(const Coefficients& c) {
  json row = json::object();
  for (std::size_t i = 0; i < c.size(); ++i) row[std::string(kPositionNames[i])] = c[i];
  return row;
}

Coefficients coefficients_from_json(const json& j, const std::string& path) {
  Coefficients c{};
  for (std::size_t i = 0; i < c.size(); ++i) {
    const std::string name(kPositionNames[i]);
    c[i] = number(at(j, name.c_str(), path), path + "/" + name);
    if (c[i] != kForbidden && c[i] != kAllowed && c[i] != kRequired)
      throw DataError("coefficient must be 0, 1 or 1.5 at " + path + "/" + name);
  }
  return c;
}

}  // namespace

json to_json(const HeuristicRule& r) {
  json preds = json::array();
  for (const auto& p : r.predicates)
    preds.push_back({{"first", p.first},
                     {"second", p.second},
                     {"predicate", std::string(to_string(p.predicate))},
                     {"threshold", p.threshold}});
  json j = {{"id", r.id},
            {"components", r.components},
            {"predicates", std::move(preds)},
            {"result", r.result},
            {"priority", r.priority}};
  if (r.rewrite) j["rewrite"] = *r.rewrite;
  return j;
}

HeuristicRule rule_from_json(const json& j, const std::string& path) {
  HeuristicRule r;
  r.id = string(at(j, "id", path), path + "/id");
  const auto& comps = at(j, "components", path);
  if (!comps.is_array()) throw DataError("expected an array at " + path + "/components");
  for (std::size_t i = 0; i < comps.size(); ++i)
    r.components.push_back(string(comps[i], path + "/components/" + std::to_string(i)));
  const auto& preds = at(j, "predicates", path);
  if (!preds.is_array()) throw DataError("expected an array at " + path + "/predicates");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const std::string pp = path + "/predicates/" + std::to_string(i);
    SpatialPredicate p;
    p.first = static_cast<int>(number(at(preds[i], "first", pp), pp + "/first"));
    p.second = static_cast<int>(number(at(preds[i], "second", pp), pp + "/second"));
    try {
      p.predicate = predicate_from_string(string(at(preds[i], "predicate", pp), pp + "/predicate"));
    } catch (const DataError& e) {
      throw DataError(std::string(e.what()) + " at " + pp + "/predicate");
    }
    p.threshold = number(at(preds[i], "threshold", pp), pp + "/threshold");
    r.predicates.push_back(p);
  }
  r.result = string(at(j, "result", path), path + "/result");
  r.priority = static_cast<int>(number(at(j, "priority", path), path + "/priority"));
  if (j.contains("rewrite") && !j["rewrite"].is_null())
    r.rewrite = static_cast<int>(number(j["rewrite"], path + "/rewrite"));
  return r;
}

json to_json(const Knowledge& k) {
  json positions = json::object();
  for (const auto& [label, c] : k.positions.classes) positions[label] = coefficients_json(c);
  json rules = json::array();
  for (const auto& r : k.rules) rules.push_back(to_json(r));
  return {{"geometry",
           {{"reach", k.geometry.reach},
            {"script_band", k.geometry.script_band},
            {"inset", k.geometry.inset},
            {"epsilon_box", k.geometry.epsilon_box},
            {"descenders", k.geometry.descenders},
            {"descender_depth", k.geometry.descender_depth}}},
          {"positions", std::move(positions)},
          {"rules", std::move(rules)}};
}

Knowledge knowledge_from_json(const json& j, const std::string& path) {
  Knowledge k;
  const auto& g = at(j, "geometry", path);
  const std::string gp = path + "/geometry";
  k.geometry.reach = number(at(g, "reach", gp), gp + "/reach");
  k.geometry.script_band = number(at(g, "script_band", gp), gp + "/script_band");
  k.geometry.inset = number(at(g, "inset", gp), gp + "/inset");
  k.geometry.epsilon_box = number(at(g, "epsilon_box", gp), gp + "/epsilon_box");
  if (g.contains("descenders")) {
    const auto& d = g["descenders"];
    if (!d.is_array()) throw DataError(gp + "/descenders: expected an array");
    k.geometry.descenders.clear();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!d[i].is_string()) throw DataError(gp + "/descenders/" + std::to_string(i) + ": expected a string");
      k.geometry.descenders.push_back(d[i].get<std::string>());
    }
  }
  if (g.contains("descender_depth"))
    k.geometry.descender_depth = number(g["descender_depth"], gp + "/descender_depth");
  const auto& positions = at(j, "positions", path);
  if (!positions.is_object()) throw DataError("expected an object at " + path + "/positions");
  for (const auto& [label, row] : positions.items())
    k.positions.classes[label] = coefficients_from_json(row, path + "/positions/" + label);
  const auto& rules = at(j, "rules", path);
  if (!rules.is_array()) throw DataError("expected an array at " + path + "/rules");
  for (std::size_t i = 0; i < rules.size(); ++i)
    k.rules.push_back(rule_from_json(rules[i], path + "/rules/" + std::to_string(i)));
  try {
    k.validate();
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " (in " + (path.empty() ? "/" : path) + ")");
  }
  return k;
}

json to_json(const KnowledgeOverlay& o) {
  json rules = json::array();
  for (const auto& r : o.rules) rules.push_back(to_json(r));
  json positions = json::object();
  for (const auto& [label, c] : o.positions) positions[label] = coefficients_json(c);
  return {{"rules", std::move(rules)}, {"positions", std::move(positions)}};
}

KnowledgeOverlay overlay_from_json(const json& j, const std::string& path) {
  KnowledgeOverlay o;
  const auto& rules = at(j, "rules", path);
  if (!rules.is_array()) throw DataError("expected an array at " + path + "/rules");
  for (std::size_t i = 0; i < rules.size(); ++i)
    o.rules.push_back(rule_from_json(rules[i], path + "/rules/" + std::to_string(i)));
  const auto& positions = at(j, "positions", path);
  if (!positions.is_object()) throw DataError("expected an object at " + path + "/positions");
  for (const auto& [label, row] : positions.items())
    o.positions[label] = coefficients_from_json(row, path + "/positions/" + label);
  return o;
}

}  // namespace mathink::structure
