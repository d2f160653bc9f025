#include "mathink/structure.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

namespace mathink::structure {

using expr::ExprNode;

// ---------------------------------------------------------------------------
// Geometry

double overlap_percent(const BBox& placed, const BBox& region) {
  const double area = placed.area();
  if (area <= 0.0) {
    const bool inside = placed.min_x >= region.min_x && placed.max_x <= region.max_x && placed.min_y >= region.min_y &&
                        placed.max_y <= region.max_y;
    return inside ? 100.0 : 0.0;
  }
  const BBox cut = placed.intersection(region);
  return std::clamp(100.0 * cut.area() / area, 0.0, 100.0);
}

BBox position_region(const BBox& a, RelPosition position, const RegionGeometry& g) {
  const double w = a.width();
  const double h = a.height();
  const double reach = g.reach * std::max(w, h);
  switch (position) {
    case RelPosition::Left: return {a.min_x - reach, a.min_y, a.min_x, a.max_y};
    case RelPosition::Right: return {a.max_x, a.min_y, a.max_x + reach, a.max_y};
    case RelPosition::Above: return {a.min_x, a.min_y - reach, a.max_x, a.min_y};
    case RelPosition::Below: return {a.min_x, a.max_y, a.max_x, a.max_y + reach};
    case RelPosition::SuperScript: return {a.max_x, a.min_y - g.reach * h, a.max_x + reach, a.min_y + g.script_band * h};
    case RelPosition::SubScript: return {a.max_x, a.max_y - g.script_band * h, a.max_x + reach, a.max_y + g.reach * h};
    case RelPosition::UpperLeft: return {a.min_x - reach, a.min_y - g.reach * h, a.min_x, a.min_y + g.script_band * h};
    case RelPosition::LowerLeft: return {a.min_x - reach, a.max_y - g.script_band * h, a.min_x, a.max_y + g.reach * h};
    case RelPosition::Inside:
      return {a.min_x + g.inset * w, a.min_y + g.inset * h, a.max_x - g.inset * w, a.max_y - g.inset * h};
  }
  return a;
}

BBox inflate(const BBox& box, double min_extent) {
  BBox out = box;
  if (out.width() < min_extent) {
    const double c = box.center_x();
    out.min_x = c - 0.5 * min_extent;
    out.max_x = c + 0.5 * min_extent;
  }
  if (out.height() < min_extent) {
    const double c = box.center_y();
    out.min_y = c - 0.5 * min_extent;
    out.max_y = c + 0.5 * min_extent;
  }
  return out;
}

bool reading_order_less(const BBox& a, const BBox& b) {
  if (a.center_x() != b.center_x()) return a.center_x() < b.center_x();
  return a.min_y < b.min_y;
}

namespace {

struct Scored {
  RelPosition position;
  double p;
  double k;
  double np;
};

bool better(const Scored& a, const Scored& b) {
  if (a.np != b.np) return a.np > b.np;
  if (a.p != b.p) return a.p > b.p;
  return a.position < b.position;
}

/// Best position of a placed box relative to one anchor among the allowed positions.
std::optional<Scored> best_position(const BBox& placed, const BBox& anchor, const Coefficients& row,
                                    const RegionGeometry& g, std::initializer_list<RelPosition> allowed = {}) {
  std::optional<Scored> best;
  auto consider = [&](RelPosition pos) {
    const double p = overlap_percent(placed, position_region(anchor, pos, g));
    const double k = row[static_cast<std::size_t>(pos)];
    const Scored s{pos, p, k, p * k};
    if (s.np > 0.0 && (!best || better(s, *best))) best = s;
  };
  if (allowed.size() == 0)
    for (auto pos : kAllPositions) consider(pos);
  else
    for (auto pos : allowed) consider(pos);
  return best;
}

double scene_epsilon(std::span<const BBox> boxes, const RegionGeometry& g) {
  if (boxes.empty()) return 0.0;
  BBox scene = boxes.front();
  for (const auto& b : boxes) scene = scene.united(b);
  return g.epsilon_box * scene.diagonal();
}

}  // namespace

std::vector<PlacementCandidate> placement_candidates(const SymbolInstance& sym, std::span<const SymbolInstance> anchors,
                                                     const PositionTable& table, const RegionGeometry& geometry) {
  std::vector<BBox> boxes{sym.bbox};
  for (const auto& a : anchors) boxes.push_back(a.bbox);
  const double eps = scene_epsilon(boxes, geometry);
  const BBox placed = inflate(sym.bbox, eps);

  std::vector<PlacementCandidate> out;
  for (const auto& a : anchors) {
    const BBox anchor = inflate(a.bbox, eps);
    for (auto pos : kAllPositions) {
      PlacementCandidate c;
      c.anchor = a.id;
      c.position = pos;
      c.p = overlap_percent(placed, position_region(anchor, pos, geometry));
      c.k = table.k(a.label, pos);
      c.np = c.p * c.k;
      out.push_back(c);
    }
  }
  return out;
}

std::optional<PlacementCandidate> place_symbol(const SymbolInstance& sym, std::span<const SymbolInstance> anchors,
                                               const PositionTable& table, const RegionGeometry& geometry) {
  const auto candidates = placement_candidates(sym, anchors, table, geometry);
  std::vector<std::size_t> anchor_rank(anchors.size());
  {
    std::vector<std::size_t> order(anchors.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return reading_order_less(anchors[a].bbox, anchors[b].bbox); });
    for (std::size_t r = 0; r < order.size(); ++r) anchor_rank[order[r]] = r;
  }
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.np <= 0.0) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = candidates[*best];
    const auto key_c = std::make_tuple(-c.np, -c.p, anchor_rank[i / kPositionCount], c.position);
    const auto key_b = std::make_tuple(-b.np, -b.p, anchor_rank[*best / kPositionCount], b.position);
    if (key_c < key_b) best = i;
  }
  if (!best) return std::nullopt;
  return candidates[*best];
}

// ---------------------------------------------------------------------------
// Spatial predicates

bool evaluate_predicate(Predicate predicate, const BBox& a, const BBox& b, double threshold) {
  switch (predicate) {
    case Predicate::StackedVertically:
      return a.center_y() < b.center_y() && (b.min_y - a.max_y) <= threshold * std::max(a.width(), b.width());
    case Predicate::OverlapsHorizontally: {
      const double overlap = std::min(a.max_x, b.max_x) - std::max(a.min_x, b.min_x);
      const double widest = std::max(a.width(), b.width());
      return widest > 0.0 && overlap / widest >= threshold;
    }
    case Predicate::Contains: return overlap_percent(b, a) / 100.0 >= threshold;
    case Predicate::Crosses:
      return b.center_x() >= a.min_x + threshold * a.width() && b.center_x() <= a.max_x - threshold * a.width() &&
             a.center_y() >= b.min_y + threshold * b.height() && a.center_y() <= b.max_y - threshold * b.height();
    case Predicate::DotAbove: {
      const double h = b.height();
      return std::max(a.width(), a.height()) <= 0.5 * h && a.center_y() < b.min_y + 0.1 * h &&
             (b.min_y - a.max_y) <= threshold * h && std::abs(a.center_x() - b.center_x()) <= 0.75 * threshold * h;
    }
    case Predicate::AdjacentRight: {
      if (!(b.center_x() > a.center_x())) return false;
      const double gap = b.min_x - a.max_x;
      if (gap > threshold * std::max(a.height(), b.height())) return false;
      if (gap < -0.5 * std::max(std::min(a.width(), b.width()), 0.2 * std::min(a.height(), b.height()))) return false;
      const double v_overlap = std::min(a.max_y, b.max_y) - std::max(a.min_y, b.min_y);
      const double shortest = std::min(a.height(), b.height());
      return shortest > 0.0 && v_overlap / shortest >= 0.5;
    }
  }
  return false;
}

namespace {

/// Predicates see boxes inflated to a tenth of the larger operand, so bars
/// and dots have usable extent.
bool pair_predicate(const SpatialPredicate& p, const BBox& a, const BBox& b) {
  const double scale = 0.1 * std::max({a.width(), a.height(), b.width(), b.height()});
  return evaluate_predicate(p.predicate, inflate(a, scale), inflate(b, scale), p.threshold);
}

bool instance_less(const SymbolInstance& a, const SymbolInstance& b) {
  if (a.bbox.center_x() != b.bbox.center_x()) return a.bbox.center_x() < b.bbox.center_x();
  if (a.bbox.min_y != b.bbox.min_y) return a.bbox.min_y < b.bbox.min_y;
  return std::tie(a.label, a.bbox.max_x, a.bbox.max_y, a.id) < std::tie(b.label, b.bbox.max_x, b.bbox.max_y, b.id);
}

bool find_match(const HeuristicRule& rule, const std::vector<SymbolInstance>& items, std::vector<std::size_t>& chosen,
                std::vector<bool>& used) {
  const std::size_t k = chosen.size();
  if (k == rule.components.size()) {
    if (rule.rewrite && items[chosen[*rule.rewrite]].label == rule.result) return false;
    // Members must be contiguous: no other symbol may sit between them.
    BBox hull = items[chosen.front()].bbox;
    for (auto i : chosen) hull = hull.united(items[i].bbox);
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (used[i]) continue;
      const auto& b = items[i].bbox;
      const double cx = b.center_x(), cy = b.center_y();
      if (cx > hull.min_x && cx < hull.max_x && cy > hull.min_y && cy < hull.max_y && overlap_percent(b, hull) >= 50.0)
        return false;
    }
    return true;
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (used[i] || !label_matches(rule.components[k], items[i].label)) continue;
    chosen.push_back(i);
    bool ok = true;
    for (const auto& p : rule.predicates) {
      const auto hi = static_cast<std::size_t>(std::max(p.first, p.second));
      if (hi != k) continue;
      if (!pair_predicate(p, items[chosen[p.first]].bbox, items[chosen[p.second]].bbox)) {
        ok = false;
        break;
      }
    }
    if (ok) {
      used[i] = true;
      if (find_match(rule, items, chosen, used)) return true;
      used[i] = false;
    }
    chosen.pop_back();
  }
  return false;
}

}  // namespace

std::vector<SymbolInstance> reconstruct(std::span<const RecognizedStroke> strokes, std::span<const HeuristicRule> rules,
                                        const RegionGeometry& /*geometry*/) {
  std::vector<SymbolInstance> items;
  items.reserve(strokes.size());
  for (const auto& s : strokes) items.push_back({s.stroke_id, s.label, {s.stroke_id}, s.bbox, s.confidence});
  const auto ordered = ordered_rules({rules.begin(), rules.end()});

  const std::size_t cap = 2 * strokes.size();
  std::size_t fired = 0;
  std::map<std::string, int> fire_counts;
  while (true) {
    std::sort(items.begin(), items.end(), instance_less);
    bool any = false;
    for (const auto& rule : ordered) {
      std::vector<std::size_t> chosen;
      std::vector<bool> used(items.size(), false);
      if (!find_match(rule, items, chosen, used)) continue;
      any = true;
      ++fire_counts[rule.id];
      if (rule.rewrite) {
        items[chosen[*rule.rewrite]].label = rule.result;
      } else {
        SymbolInstance merged;
        merged.label = rule.result;
        merged.bbox = items[chosen.front()].bbox;
        merged.confidence = 1.0;
        for (auto i : chosen) {
          merged.strokes.insert(merged.strokes.end(), items[i].strokes.begin(), items[i].strokes.end());
          merged.bbox = merged.bbox.united(items[i].bbox);
          merged.confidence = std::min(merged.confidence, items[i].confidence);
        }
        std::sort(merged.strokes.begin(), merged.strokes.end());
        for (std::size_t j = 0; j < merged.strokes.size(); ++j) merged.id += (j ? "+" : "") + merged.strokes[j];
        std::sort(chosen.begin(), chosen.end(), std::greater<>());
        for (auto i : chosen) items.erase(items.begin() + static_cast<std::ptrdiff_t>(i));
        items.push_back(std::move(merged));
      }
      break;
    }
    if (!any) break;
    if (++fired > cap) {
      std::vector<std::string> ids;
      for (const auto& [id, count] : fire_counts)
        if (count > 1) ids.push_back(id);
      if (ids.empty())
        for (const auto& [id, count] : fire_counts) ids.push_back(id);
      std::string names;
      for (std::size_t i = 0; i < ids.size(); ++i) names += (i ? ", " : "") + ids[i];
      throw ReconstructionError("reconstruction exceeded " + std::to_string(cap) +
                                    " rule applications without reaching a fixed point; rules: " + names,
                                ids);
    }
  }
  std::sort(items.begin(), items.end(), instance_less);
  return items;
}

// ---------------------------------------------------------------------------
// Grouping

namespace {

bool is_digit_label(const std::string& s) { return s.size() == 1 && std::isdigit(static_cast<unsigned char>(s[0])); }
bool is_separator_label(const std::string& s) { return s == "." || s == ","; }

/// A decimal mark next to a digit: close horizontally, its top in the lower
/// half of the digit or just under it.
bool on_baseline(const BBox& digit, const BBox& mark, bool mark_after) {
  // Centers only: marks are tiny and their boxes are mostly inflation.
  const double gap = mark_after ? mark.center_x() - digit.max_x : digit.min_x - mark.center_x();
  const double h = digit.height();
  return gap <= 0.6 * h && gap >= -0.1 * h && mark.center_y() > digit.center_y() + 0.2 * h &&
         mark.center_y() < digit.max_y + 0.35 * h;
}

struct Item {
  ExprNode node;
  std::string label;  // position-table class
  BBox box;           // inflated
  std::string key;    // stable identity (symbol id or derived)
  bool primitive = true;
};

/// b continues a line of small items after a: within one item height to the
/// right, overlapping vertically.
bool follows(const BBox& a, const BBox& b) {
  const double reach = std::max(a.height(), b.height());
  const double gap = b.min_x - a.max_x;
  const double v_overlap = std::min(a.max_y, b.max_y) - std::max(a.min_y, b.min_y);
  return b.center_x() > a.center_x() && gap <= reach && v_overlap >= 0.3 * std::min(a.height(), b.height());
}

/// b follows a on the same baseline.
bool same_line(const Item& a, const Item& b) {
  const SpatialPredicate adj{0, 1, Predicate::AdjacentRight, 0.6};
  if (b.primitive && is_separator_label(b.label)) return on_baseline(a.box, b.box, true);
  if (a.primitive && is_separator_label(a.label)) return on_baseline(b.box, a.box, false);
  return pair_predicate(adj, a.box, b.box);
}

bool item_less(const Item& a, const Item& b) {
  if (a.box.center_x() != b.box.center_x()) return a.box.center_x() < b.box.center_x();
  if (a.box.min_y != b.box.min_y) return a.box.min_y < b.box.min_y;
  return std::tie(a.label, a.key) < std::tie(b.label, b.key);
}

class Grouper {
 public:
  Grouper(const PositionTable& table, const RegionGeometry& geometry) : table_(table), geometry_(geometry) {}

  std::vector<Diagnostic>& diagnostics() { return diagnostics_; }

  std::vector<ExprNode> parse(std::vector<Item> items) {
    containers(items);
    items = brackets(std::move(items));
    big_operators(items);
    return sequence(std::move(items));
  }

 private:
  const PositionTable& table_;
  const RegionGeometry& geometry_;
  std::vector<Diagnostic> diagnostics_;
  std::set<std::string> tried_;

  void report(std::string message, std::vector<std::string> subjects) {
    diagnostics_.push_back({"group", std::move(message), std::move(subjects)});
  }

  std::optional<Scored> position_of(const Item& placed, const Item& anchor,
                                    std::initializer_list<RelPosition> allowed = {}) const {
    return best_position(placed.box, anchor.box, table_.row(anchor.label), geometry_, allowed);
  }

  Item make_item(ExprNode node, std::string label, const std::vector<const Item*>& parts) {
    Item it{std::move(node), std::move(label), parts.front()->box, {}, false};
    std::vector<std::string> keys;
    for (const auto* p : parts) {
      it.box = it.box.united(p->box);
      keys.push_back(p->key);
    }
    std::sort(keys.begin(), keys.end());
    for (std::size_t i = 0; i < keys.size(); ++i) it.key += (i ? "|" : "") + keys[i];
    it.key = it.label + "{" + it.key + "}";
    return it;
  }

  std::vector<Item> take(std::vector<Item>& items, const std::vector<std::size_t>& indices) {
    std::vector<std::size_t> sorted = indices;
    std::sort(sorted.begin(), sorted.end());
    std::vector<Item> out;
    for (auto i : sorted) out.push_back(items[i]);
    for (auto it = sorted.rbegin(); it != sorted.rend(); ++it) items.erase(items.begin() + static_cast<std::ptrdiff_t>(*it));
    return out;
  }

  ExprNode parse_slot(std::vector<Item> items) { return expr::slot(parse(std::move(items))); }

  // Fraction bars and roots, widest first, so enclosing constructs claim their content.
  void containers(std::vector<Item>& items) {
    while (true) {
      std::optional<std::size_t> pick;
      for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        if (!it.primitive || (it.label != "-" && it.label != "sqrt") || tried_.count(it.key)) continue;
        if (!pick || it.box.width() > items[*pick].box.width() ||
            (it.box.width() == items[*pick].box.width() && item_less(it, items[*pick])))
          pick = i;
      }
      if (!pick) return;
      tried_.insert(items[*pick].key);
      if (items[*pick].label == "-")
        fraction(items, *pick);
      else
        root(items, *pick);
    }
  }

  /// Adds decimal marks that sit on the baseline between two chosen digits.
  static void add_marks(const std::vector<Item>& items, std::vector<std::size_t>& chosen, std::size_t skip,
                        const std::vector<std::size_t>& elsewhere = {}) {
    for (std::size_t j = 0; j < items.size(); ++j) {
      const auto& m = items[j];
      if (j == skip || !m.primitive || !is_separator_label(m.label) || std::count(chosen.begin(), chosen.end(), j) ||
          std::count(elsewhere.begin(), elsewhere.end(), j))
        continue;
      bool left = false, right = false;
      for (auto i : chosen) {
        if (!items[i].primitive || !is_digit_label(items[i].label)) continue;
        left = left || on_baseline(items[i].box, m.box, true);
        right = right || on_baseline(items[i].box, m.box, false);
      }
      if (left && right) chosen.push_back(j);
    }
  }

  void fraction(std::vector<Item>& items, std::size_t bar_index) {
    const Item bar = items[bar_index];
    std::vector<std::size_t> above, below;
    for (std::size_t j = 0; j < items.size(); ++j) {
      if (j == bar_index) continue;
      const double cx = items[j].box.center_x();
      if (cx < bar.box.min_x || cx > bar.box.max_x) continue;
      const auto pos = position_of(items[j], bar);
      if (!pos) continue;
      if (pos->position == RelPosition::Above) above.push_back(j);
      if (pos->position == RelPosition::Below) below.push_back(j);
    }
    // Tall content (limits over a big operator, nested fractions) reaches past
    // the region: grow each side through vertically adjacent items.
    auto grow = [&](std::vector<std::size_t>& side, bool up) {
      if (side.empty()) return;
      bool changed = true;
      while (changed) {
        changed = false;
        for (std::size_t j = 0; j < items.size(); ++j) {
          if (j == bar_index || std::count(above.begin(), above.end(), j) || std::count(below.begin(), below.end(), j))
            continue;
          const auto& b = items[j].box;
          if (b.center_x() < bar.box.min_x || b.center_x() > bar.box.max_x) continue;
          if (up ? b.max_y > bar.box.center_y() : b.min_y < bar.box.center_y()) continue;
          for (auto i : side) {
            const auto& c = items[i].box;
            const double gap = up ? c.min_y - b.max_y : b.min_y - c.max_y;
            if (gap <= 0.5 * std::max(b.height(), c.height()) && b.max_x > c.min_x - c.height() &&
                b.min_x < c.max_x + c.height()) {
              side.push_back(j);
              changed = true;
              break;
            }
          }
        }
      }
    };
    grow(above, true);
    grow(below, false);
    add_marks(items, above, bar_index, below);
    add_marks(items, below, bar_index, above);
    if (above.empty() && below.empty()) return;
    if (above.empty() || below.empty()) {
      report(std::string("fraction bar missing its ") + (above.empty() ? "numerator" : "denominator"), {bar.key});
      return;
    }
    std::vector<std::size_t> all = above;
    all.insert(all.end(), below.begin(), below.end());
    all.push_back(bar_index);
    auto numerator = [&] {
      std::vector<Item> v;
      for (auto i : above) v.push_back(items[i]);
      return v;
    }();
    auto denominator = [&] {
      std::vector<Item> v;
      for (auto i : below) v.push_back(items[i]);
      return v;
    }();
    auto taken = take(items, all);
    std::vector<const Item*> parts;
    for (const auto& t : taken) parts.push_back(&t);
    ExprNode node = expr::frac(parse_slot(std::move(numerator)), parse_slot(std::move(denominator)));
    items.push_back(make_item(std::move(node), "fraction", parts));
  }

  void root(std::vector<Item>& items, std::size_t root_index) {
    const Item radical = items[root_index];
    std::vector<std::size_t> inside, degree;
    for (std::size_t j = 0; j < items.size(); ++j) {
      if (j == root_index) continue;
      const auto& b = items[j].box;
      const auto& r = radical.box;
      const bool centered = b.center_x() > r.min_x && b.center_x() < r.max_x && b.center_y() > r.min_y &&
                            b.center_y() < r.max_y;
      if (b.height() <= 0.75 * r.height() && b.center_x() < r.min_x + 0.1 * r.height() &&
          b.max_x >= r.min_x - 0.3 * r.height() && b.center_y() < r.min_y + 0.3 * r.height() &&
          position_of(items[j], radical, {RelPosition::UpperLeft})) {
        degree.push_back(j);
        continue;
      }
      const auto pos = position_of(items[j], radical);
      if (centered || (pos && pos->position == RelPosition::Inside)) inside.push_back(j);
    }
    add_marks(items, inside, root_index, degree);
    if (inside.empty()) {
      report("root missing its radicand", {radical.key});
      return;
    }
    std::vector<Item> radicand_items, degree_items;
    for (auto i : inside) radicand_items.push_back(items[i]);
    for (auto i : degree) degree_items.push_back(items[i]);
    std::vector<std::size_t> all = inside;
    all.insert(all.end(), degree.begin(), degree.end());
    all.push_back(root_index);
    auto taken = take(items, all);
    std::vector<const Item*> parts;
    for (const auto& t : taken) parts.push_back(&t);
    std::optional<ExprNode> deg;
    if (!degree_items.empty()) deg = parse_slot(std::move(degree_items));
    ExprNode node = expr::sqrt(parse_slot(std::move(radicand_items)), std::move(deg));
    items.push_back(make_item(std::move(node), "root", parts));
  }

  std::vector<Item> brackets(std::vector<Item> items) {
    std::sort(items.begin(), items.end(), item_less);
    struct Frame {
      std::optional<Item> open;
      std::vector<Item> content;
    };
    std::vector<Frame> frames(1);
    auto kind_of = [](const std::string& label) {
      return (label == "(" || label == ")") ? expr::BracketKind::Paren : expr::BracketKind::Square;
    };
    for (auto& it : items) {
      const bool opening = it.primitive && (it.label == "(" || it.label == "[");
      const bool closing = it.primitive && (it.label == ")" || it.label == "]");
      if (opening) {
        frames.push_back({it, {}});
      } else if (closing && frames.size() > 1 && kind_of(frames.back().open->label) == kind_of(it.label)) {
        Frame f = std::move(frames.back());
        frames.pop_back();
        std::vector<const Item*> parts{&*f.open, &it};
        for (const auto& c : f.content) parts.push_back(&c);
        Item grouped = make_item(expr::ExprNode{}, "group", parts);
        grouped.node = expr::group(kind_of(it.label), parse_slot(f.content));
        frames.back().content.push_back(std::move(grouped));
      } else if (closing) {
        report("unmatched closing bracket '" + it.label + "'", {it.key});
        frames.back().content.push_back(it);
      } else {
        frames.back().content.push_back(it);
      }
    }
    while (frames.size() > 1) {
      Frame f = std::move(frames.back());
      frames.pop_back();
      report("unmatched opening bracket '" + f.open->label + "'", {f.open->key});
      frames.back().content.push_back(*f.open);
      for (auto& c : f.content) frames.back().content.push_back(std::move(c));
    }
    return std::move(frames.front().content);
  }

  void big_operators(std::vector<Item>& items) {
    while (true) {
      // Rightmost untried operator first, so nested bodies collapse inside out.
      std::optional<std::size_t> pick;
      for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        if (!it.primitive || (it.label != "sum" && it.label != "prod" && it.label != "int") || tried_.count(it.key))
          continue;
        if (!pick || item_less(items[*pick], it)) pick = i;
      }
      if (!pick) return;
      tried_.insert(items[*pick].key);
      big_operator(items, *pick);
    }
  }

  void big_operator(std::vector<Item>& items, std::size_t op_index) {
    const Item op = items[op_index];
    const bool integral = op.label == "int";
    const double h = op.box.height();
    std::vector<bool> upper(items.size(), false), lower(items.size(), false);
    for (std::size_t j = 0; j < items.size(); ++j) {
      if (j == op_index) continue;
      const auto pos = integral ? position_of(items[j], op,
                                              {RelPosition::Above, RelPosition::Below, RelPosition::SuperScript,
                                               RelPosition::SubScript})
                                : position_of(items[j], op, {RelPosition::Above, RelPosition::Below});
      if (!pos) continue;
      const bool up = pos->position == RelPosition::Above || (integral && pos->position == RelPosition::SuperScript);
      const bool down = pos->position == RelPosition::Below || (integral && pos->position == RelPosition::SubScript);
      const auto& b = items[j].box;
      if (up && b.max_y <= op.box.center_y() && b.center_y() < op.box.min_y + 0.12 * h) upper[j] = true;
      if (down && b.min_y >= op.box.center_y() && b.center_y() > op.box.max_y - 0.12 * h) lower[j] = true;
    }
    // Limits spill past the operator's width; extend them along their own baseline.
    auto extend = [&](std::vector<bool>& set, bool top) {
      bool grew = true;
      while (grew) {
        grew = false;
        for (std::size_t j = 0; j < items.size(); ++j) {
          if (j == op_index || upper[j] || lower[j]) continue;
          const auto& b = items[j].box;
          if (top ? !(b.max_y < op.box.min_y + 0.25 * h) : !(b.min_y > op.box.max_y - 0.25 * h)) continue;
          for (std::size_t m = 0; m < items.size(); ++m) {
            if (!set[m]) continue;
            if (same_line(items[m], items[j]) || same_line(items[j], items[m])) {
              set[j] = true;
              grew = true;
              break;
            }
          }
        }
      }
    };
    extend(upper, true);
    extend(lower, false);

    std::vector<std::size_t> body_candidates;
    for (std::size_t j = 0; j < items.size(); ++j)
      if (j != op_index && !upper[j] && !lower[j] && items[j].box.center_x() > op.box.center_x())
        body_candidates.push_back(j);
    std::sort(body_candidates.begin(), body_candidates.end(),
              [&](std::size_t a, std::size_t b) { return item_less(items[a], items[b]); });
    std::vector<std::size_t> body;
    for (auto j : body_candidates) {
      const auto& it = items[j];
      if (it.primitive && (it.label == "+" || it.label == "-" || it.label == "=" || it.label == "<" || it.label == ">"))
        break;
      body.push_back(j);
    }
    if (body.empty()) {
      report("big operator '" + op.label + "' missing its body", {op.key});
      return;
    }

    std::vector<Item> upper_items, lower_items, body_items;
    std::vector<std::size_t> all{op_index};
    for (std::size_t j = 0; j < items.size(); ++j) {
      if (upper[j]) upper_items.push_back(items[j]), all.push_back(j);
      if (lower[j]) lower_items.push_back(items[j]), all.push_back(j);
    }
    for (auto j : body) body_items.push_back(items[j]), all.push_back(j);
    auto taken = take(items, all);
    std::vector<const Item*> parts;
    for (const auto& t : taken) parts.push_back(&t);

    std::optional<ExprNode> lo, up;
    if (!lower_items.empty()) lo = parse_slot(std::move(lower_items));
    if (!upper_items.empty()) up = parse_slot(std::move(upper_items));
    ExprNode node = expr::bigop(expr::bigop_from_string(op.label), std::move(lo), std::move(up),
                                parse_slot(std::move(body_items)));
    items.push_back(make_item(std::move(node), "bigop", parts));
  }

  // Baseline pass: scripts and number fusion.
  std::vector<ExprNode> sequence(std::vector<Item> items) {
    std::sort(items.begin(), items.end(), item_less);
    std::vector<ExprNode> out;

    struct Base {
      const Item* item = nullptr;
      std::string number;  // non-empty while fusing digits
      BBox box;
      std::string label;
      const Item* last = nullptr;
      std::vector<Item> sup, sub;
      bool in_sup = false;
    };
    std::optional<Base> base;

    auto commit = [&] {
      if (!base) return;
      ExprNode core = base->number.empty() ? base->item->node : expr::num(base->number);
      if (base->sup.empty() && base->sub.empty()) {
        out.push_back(std::move(core));
      } else {
        expr::Scripts s{std::move(core), {}, {}};
        if (!base->sup.empty()) s.sup = expr::Child(parse_slot(std::move(base->sup)));
        if (!base->sub.empty()) s.sub = expr::Child(parse_slot(std::move(base->sub)));
        out.push_back({std::move(s)});
      }
      base.reset();
    };
    auto start = [&](const Item& it) {
      Base b;
      b.item = &it;
      b.box = it.box;
      const auto& desc = geometry_.descenders;
      if (it.primitive && std::find(desc.begin(), desc.end(), it.label) != desc.end())
        b.box.max_y -= geometry_.descender_depth * it.box.height();
      b.label = it.label;
      b.last = &it;
      if (it.primitive && is_digit_label(it.label)) {
        b.number = it.label;
        b.label = "number";
      }
      base = std::move(b);
    };
    const SpatialPredicate adjacent{0, 1, Predicate::AdjacentRight, 0.6};

    for (std::size_t i = 0; i < items.size(); ++i) {
      const Item& s = items[i];
      if (!base) {
        start(s);
        continue;
      }
      const BBox& core = base->box;
      const double mid = core.center_y();
      const double h = core.height();
      // A script clears the base's baseline band (superscript) or top band
      // (subscript) and starts past its top or bottom edge; later items of
      // an open script only need to stay clear.
      const bool above = s.box.max_y < core.max_y - 0.2 * h && s.box.center_y() < mid - 0.15 * h;
      const bool below = s.box.min_y > core.min_y + 0.2 * h && s.box.center_y() > mid + 0.15 * h;
      const bool op = s.primitive && (s.label == "+" || s.label == "-" || s.label == "=");
      const bool above_op = !op || s.box.center_y() < core.min_y;
      const bool below_op = !op || s.box.center_y() > core.max_y;
      const bool raised = above && above_op && s.box.min_y < core.min_y - 0.05 * h;
      const bool lowered = below && below_op && s.box.max_y > core.max_y + 0.12 * h;
      const bool punctuation = s.primitive && is_separator_label(s.label);

      // Continue an open script along its own baseline.
      auto& script = base->in_sup ? base->sup : base->sub;
      if (!script.empty() && !punctuation && (base->in_sup ? above && above_op : below && below_op)) {
        const auto pl = position_of(s, script.back(), {RelPosition::Right, RelPosition::SuperScript, RelPosition::SubScript});
        if ((pl && pl->position == RelPosition::Right) || follows(script.back().box, s.box)) {
          script.push_back(s);
          continue;
        }
      }

      // Between a decimal mark and its digit nothing can be a script.
      const bool mid_number = !base->number.empty() && is_separator_label(base->last->label);
      if (!punctuation && !mid_number) {
        const auto& row = table_.row(base->label);
        if (raised && best_position(s.box, core, row, geometry_, {RelPosition::SuperScript})) {
          base->sup.push_back(s);
          base->in_sup = true;
          continue;
        }
        if (lowered && best_position(s.box, core, row, geometry_, {RelPosition::SubScript})) {
          base->sub.push_back(s);
          base->in_sup = false;
          continue;
        }
      }

      if (!base->number.empty() && base->sup.empty() && base->sub.empty() && s.primitive) {
        const bool digit = is_digit_label(s.label) &&
                           (is_separator_label(base->last->label) ? on_baseline(s.box, base->last->box, false)
                                                                  : pair_predicate(adjacent, base->last->box, s.box));
        const bool separator = is_separator_label(s.label) && !is_separator_label(base->last->label) &&
                               on_baseline(base->last->box, s.box, true) && i + 1 < items.size() &&
                               items[i + 1].primitive && is_digit_label(items[i + 1].label) &&
                               on_baseline(items[i + 1].box, s.box, false);
        if (digit || separator) {
          base->number += s.label;
          if (digit) base->box = base->box.united(s.box);
          base->last = &s;
          continue;
        }
      }
      commit();
      start(s);
    }
    commit();
    return out;
  }
};

std::vector<Item> to_items(std::span<const SymbolInstance> instances, double eps) {
  std::vector<Item> items;
  for (const auto& s : instances) items.push_back({expr::sym(s.label), s.label, inflate(s.bbox, eps), s.id, true});
  return items;
}

double instances_epsilon(std::span<const SymbolInstance> instances, const RegionGeometry& g) {
  std::vector<BBox> boxes;
  for (const auto& s : instances) boxes.push_back(s.bbox);
  return scene_epsilon(boxes, g);
}

ExprNode group_lenient(std::span<const SymbolInstance> instances, const PositionTable& table, const RegionGeometry& g,
                       std::vector<Diagnostic>& diagnostics) {
  Grouper grouper(table, g);
  auto children = grouper.parse(to_items(instances, instances_epsilon(instances, g)));
  diagnostics = std::move(grouper.diagnostics());
  return expr::row(std::move(children));
}

}  // namespace

ExprNode group_symbols(std::span<const SymbolInstance> instances, const PositionTable& table,
                       const RegionGeometry& geometry) {
  if (instances.empty()) throw StructureError("nothing to group");
  std::vector<Diagnostic> diagnostics;
  auto tree = group_lenient(instances, table, geometry, diagnostics);
  if (!diagnostics.empty()) {
    std::string msg;
    for (const auto& d : diagnostics) {
      msg += (msg.empty() ? "" : "; ") + d.message;
      for (const auto& s : d.subjects) msg += " [" + s + "]";
    }
    throw StructureError(msg);
  }
  return tree;
}

AnalysisReport analyze(std::span<const RecognizedStroke> strokes, const Knowledge& knowledge) {
  AnalysisReport report{{}, expr::row(), {}};
  if (strokes.empty()) return report;
  try {
    report.symbols = reconstruct(strokes, knowledge.rules, knowledge.geometry);
  } catch (const ReconstructionError& e) {
    report.diagnostics.push_back({"reconstruct", e.what(), e.rule_ids()});
    report.symbols = reconstruct(strokes, {}, knowledge.geometry);
  }
  std::vector<Diagnostic> grouping;
  report.tree = group_lenient(report.symbols, knowledge.positions, knowledge.geometry, grouping);
  report.diagnostics.insert(report.diagnostics.end(), grouping.begin(), grouping.end());
  return report;
}

}  // namespace mathink::structure
