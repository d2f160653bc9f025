#include "mathink/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "mathink/error.hpp"

namespace mathink::corpus {

using expr::ExprNode;
using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

// Portable draws: the standard distributions differ between library vendors.
double uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform(rng); }
double normal(std::mt19937_64& rng) {
  const double u1 = std::max(uniform(rng), 1e-300);
  const double u2 = uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}
int pick(std::mt19937_64& rng, int n) { return static_cast<int>(uniform(rng) * n) % n; }
template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[static_cast<std::size_t>(pick(rng, static_cast<int>(v.size())))];
}
bool chance(std::mt19937_64& rng, double p) { return uniform(rng) < p; }

struct P {
  double x, y;
};
using Path = std::vector<P>;

// Elliptic arc, angles in degrees, y down (90 degrees points down).
void arc(Path& p, double cx, double cy, double rx, double ry, double a0, double a1, int n = 24) {
  for (int i = 0; i <= n; ++i) {
    const double a = (a0 + (a1 - a0) * i / n) * kPi / 180.0;
    p.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
}

void line(Path& p, std::initializer_list<P> pts) {
  for (const auto& q : pts) p.push_back(q);
}

/// Template for a stroke class in em units, y down, baseline at 0.
Path template_of(const std::string& c) {
  Path p;
  if (c == "0") {
    arc(p, 0.21, -0.35, 0.19, 0.35, -90, -455, 40);
  } else if (c == "1") {
    line(p, {{0.04, -0.5}, {0.22, -0.7}, {0.22, 0.0}});
  } else if (c == "2") {
    arc(p, 0.21, -0.5, 0.19, 0.19, -165, 30);
    line(p, {{0.02, 0.0}, {0.43, 0.0}});
  } else if (c == "3") {
    arc(p, 0.2, -0.53, 0.17, 0.17, -160, 90);
    arc(p, 0.2, -0.18, 0.2, 0.18, -90, 160);
  } else if (c == "4") {
    line(p, {{0.32, 0.0}, {0.32, -0.7}, {0.02, -0.22}, {0.43, -0.22}});
  } else if (c == "5") {
    line(p, {{0.38, -0.7}, {0.08, -0.7}, {0.05, -0.4}});
    arc(p, 0.2, -0.22, 0.2, 0.21, -130, 140);
  } else if (c == "6") {
    line(p, {{0.36, -0.68}, {0.2, -0.6}, {0.08, -0.42}, {0.03, -0.2}});
    arc(p, 0.21, -0.19, 0.18, 0.19, 180, -175);
  } else if (c == "7") {
    line(p, {{0.0, -0.7}, {0.42, -0.7}, {0.15, 0.0}});
  } else if (c == "8") {
    for (int i = 0; i <= 48; ++i) {
      const double t = 2.0 * kPi * i / 48.0;
      p.push_back({0.21 + 0.38 * std::sin(t) * std::cos(t), -0.35 - 0.35 * std::cos(t)});
    }
  } else if (c == "9") {
    arc(p, 0.2, -0.5, 0.18, 0.2, 0, -360);
    line(p, {{0.38, -0.3}, {0.35, -0.1}, {0.25, 0.0}, {0.08, 0.02}});
  } else if (c == "a") {
    arc(p, 0.18, -0.22, 0.17, 0.22, -30, -370);
    line(p, {{0.36, -0.45}, {0.36, -0.04}, {0.42, 0.0}});
  } else if (c == "b") {
    line(p, {{0.04, -0.7}, {0.04, 0.0}, {0.03, -0.22}});
    arc(p, 0.2, -0.22, 0.17, 0.22, 180, 540);
  } else if (c == "c") {
    arc(p, 0.2, -0.22, 0.19, 0.22, -40, -320);
  } else if (c == "d") {
    arc(p, 0.18, -0.22, 0.17, 0.22, -30, -370);
    line(p, {{0.36, -0.4}, {0.36, -0.7}, {0.36, 0.0}});
  } else if (c == "e") {
    line(p, {{0.03, -0.22}, {0.37, -0.22}});
    arc(p, 0.2, -0.22, 0.18, 0.22, 0, -320);
  } else if (c == "h") {
    line(p, {{0.04, -0.7}, {0.04, 0.0}, {0.04, -0.3}});
    arc(p, 0.2, -0.3, 0.16, 0.15, 180, 360);
    line(p, {{0.36, 0.0}});
  } else if (c == "m") {
    line(p, {{0.03, -0.45}, {0.03, 0.0}, {0.03, -0.32}});
    arc(p, 0.15, -0.32, 0.12, 0.13, 180, 360, 12);
    line(p, {{0.27, 0.0}, {0.27, -0.32}});
    arc(p, 0.39, -0.32, 0.12, 0.13, 180, 360, 12);
    line(p, {{0.51, 0.0}});
  } else if (c == "n") {
    line(p, {{0.03, -0.45}, {0.03, 0.0}, {0.03, -0.3}});
    arc(p, 0.19, -0.3, 0.16, 0.15, 180, 360);
    line(p, {{0.35, 0.0}});
  } else if (c == "o") {
    arc(p, 0.2, -0.22, 0.2, 0.22, -60, -420, 36);
  } else if (c == "p") {
    line(p, {{0.04, -0.45}, {0.04, 0.25}, {0.04, -0.22}});
    arc(p, 0.2, -0.22, 0.17, 0.22, 180, 520);
  } else if (c == "q") {
    arc(p, 0.18, -0.22, 0.17, 0.22, -30, -370);
    line(p, {{0.36, -0.45}, {0.36, 0.25}, {0.44, 0.17}});
  } else if (c == "r") {
    line(p, {{0.04, -0.45}, {0.04, 0.0}, {0.04, -0.28}});
    arc(p, 0.2, -0.28, 0.16, 0.16, 180, 300, 12);
  } else if (c == "s") {
    arc(p, 0.19, -0.34, 0.15, 0.11, -30, -270);
    arc(p, 0.19, -0.11, 0.15, 0.11, -90, 150);
  } else if (c == "u") {
    line(p, {{0.03, -0.45}, {0.03, -0.15}});
    arc(p, 0.19, -0.15, 0.16, 0.15, 180, 0);
    line(p, {{0.35, -0.45}, {0.35, 0.0}});
  } else if (c == "v") {
    line(p, {{0.0, -0.45}, {0.2, 0.0}, {0.4, -0.45}});
  } else if (c == "w") {
    line(p, {{0.0, -0.45}, {0.13, 0.0}, {0.26, -0.35}, {0.39, 0.0}, {0.52, -0.45}});
  } else if (c == "x") {
    line(p, {{0.0, -0.45}, {0.4, 0.0}, {0.4, -0.45}, {0.0, 0.0}});
  } else if (c == "y") {
    line(p, {{0.02, -0.45}, {0.04, -0.12}});
    arc(p, 0.19, -0.12, 0.15, 0.12, 180, 0, 12);
    line(p, {{0.34, -0.45}, {0.34, 0.15}, {0.22, 0.26}, {0.05, 0.2}});
  } else if (c == "-") {
    line(p, {{0.0, -0.25}, {0.45, -0.25}});
  } else if (c == "|") {
    line(p, {{0.0, -0.6}, {0.0, 0.0}});
  } else if (c == "(") {
    arc(p, 0.3, -0.3, 0.28, 0.5, -120, -240);
  } else if (c == ")") {
    arc(p, -0.14, -0.3, 0.28, 0.5, -60, 60);
  } else if (c == "[") {
    line(p, {{0.2, -0.8}, {0.0, -0.8}, {0.0, 0.2}, {0.2, 0.2}});
  } else if (c == "]") {
    line(p, {{0.0, -0.8}, {0.2, -0.8}, {0.2, 0.2}, {0.0, 0.2}});
  } else if (c == ".") {
    line(p, {{0.03, -0.04}, {0.03, -0.04}, {0.03, -0.04}});
  } else if (c == ",") {
    line(p, {{0.06, -0.06}, {0.08, 0.0}, {0.06, 0.08}, {0.0, 0.15}});
  } else if (c == "sum") {
    line(p, {{0.55, -0.9}, {0.0, -0.9}, {0.32, -0.3}, {0.0, 0.3}, {0.55, 0.3}});
  } else if (c == "prod") {
    line(p, {{0.0, 0.3}, {0.0, -0.9}, {0.6, -0.9}, {0.6, 0.3}});
  } else if (c == "int") {
    line(p, {{0.34, -0.92}, {0.27, -1.0}, {0.18, -0.95}, {0.15, -0.8}, {0.12, 0.2}, {0.08, 0.32}, {0.0, 0.35},
             {-0.06, 0.3}});
  } else if (c == "sqrt") {
    line(p, {{0.0, -0.3}, {0.08, -0.36}, {0.2, 0.0}, {0.36, -0.8}, {0.9, -0.8}});
  } else {
    throw DataError("no template for stroke class '" + c + "'");
  }
  return p;
}

struct Extent {
  double min_x, min_y, max_x, max_y;
};

Extent extent(const Path& p) {
  Extent e{p[0].x, p[0].y, p[0].x, p[0].y};
  for (const auto& q : p) {
    e.min_x = std::min(e.min_x, q.x);
    e.max_x = std::max(e.max_x, q.x);
    e.min_y = std::min(e.min_y, q.y);
    e.max_y = std::max(e.max_y, q.y);
  }
  return e;
}

/// Template scaled by f and shifted so that its left edge is at 0.
Path glyph(const std::string& c, double f) {
  Path p = template_of(c);
  const double left = extent(p).min_x;
  for (auto& q : p) q = {(q.x - left) * f, q.y * f};
  return p;
}

/// Template stretched to fill [0, w] x [top, bottom].
Path fitted(const std::string& c, double w, double top, double bottom) {
  Path p = template_of(c);
  const auto e = extent(p);
  const double sx = e.max_x > e.min_x ? w / (e.max_x - e.min_x) : 1.0;
  const double sy = e.max_y > e.min_y ? (bottom - top) / (e.max_y - e.min_y) : 1.0;
  for (auto& q : p) q = {(q.x - e.min_x) * sx, top + (q.y - e.min_y) * sy};
  return p;
}

struct Poly {
  std::string cls;
  Path pts;
  bool container = false;
};

struct Sym {
  std::string label;
  std::vector<Poly> strokes;
  P anchor{0.0, 0.0};  // scale and rotation origin: baseline center, or box center for containers
};

struct Layout {
  double w = 0.0;
  double top = 0.0;     // smallest y
  double bottom = 0.0;  // largest y
  std::vector<Sym> syms;

  void shift(double dx, double dy) {
    for (auto& s : syms) {
      s.anchor = {s.anchor.x + dx, s.anchor.y + dy};
      for (auto& st : s.strokes)
        for (auto& q : st.pts) q = {q.x + dx, q.y + dy};
    }
    top += dy;
    bottom += dy;
  }
  void append(Layout other, double dx) {
    other.shift(dx, 0.0);
    if (syms.empty()) {
      top = other.top;
      bottom = other.bottom;
    } else {
      top = std::min(top, other.top);
      bottom = std::max(bottom, other.bottom);
    }
    w = std::max(w, dx + other.w);
    for (auto& s : other.syms) syms.push_back(std::move(s));
  }
  void merge(Layout other) {
    // Pieces already positioned in this box's frame.
    if (syms.empty() && w == 0.0) {
      *this = std::move(other);
      return;
    }
    top = std::min(top, other.top);
    bottom = std::max(bottom, other.bottom);
    w = std::max(w, other.w);
    for (auto& s : other.syms) syms.push_back(std::move(s));
  }
};

/// axis: height the symbol is scaled about when jittered.
Layout from_strokes(std::string label, std::vector<Poly> strokes, double axis = 0.0) {
  Layout l;
  Extent e{1e9, 1e9, -1e9, -1e9};
  for (const auto& s : strokes) {
    const auto x = extent(s.pts);
    e = {std::min(e.min_x, x.min_x), std::min(e.min_y, x.min_y), std::max(e.max_x, x.max_x), std::max(e.max_y, x.max_y)};
  }
  l.w = e.max_x;
  l.top = e.min_y;
  l.bottom = e.max_y;
  const bool container = !strokes.empty() && strokes.front().container;
  const P anchor = container ? P{(e.min_x + e.max_x) / 2.0, (e.min_y + e.max_y) / 2.0} : P{(e.min_x + e.max_x) / 2.0, axis};
  l.syms.push_back({std::move(label), std::move(strokes), anchor});
  return l;
}

const std::set<std::string> kFunctions{"sin", "cos", "exp", "min", "max"};

Poly shifted(Poly p, double dx, double dy) {
  for (auto& q : p.pts) q = {q.x + dx, q.y + dy};
  return p;
}

Layout symbol_layout(const std::string& label, double f) {
  if (label == "=") {
    Poly a{"-", {{0.0, -0.36 * f}, {0.45 * f, -0.36 * f}}};
    Poly b{"-", {{0.0, -0.14 * f}, {0.45 * f, -0.14 * f}}};
    return from_strokes(label, {a, b}, -0.3 * f);
  }
  if (label == "+") {
    Poly h{"-", {{0.0, -0.25 * f}, {0.46 * f, -0.25 * f}}};
    Poly v{"|", {{0.23 * f, -0.48 * f}, {0.23 * f, -0.02 * f}}};
    return from_strokes(label, {h, v}, -0.3 * f);
  }
  if (label == "i") {
    Poly stem{"|", {{0.03 * f, -0.45 * f}, {0.03 * f, 0.0}}};
    Poly dot = shifted({".", glyph(".", f)}, 0.0, -0.55 * f);
    return from_strokes(label, {stem, dot}, -0.3 * f);
  }
  if (kFunctions.count(label)) {
    Layout l;
    double x = 0.0;
    for (char ch : label) {
      Layout letter = symbol_layout(std::string(1, ch), f);
      l.append(letter, x);
      x += letter.w + 0.08 * f;
    }
    std::vector<Poly> strokes;
    for (auto& s : l.syms)
      for (auto& st : s.strokes) strokes.push_back(std::move(st));
    return from_strokes(label, std::move(strokes), -0.3 * f);
  }
  return from_strokes(label, {{label, glyph(label, f)}}, -0.3 * f);
}

bool is_operator(const ExprNode& n) {
  if (!n.is<expr::Symbol>()) return false;
  const auto& l = n.as<expr::Symbol>().label;
  return l == "+" || l == "-" || l == "=";
}

Layout layout(const ExprNode& node, double f);

Layout row_layout(const std::vector<ExprNode>& children, double f) {
  Layout l;
  double x = 0.0;
  for (std::size_t i = 0; i < children.size(); ++i) {
    const bool op = is_operator(children[i]) || (i > 0 && is_operator(children[i - 1]));
    const bool comma = children[i].is<expr::Symbol>() && children[i].as<expr::Symbol>().label == ",";
    if (i > 0) x += op ? 0.24 * f : comma ? 0.06 * f : 0.16 * f;
    Layout c = layout(children[i], f);
    l.append(c, x);
    x += c.w;
  }
  l.w = x;
  return l;
}

Layout layout(const ExprNode& node, double f) {
  using namespace expr;
  if (node.is<Symbol>()) return symbol_layout(node.as<Symbol>().label, f);
  if (node.is<Number>()) {
    std::vector<ExprNode> digits;
    Layout l;
    double x = 0.0;
    for (char ch : node.as<Number>().text) {
      if (x > 0.0) x += 0.08 * f;
      Layout d = symbol_layout(std::string(1, ch), f);
      l.append(d, x);
      x += d.w;
    }
    l.w = x;
    return l;
  }
  if (node.is<Row>()) return row_layout(node.as<Row>().children, f);
  if (node.is<Fraction>()) {
    const auto& fr = node.as<Fraction>();
    Layout num = layout(*fr.numerator, f);
    Layout den = layout(*fr.denominator, f);
    const double w = std::max(num.w, den.w) + 0.32 * f;
    const double bar_y = -0.25 * f;
    Layout l = from_strokes("-", {{"-", {{0.0, bar_y}, {w, bar_y}}, true}});
    num.shift((w - num.w) / 2.0, bar_y - 0.2 * f - num.bottom);
    den.shift((w - den.w) / 2.0, bar_y + 0.2 * f - den.top);
    l.append(num, 0.0);
    l.append(den, 0.0);
    l.w = w;
    return l;
  }
  if (node.is<Scripts>()) {
    const auto& sc = node.as<Scripts>();
    Layout base = layout(*sc.base, f);
    double core_bottom = base.bottom;
    if (sc.base->is<Symbol>()) {
      const auto& label = sc.base->as<Symbol>().label;
      if (label == "p" || label == "q" || label == "y") core_bottom = 0.0;
    }
    Layout l = base;
    const double x = base.w + 0.04 * f;
    double right = base.w;
    if (sc.sup) {
      Layout s = layout(**sc.sup, 0.6 * f);
      s.shift(0.0, base.top + 0.08 * f);
      right = std::max(right, x + s.w);
      l.append(s, x);
    }
    if (sc.sub) {
      Layout s = layout(**sc.sub, 0.6 * f);
      s.shift(0.0, core_bottom + 0.25 * f);
      right = std::max(right, x + s.w);
      l.append(s, x);
    }
    l.w = right;
    return l;
  }
  if (node.is<Root>()) {
    const auto& r = node.as<Root>();
    Layout rad = layout(*r.radicand, f);
    const double hook = 0.38 * f;
    const double top = std::min(rad.top, -0.45 * f) - 0.12 * f;
    const double bottom = std::max(rad.bottom, 0.0) + 0.1 * f;
    const double h = bottom - top;
    const double bar_end = hook + 0.04 * f + rad.w + 0.2 * f;
    Path p{{0.0, bottom - 0.45 * h}, {0.08 * f, bottom - 0.5 * h}, {0.2 * f, bottom}, {hook, top}, {bar_end, top}};
    Layout l = from_strokes("sqrt", {{"sqrt", p, true}});
    l.append(rad, hook + 0.04 * f);
    l.w = bar_end;
    if (r.degree) {
      Layout d = layout(**r.degree, 0.55 * f);
      const double shift = d.w + 0.03 * f;
      l.shift(0.0, 0.0);
      Layout out;
      d.shift(0.0, top + 0.05 * h - (d.top + d.bottom) / 2.0);
      out.append(d, 0.0);
      out.append(l, shift);
      out.w = shift + l.w;
      return out;
    }
    return l;
  }
  if (node.is<BigOp>()) {
    const auto& b = node.as<BigOp>();
    const std::string cls = b.op == BigOpKind::Sum ? "sum" : b.op == BigOpKind::Product ? "prod" : "int";
    Layout op = symbol_layout(cls, f);
    Layout l;
    double body_x;
    if (b.op == BigOpKind::Integral) {
      l.append(op, 0.0);
      double right = op.w;
      if (b.upper) {
        Layout u = layout(**b.upper, 0.6 * f);
        u.shift(0.0, op.top - (u.top + u.bottom) / 2.0);
        right = std::max(right, op.w + 0.02 * f + u.w);
        l.append(u, op.w + 0.02 * f);
      }
      if (b.lower) {
        Layout d = layout(**b.lower, 0.6 * f);
        d.shift(0.0, op.bottom - (d.top + d.bottom) / 2.0);
        right = std::max(right, op.w + 0.02 * f + d.w);
        l.append(d, op.w + 0.02 * f);
      }
      body_x = right + 0.14 * f;
    } else {
      double col = op.w;
      std::optional<Layout> up, lo;
      if (b.upper) up = layout(**b.upper, 0.6 * f), col = std::max(col, up->w);
      if (b.lower) lo = layout(**b.lower, 0.6 * f), col = std::max(col, lo->w);
      l.append(op, (col - op.w) / 2.0);
      if (up) {
        up->shift(0.0, op.top - 0.08 * f - up->bottom);
        l.append(*up, (col - up->w) / 2.0);
      }
      if (lo) {
        lo->shift(0.0, op.bottom + 0.08 * f - lo->top);
        l.append(*lo, (col - lo->w) / 2.0);
      }
      body_x = col + 0.14 * f;
    }
    Layout body = layout(*b.body, f);
    l.append(body, body_x);
    l.w = body_x + body.w;
    return l;
  }
  if (node.is<Group>()) {
    const auto& g = node.as<Group>();
    Layout c = layout(*g.child, f);
    const double top = std::min(c.top, -0.7 * f) - 0.1 * f;
    const double bottom = std::max(c.bottom, 0.05 * f) + 0.1 * f;
    const double h = bottom - top;
    const double pw = 0.08 * f + 0.1 * h;
    const bool paren = g.kind == BracketKind::Paren;
    Layout l = from_strokes(paren ? "(" : "[", {{paren ? "(" : "[", fitted(paren ? "(" : "[", pw, top, bottom), true}});
    l.append(c, pw + 0.08 * f);
    const double close_x = pw + 0.08 * f + c.w + 0.08 * f;
    Layout close = from_strokes(paren ? ")" : "]", {{paren ? ")" : "]", fitted(paren ? ")" : "]", pw, top, bottom), true}});
    l.append(close, close_x);
    l.w = close_x + pw;
    return l;
  }
  throw DataError("cannot lay out node " + expr::debug_string(node));
}

struct Pose {
  P anchor;
  double scale = 1.0;
  double angle = 0.0;
};

Pose pose_of(const Sym& s, const Jitter& j, std::mt19937_64& rng) {
  const bool container = !s.strokes.empty() && s.strokes.front().container;
  Pose pose{s.anchor, 1.0, 0.0};
  // Long containers keep their ends within container_scale em.
  double size = 1.0;
  for (const auto& st : s.strokes) {
    const auto e = extent(st.pts);
    size = std::max({size, e.max_x - e.min_x, e.max_y - e.min_y});
  }
  const double spread = j.container_scale / size;
  pose.scale = container ? uniform(rng, 1.0 - spread, 1.0 + spread) : uniform(rng, j.scale_min, j.scale_max);
  const double limit = container ? j.container_rotation_deg : j.rotation_deg;
  pose.angle = uniform(rng, -limit, limit) * kPi / 180.0;
  return pose;
}

/// Jitter, densify and convert one template polyline into ink points.
std::vector<ink::InkPoint> draw(const Poly& poly, const Pose& pose, const Jitter& j, std::mt19937_64& rng, double em,
                                std::int64_t& t) {
  Path p = poly.pts;
  const auto e = extent(p);
  const double size = std::max({e.max_x - e.min_x, e.max_y - e.min_y, 0.05});

  // Smooth deformation along the stroke.
  double total = 0.0;
  std::vector<double> at{0.0};
  for (std::size_t i = 1; i < p.size(); ++i) {
    total += std::hypot(p[i].x - p[i - 1].x, p[i].y - p[i - 1].y);
    at.push_back(total);
  }
  double amp[2][2], phase[2][2];
  for (int k = 0; k < 2; ++k)
    for (int d = 0; d < 2; ++d) {
      amp[k][d] = normal(rng) * j.shape * size;
      phase[k][d] = uniform(rng) * 2.0 * kPi;
    }
  const double ox = normal(rng) * j.offset;
  const double oy = normal(rng) * j.offset;
  const double ca = std::cos(pose.angle), sa = std::sin(pose.angle);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double u = total > 0.0 ? at[i] / total : 0.0;
    double dx = 0.0, dy = 0.0;
    for (int k = 0; k < 2; ++k) {
      dx += amp[k][0] * std::sin(kPi * (k + 1) * u + phase[k][0]);
      dy += amp[k][1] * std::sin(kPi * (k + 1) * u + phase[k][1]);
    }
    const double x = (p[i].x - pose.anchor.x) * pose.scale + dx;
    const double y = (p[i].y - pose.anchor.y) * pose.scale + dy;
    p[i] = {pose.anchor.x + ca * x - sa * y + ox, pose.anchor.y + sa * x + ca * y + oy};
  }

  // Densify at a fixed pen speed.
  const double step = 0.015;
  const double noise = e.max_x > e.min_x || e.max_y > e.min_y ? j.point_noise : 0.0;  // taps stay taps
  std::vector<ink::InkPoint> out;
  auto emit = [&](double x, double y) {
    const double nx = x + normal(rng) * noise;
    const double ny = y + normal(rng) * noise;
    out.push_back({std::round(nx * em * 100.0) / 100.0, std::round(ny * em * 100.0) / 100.0, t});
    t += 8;
  };
  emit(p[0].x, p[0].y);
  for (std::size_t i = 1; i < p.size(); ++i) {
    const double len = std::hypot(p[i].x - p[i - 1].x, p[i].y - p[i - 1].y);
    const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
    for (int k = 1; k <= n; ++k) {
      const double s = static_cast<double>(k) / n;
      emit(p[i - 1].x + (p[i].x - p[i - 1].x) * s, p[i - 1].y + (p[i].y - p[i - 1].y) * s);
    }
  }
  t += 180;
  return out;
}

// ------------------------------------------------------------------ grammar

const std::vector<std::string> kLetters{"a", "b", "c", "d", "e", "h", "m", "n", "o", "p",
                                        "q", "r", "s", "u", "v", "w", "x", "y"};
const std::vector<std::string> kVariables{"a", "b", "c", "n", "x", "y", "m", "p", "q", "r", "s", "u", "v", "w", "h", "e", "d", "o"};
const std::vector<std::string> kLexicon{"sin", "cos", "exp", "min", "max"};

std::string digit(std::mt19937_64& rng, bool nonzero = false) {
  return std::to_string(nonzero ? 1 + pick(rng, 9) : pick(rng, 10));
}

ExprNode number(std::mt19937_64& rng) {
  const double r = uniform(rng);
  if (r < 0.5) return expr::num(digit(rng));
  if (r < 0.75) return expr::num(digit(rng, true) + digit(rng));
  return expr::num(digit(rng) + (chance(rng, 0.8) ? "." : ",") + digit(rng));
}

ExprNode variable(std::mt19937_64& rng) { return expr::sym(pick(rng, kVariables)); }

ExprNode small_script(std::mt19937_64& rng) {
  const double r = uniform(rng);
  if (r < 0.55) return expr::num(digit(rng));
  if (r < 0.8) return expr::sym(pick(rng, std::vector<std::string>{"n", "i", "m", "x"}));
  return expr::row({expr::sym("n"), expr::sym("+"), expr::num("1")});
}

ExprNode simple(std::mt19937_64& rng);
ExprNode atom(std::mt19937_64& rng, int depth);

/// 1-3 items joined by operators.
std::vector<ExprNode> sequence(std::mt19937_64& rng, int depth, int max_terms) {
  std::vector<ExprNode> items;
  const int terms = 1 + pick(rng, max_terms);
  bool used_equals = false;
  for (int t = 0; t < terms; ++t) {
    if (t > 0) {
      std::string op = pick(rng, std::vector<std::string>{"+", "-", "+", "-", "="});
      if (op == "=" && (used_equals || depth > 0)) op = "+";
      used_equals |= op == "=";
      items.push_back(expr::sym(op));
    }
    items.push_back(depth >= 2 ? simple(rng) : atom(rng, depth));
  }
  return items;
}

ExprNode simple(std::mt19937_64& rng) { return chance(rng, 0.5) ? variable(rng) : number(rng); }

ExprNode atom(std::mt19937_64& rng, int depth) {
  const int r = pick(rng, 100);
  if (r < 18) return variable(rng);
  if (r < 32) return number(rng);
  if (r < 44) {
    ExprNode base = variable(rng);
    const int kind = pick(rng, 3);
    if (kind == 0) return expr::sup(base, small_script(rng));
    if (kind == 1) return expr::sub(base, small_script(rng));
    return expr::subsup(base, expr::num(digit(rng)), expr::num(digit(rng)));
  }
  if (r < 50) return expr::row({number(rng), variable(rng)});
  if (r < 62) return expr::frac(expr::slot(sequence(rng, depth + 1, 2)), expr::slot(sequence(rng, depth + 1, 2)));
  if (r < 70) {
    std::optional<ExprNode> degree;
    if (chance(rng, 0.35)) degree = expr::num(std::to_string(2 + pick(rng, 8)));
    return expr::sqrt(expr::slot(sequence(rng, depth + 1, 2)), degree);
  }
  if (r < 78) {
    const int kind = pick(rng, 3);
    if (kind == 2) {
      ExprNode body = chance(rng, 0.5) ? expr::row({variable(rng), expr::sym("d"), expr::sym("x")}) : simple(rng);
      return expr::bigop(expr::BigOpKind::Integral, expr::num(digit(rng)), simple(rng), body);
    }
    const auto op = kind == 0 ? expr::BigOpKind::Sum : expr::BigOpKind::Product;
    ExprNode lower = chance(rng, 0.6) ? expr::row({expr::sym("i"), expr::sym("="), expr::num(digit(rng))}) : expr::sym("i");
    ExprNode upper = chance(rng, 0.5) ? expr::sym("n") : expr::num(digit(rng, true));
    ExprNode body = chance(rng, 0.5) ? expr::sub(expr::sym(pick(rng, std::vector<std::string>{"a", "x", "y"})), expr::sym("i"))
                                     : expr::sym("i");
    return expr::bigop(op, lower, upper, body);
  }
  if (r < 88) {
    const auto kind = chance(rng, 0.7) ? expr::BracketKind::Paren : expr::BracketKind::Square;
    std::vector<ExprNode> inner = sequence(rng, depth + 1, 2);
    if (inner.size() == 1) inner = {variable(rng), expr::sym("+"), simple(rng)};
    ExprNode g = expr::group(kind, expr::slot(std::move(inner)));
    if (chance(rng, 0.3)) return expr::sup(g, expr::num(digit(rng)));
    return g;
  }
  const std::string fn = pick(rng, kLexicon);
  if (fn == "min" || fn == "max")
    return expr::row({expr::sym(fn), expr::group(expr::BracketKind::Paren,
                                                 expr::row({variable(rng), expr::sym(","), variable(rng)}))});
  if (chance(rng, 0.5)) return expr::row({expr::sym(fn), variable(rng)});
  return expr::row({expr::sym(fn), expr::group(expr::BracketKind::Paren, expr::slot(sequence(rng, depth + 1, 2)))});
}

/// Flattens nested rows the way grouping reports them.
void flatten_into(std::vector<ExprNode>& out, const ExprNode& n);

ExprNode canonical(const ExprNode& n) {
  using namespace expr;
  if (n.is<Row>()) {
    std::vector<ExprNode> out;
    for (const auto& c : n.as<Row>().children) flatten_into(out, canonical(c));
    return row(std::move(out));
  }
  if (n.is<Fraction>()) {
    const auto& f = n.as<Fraction>();
    return frac(canonical(*f.numerator), canonical(*f.denominator));
  }
  if (n.is<Scripts>()) {
    const auto& s = n.as<Scripts>();
    Scripts out{canonical(*s.base), {}, {}};
    if (s.sup) out.sup = Child(canonical(**s.sup));
    if (s.sub) out.sub = Child(canonical(**s.sub));
    return {std::move(out)};
  }
  if (n.is<Root>()) {
    const auto& r = n.as<Root>();
    std::optional<ExprNode> d;
    if (r.degree) d = canonical(**r.degree);
    return expr::sqrt(canonical(*r.radicand), d);
  }
  if (n.is<BigOp>()) {
    const auto& b = n.as<BigOp>();
    std::optional<ExprNode> lo, up;
    if (b.lower) lo = canonical(**b.lower);
    if (b.upper) up = canonical(**b.upper);
    return bigop(b.op, lo, up, canonical(*b.body));
  }
  if (n.is<Group>()) {
    const auto& g = n.as<Group>();
    return group(g.kind, canonical(*g.child));
  }
  return n;
}

void flatten_into(std::vector<ExprNode>& out, const ExprNode& n) {
  if (n.is<expr::Row>()) {
    for (const auto& c : n.as<expr::Row>().children) out.push_back(c);
    return;
  }
  out.push_back(n);
}

/// Slots holding a single element are unwrapped, and a BigOp body runs to
/// the end of its row up to the next operator. Mirror those rules.
ExprNode normalize(const ExprNode& n) {
  using namespace expr;
  ExprNode c = canonical(n);
  std::function<ExprNode(const ExprNode&)> fix = [&](const ExprNode& node) -> ExprNode {
    if (node.is<Row>()) {
      std::vector<ExprNode> kids;
      for (const auto& k : node.as<Row>().children) kids.push_back(fix(k));
      return row(std::move(kids));
    }
    if (node.is<Fraction>()) {
      const auto& f = node.as<Fraction>();
      return frac(slot({fix(*f.numerator)}), slot({fix(*f.denominator)}));
    }
    if (node.is<Scripts>()) {
      const auto& s = node.as<Scripts>();
      Scripts out{fix(*s.base), {}, {}};
      if (s.sup) out.sup = Child(fix(**s.sup));
      if (s.sub) out.sub = Child(fix(**s.sub));
      return {std::move(out)};
    }
    if (node.is<Root>()) {
      const auto& r = node.as<Root>();
      std::optional<ExprNode> d;
      if (r.degree) d = fix(**r.degree);
      return expr::sqrt(fix(*r.radicand), d);
    }
    if (node.is<BigOp>()) {
      const auto& b = node.as<BigOp>();
      std::optional<ExprNode> lo, up;
      if (b.lower) lo = fix(**b.lower);
      if (b.upper) up = fix(**b.upper);
      return bigop(b.op, lo, up, fix(*b.body));
    }
    if (node.is<Group>()) {
      const auto& g = node.as<Group>();
      return group(g.kind, fix(*g.child));
    }
    return node;
  };
  return fix(c);
}

bool is_digit_symbol(const ExprNode& n) {
  if (n.is<expr::Number>()) return true;
  return false;
}

std::string letter_of(const ExprNode& n) {
  if (n.is<expr::Symbol>()) {
    const auto& l = n.as<expr::Symbol>().label;
    if (l.size() == 1 && std::isalpha(static_cast<unsigned char>(l[0]))) return l;
  }
  return {};
}

/// Rejects rows whose neighbours would be read differently than generated:
/// adjacent numbers fuse, letters spell a function name, 'o' between numbers
/// reads as zero, and a BigOp body would swallow what follows it.
bool row_ok(const std::vector<ExprNode>& kids) {
  for (std::size_t i = 0; i + 1 < kids.size(); ++i) {
    if (is_digit_symbol(kids[i]) && is_digit_symbol(kids[i + 1])) return false;
    if (kids[i].is<expr::BigOp>() && !is_operator(kids[i + 1])) return false;
    if (kids[i].is<expr::Number>() && kids[i + 1].is<expr::Scripts>()) return false;
    // A letter right after a number or another letter must not start a script-like base.
    if (!letter_of(kids[i]).empty() && kids[i + 1].is<expr::Number>()) return false;
    if (!letter_of(kids[i]).empty() && kids[i + 1].is<expr::Row>()) return false;
  }
  std::string letters;
  for (const auto& k : kids) {
    const auto l = letter_of(k);
    letters += l.empty() ? "#" : l;
  }
  for (const auto& w : kLexicon)
    if (letters.find(w) != std::string::npos) return false;
  for (std::size_t i = 1; i + 1 < kids.size(); ++i)
    if (letter_of(kids[i]) == "o" && kids[i - 1].is<expr::Number>() && kids[i + 1].is<expr::Number>()) return false;
  return true;
}

bool tree_ok(const ExprNode& n) {
  using namespace expr;
  if (n.is<Row>()) {
    const auto& kids = n.as<Row>().children;
    if (!row_ok(kids)) return false;
    return std::all_of(kids.begin(), kids.end(), tree_ok);
  }
  if (n.is<Fraction>()) return tree_ok(*n.as<Fraction>().numerator) && tree_ok(*n.as<Fraction>().denominator);
  if (n.is<Scripts>()) {
    const auto& s = n.as<Scripts>();
    return tree_ok(*s.base) && (!s.sup || tree_ok(**s.sup)) && (!s.sub || tree_ok(**s.sub));
  }
  if (n.is<Root>()) return tree_ok(*n.as<Root>().radicand);
  if (n.is<BigOp>()) return tree_ok(*n.as<BigOp>().body);
  if (n.is<Group>()) return tree_ok(*n.as<Group>().child);
  return true;
}

}  // namespace

const std::vector<std::string>& stroke_classes() {
  static const std::vector<std::string> classes{
      "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "a", "b", "c", "d",   "e",    "h",   "m",   "n",    "o",   "p",
      "q", "r", "s", "u", "v", "w", "x", "y", "-", "|", "(", ")", "[", "]", ".", ",", "sum", "prod", "int", "sqrt"};
  return classes;
}

ExprNode random_tree(std::mt19937_64& rng) {
  while (true) {
    ExprNode tree = normalize(expr::row(sequence(rng, 0, 3)));
    if (tree_ok(tree)) return tree;
  }
}

Expression render_expression(const ExprNode& tree, const Jitter& jitter, std::mt19937_64& rng, double em,
                             const std::string& id) {
  Layout l = layout(tree, 1.0);
  l.shift(0.5, 1.5 - l.top);
  Expression e;
  e.id = id;
  e.tree = tree;
  std::int64_t t = 0;
  int next = 1;
  for (const auto& s : l.syms) {
    TruthSymbol truth{s.label, {}};
    const Pose pose = pose_of(s, jitter, rng);
    for (const auto& st : s.strokes) {
      ink::Stroke stroke{id + "-" + std::to_string(next++), draw(st, pose, jitter, rng, em, t)};
      truth.strokes.push_back(stroke.id);
      e.strokes.push_back(std::move(stroke));
      e.stroke_labels.push_back(st.cls);
    }
    std::sort(truth.strokes.begin(), truth.strokes.end());
    e.symbols.push_back(std::move(truth));
  }
  return e;
}

ink::Stroke glyph_stroke(const std::string& cls, const Jitter& jitter, std::mt19937_64& rng, double em,
                         const std::string& id) {
  Layout l = from_strokes(cls, {{cls, glyph(cls, 1.0)}}, -0.3);
  l.shift(1.0, 1.5);
  const Pose pose = pose_of(l.syms.front(), jitter, rng);
  std::int64_t t = 0;
  return {id, draw(l.syms.front().strokes.front(), pose, jitter, rng, em, t)};
}

Corpus generate(const CorpusConfig& config) {
  if (config.train_count < 0 || config.test_count < 0) throw DataError("corpus sizes must be non-negative");
  Corpus c;
  c.config = config;
  std::mt19937_64 rng(config.seed);
  for (int i = 0; i < config.train_count + config.test_count; ++i) {
    const bool train = i < config.train_count;
    const std::string id = (train ? "train" : "test") + std::to_string(train ? i : i - config.train_count);
    auto tree = random_tree(rng);
    auto e = render_expression(tree, config.jitter, rng, config.em, id);
    (train ? c.train : c.test).push_back(std::move(e));
  }
  return c;
}

// ---------------------------------------------------------------------- json

json to_json(const Expression& e) {
  json strokes = json::array();
  for (std::size_t i = 0; i < e.strokes.size(); ++i) {
    json pts = json::array();
    for (const auto& p : e.strokes[i].points) pts.push_back({p.x, p.y, p.t});
    strokes.push_back({{"id", e.strokes[i].id}, {"label", e.stroke_labels[i]}, {"points", pts}});
  }
  json symbols = json::array();
  for (const auto& s : e.symbols) symbols.push_back({{"label", s.label}, {"strokes", s.strokes}});
  return {{"id", e.id}, {"strokes", strokes}, {"symbols", symbols}, {"tree", expr::to_json(e.tree)}};
}

Expression expression_from_json(const json& j, const std::string& path) {
  try {
    Expression e;
    e.id = j.at("id").get<std::string>();
    json ink_doc{{"version", 1}, {"strokes", json::array()}};
    for (const auto& s : j.at("strokes")) {
      ink_doc["strokes"].push_back({{"id", s.at("id")}, {"points", s.at("points")}});
      e.stroke_labels.push_back(s.at("label").get<std::string>());
    }
    e.strokes = ink::parse_ink(ink_doc.dump()).strokes();
    for (const auto& s : j.at("symbols"))
      e.symbols.push_back({s.at("label").get<std::string>(), s.at("strokes").get<std::vector<std::string>>()});
    e.tree = expr::from_json(j.at("tree"));
    return e;
  } catch (const json::exception& ex) {
    throw DataError(path + ": " + ex.what());
  } catch (const Error& ex) {
    throw DataError(path + ": " + ex.what());
  }
}

json to_json(const Corpus& c) {
  json train = json::array(), test = json::array();
  for (const auto& e : c.train) train.push_back(to_json(e));
  for (const auto& e : c.test) test.push_back(to_json(e));
  const auto& jt = c.config.jitter;
  return {{"version", 1},
          {"seed", c.config.seed},
          {"em", c.config.em},
          {"jitter",
           {{"shape", jt.shape},
            {"rotation_deg", jt.rotation_deg},
            {"scale_min", jt.scale_min},
            {"scale_max", jt.scale_max},
            {"container_scale", jt.container_scale},
            {"container_rotation_deg", jt.container_rotation_deg},
            {"point_noise", jt.point_noise},
            {"offset", jt.offset}}},
          {"classes", stroke_classes()},
          {"train", train},
          {"test", test}};
}

Corpus corpus_from_json(const json& j) {
  if (!j.is_object() || !j.contains("version") || j["version"] != 1) throw DataError("/version: expected corpus version 1");
  Corpus c;
  try {
    c.config.seed = j.at("seed").get<std::uint64_t>();
    c.config.em = j.at("em").get<double>();
    const auto& jt = j.at("jitter");
    c.config.jitter = {jt.at("shape"),           jt.at("rotation_deg"),           jt.at("scale_min"),
                       jt.at("scale_max"),       jt.at("container_scale"),        jt.at("container_rotation_deg"),
                       jt.at("point_noise"),     jt.at("offset")};
  } catch (const json::exception& ex) {
    throw DataError(std::string("corpus header: ") + ex.what());
  }
  for (const char* part : {"train", "test"}) {
    if (!j.contains(part) || !j[part].is_array()) throw DataError(std::string("/") + part + ": expected an array");
    auto& out = std::string(part) == "train" ? c.train : c.test;
    for (std::size_t i = 0; i < j[part].size(); ++i)
      out.push_back(expression_from_json(j[part][i], std::string("/") + part + "/" + std::to_string(i)));
  }
  c.config.train_count = static_cast<int>(c.train.size());
  c.config.test_count = static_cast<int>(c.test.size());
  return c;
}

}  // namespace mathink::corpus
