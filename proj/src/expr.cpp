#include "mathink/expr.hpp"

#include "mathink/error.hpp"

namespace mathink::expr {

using nlohmann::json;

ExprNode sym(std::string label) { return {Symbol{std::move(label)}}; }
ExprNode num(std::string text) { return {Number{std::move(text)}}; }
ExprNode row(std::vector<ExprNode> children) { return {Row{std::move(children)}}; }
ExprNode frac(ExprNode numerator, ExprNode denominator) {
  return {Fraction{std::move(numerator), std::move(denominator)}};
}
ExprNode sup(ExprNode base, ExprNode script) { return {Scripts{std::move(base), Child(std::move(script)), {}}}; }
ExprNode sub(ExprNode base, ExprNode script) { return {Scripts{std::move(base), {}, Child(std::move(script))}}; }
ExprNode subsup(ExprNode base, ExprNode subscript, ExprNode superscript) {
  return {Scripts{std::move(base), Child(std::move(superscript)), Child(std::move(subscript))}};
}
ExprNode sqrt(ExprNode radicand, std::optional<ExprNode> degree) {
  Root r{{}, std::move(radicand)};
  if (degree) r.degree = Child(std::move(*degree));
  return {std::move(r)};
}
ExprNode bigop(BigOpKind op, std::optional<ExprNode> lower, std::optional<ExprNode> upper, ExprNode body) {
  BigOp b{op, {}, {}, std::move(body)};
  if (lower) b.lower = Child(std::move(*lower));
  if (upper) b.upper = Child(std::move(*upper));
  return {std::move(b)};
}
ExprNode group(BracketKind kind, ExprNode child) { return {Group{kind, std::move(child)}}; }

ExprNode slot(std::vector<ExprNode> children) {
  if (children.size() == 1) return std::move(children.front());
  return row(std::move(children));
}

std::string to_string(BigOpKind op) {
  switch (op) {
    case BigOpKind::Sum: return "sum";
    case BigOpKind::Product: return "prod";
    case BigOpKind::Integral: return "int";
  }
  return "sum";
}

std::string to_string(BracketKind kind) { return kind == BracketKind::Paren ? "paren" : "square"; }

BigOpKind bigop_from_string(const std::string& s) {
  if (s == "sum") return BigOpKind::Sum;
  if (s == "prod") return BigOpKind::Product;
  if (s == "int") return BigOpKind::Integral;
  throw FormatError("unknown big operator '" + s + "'");
}

BracketKind bracket_from_string(const std::string& s) {
  if (s == "paren") return BracketKind::Paren;
  if (s == "square") return BracketKind::Square;
  throw FormatError("unknown bracket kind '" + s + "'");
}

void validate(const ExprNode& node) {
  std::visit(
      [](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Symbol>) {
          if (n.label.empty()) throw StructureError("symbol without a label");
        } else if constexpr (std::is_same_v<T, Number>) {
          if (n.text.empty()) throw StructureError("empty number");
        } else if constexpr (std::is_same_v<T, Row>) {
          for (const auto& c : n.children) validate(c);
        } else if constexpr (std::is_same_v<T, Fraction>) {
          validate(*n.numerator);
          validate(*n.denominator);
        } else if constexpr (std::is_same_v<T, Scripts>) {
          if (!n.sup && !n.sub) throw StructureError("scripts node without any script");
          validate(*n.base);
          if (n.sup) validate(**n.sup);
          if (n.sub) validate(**n.sub);
        } else if constexpr (std::is_same_v<T, Root>) {
          if (n.degree) validate(**n.degree);
          validate(*n.radicand);
        } else if constexpr (std::is_same_v<T, BigOp>) {
          if (n.lower) validate(**n.lower);
          if (n.upper) validate(**n.upper);
          validate(*n.body);
        } else {
          validate(*n.child);
        }
      },
      node.node);
}

json to_json(const ExprNode& node) {
  return std::visit(
      [](const auto& n) -> json {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Symbol>) {
          return {{"type", "symbol"}, {"label", n.label}};
        } else if constexpr (std::is_same_v<T, Number>) {
          return {{"type", "number"}, {"text", n.text}};
        } else if constexpr (std::is_same_v<T, Row>) {
          json children = json::array();
          for (const auto& c : n.children) children.push_back(to_json(c));
          return {{"type", "row"}, {"children", std::move(children)}};
        } else if constexpr (std::is_same_v<T, Fraction>) {
          return {{"type", "fraction"}, {"numerator", to_json(*n.numerator)}, {"denominator", to_json(*n.denominator)}};
        } else if constexpr (std::is_same_v<T, Scripts>) {
          json j = {{"type", "scripts"}, {"base", to_json(*n.base)}};
          if (n.sup) j["sup"] = to_json(**n.sup);
          if (n.sub) j["sub"] = to_json(**n.sub);
          return j;
        } else if constexpr (std::is_same_v<T, Root>) {
          json j = {{"type", "root"}, {"radicand", to_json(*n.radicand)}};
          if (n.degree) j["degree"] = to_json(**n.degree);
          return j;
        } else if constexpr (std::is_same_v<T, BigOp>) {
          json j = {{"type", "bigop"}, {"op", to_string(n.op)}, {"body", to_json(*n.body)}};
          if (n.lower) j["lower"] = to_json(**n.lower);
          if (n.upper) j["upper"] = to_json(**n.upper);
          return j;
        } else {
          return {{"type", "group"}, {"kind", to_string(n.kind)}, {"child", to_json(*n.child)}};
        }
      },
      node.node);
}

namespace {

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("expression node lacks '") + key + "'");
  return *it;
}

std::optional<ExprNode> optional_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return from_json(*it);
}

}  // namespace

ExprNode from_json(const json& j) {
  if (!j.is_object()) throw FormatError("expression node must be an object");
  const auto type = field(j, "type").get<std::string>();
  if (type == "symbol") return sym(field(j, "label").get<std::string>());
  if (type == "number") return num(field(j, "text").get<std::string>());
  if (type == "row") {
    std::vector<ExprNode> children;
    for (const auto& c : field(j, "children")) children.push_back(from_json(c));
    return row(std::move(children));
  }
  if (type == "fraction") return frac(from_json(field(j, "numerator")), from_json(field(j, "denominator")));
  if (type == "scripts") {
    Scripts s{from_json(field(j, "base")), {}, {}};
    if (auto v = optional_field(j, "sup")) s.sup = Child(std::move(*v));
    if (auto v = optional_field(j, "sub")) s.sub = Child(std::move(*v));
    return {std::move(s)};
  }
  if (type == "root") return sqrt(from_json(field(j, "radicand")), optional_field(j, "degree"));
  if (type == "bigop")
    return bigop(bigop_from_string(field(j, "op").get<std::string>()), optional_field(j, "lower"),
                 optional_field(j, "upper"), from_json(field(j, "body")));
  if (type == "group")
    return group(bracket_from_string(field(j, "kind").get<std::string>()), from_json(field(j, "child")));
  throw FormatError("unknown expression node type '" + type + "'");
}

std::string debug_string(const ExprNode& node) {
  return std::visit(
      [](const auto& n) -> std::string {
        using T = std::decay_t<decltype(n)>;
        auto opt = [](const OptionalChild& c) { return c ? debug_string(**c) : std::string("_"); };
        if constexpr (std::is_same_v<T, Symbol>) {
          return n.label;
        } else if constexpr (std::is_same_v<T, Number>) {
          return "#" + n.text;
        } else if constexpr (std::is_same_v<T, Row>) {
          std::string s = "row(";
          for (std::size_t i = 0; i < n.children.size(); ++i) s += (i ? "," : "") + debug_string(n.children[i]);
          return s + ")";
        } else if constexpr (std::is_same_v<T, Fraction>) {
          return "frac(" + debug_string(*n.numerator) + "," + debug_string(*n.denominator) + ")";
        } else if constexpr (std::is_same_v<T, Scripts>) {
          return "scripts(" + debug_string(*n.base) + ",^" + opt(n.sup) + ",_" + opt(n.sub) + ")";
        } else if constexpr (std::is_same_v<T, Root>) {
          return "root(" + opt(n.degree) + "," + debug_string(*n.radicand) + ")";
        } else if constexpr (std::is_same_v<T, BigOp>) {
          return to_string(n.op) + "(" + opt(n.lower) + "," + opt(n.upper) + "," + debug_string(*n.body) + ")";
        } else {
          return to_string(n.kind) + "(" + debug_string(*n.child) + ")";
        }
      },
      node.node);
}

}  // namespace mathink::expr
