#include "mathink/render.hpp"

#include <algorithm>
#include <cctype>

#include "mathink/error.hpp"

namespace mathink::render {

using namespace expr;

namespace {

bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

bool is_function_name(const std::string& label) {
  return label == "sin" || label == "cos" || label == "exp" || label == "min" || label == "max";
}

bool is_operator(const std::string& label) {
  return label == "+" || label == "-" || label == "=" || label == "<" || label == ">";
}

bool ends_with_control_word(const std::string& s) {
  std::size_t i = s.size();
  while (i > 0 && is_letter(s[i - 1])) --i;
  return i < s.size() && i > 0 && s[i - 1] == '\\';
}

// ---------------------------------------------------------------- LaTeX

class Latex {
 public:
  explicit Latex(const RenderOptions& options) : options_(options) {}

  std::string operator()(const ExprNode& node) const {
    return std::visit([this](const auto& n) { return emit(n); }, node.node);
  }

 private:
  const RenderOptions& options_;

  static std::string symbol(const std::string& label) {
    if (is_function_name(label)) return "\\" + label;
    if (label == "sum") return "\\sum";
    if (label == "prod") return "\\prod";
    if (label == "int") return "\\int";
    if (label == "sqrt") return "\\surd";
    if (label == "unknown") return "?";
    if (label.size() > 1 && std::all_of(label.begin(), label.end(), is_letter)) return "\\mathrm{" + label + "}";
    std::string out;
    for (char c : label) {
      switch (c) {
        case '{': case '}': case '%': case '#': case '&': case '_': case '$': out += '\\'; out += c; break;
        case '\\': out += "\\backslash "; break;
        case '^': out += "\\hat{}"; break;
        case '~': out += "\\sim "; break;
        default: out += c;
      }
    }
    return out;
  }

  std::string emit(const Symbol& s) const { return symbol(s.label); }
  std::string emit(const Number& n) const { return n.text; }

  std::string emit(const Row& r) const {
    std::string out;
    for (const auto& child : r.children) {
      const bool op = child.is<Symbol>() && is_operator(child.as<Symbol>().label);
      std::string piece = (*this)(child);
      if (options_.spacing == Spacing::Relaxed && op && !out.empty()) {
        out += " " + piece + " ";
        continue;
      }
      if (!out.empty() && !piece.empty() && ends_with_control_word(out) &&
          (is_letter(piece.front()) || is_digit(piece.front())))
        out += ' ';
      out += piece;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
  }

  std::string emit(const Fraction& f) const { return "\\frac{" + (*this)(*f.numerator) + "}{" + (*this)(*f.denominator) + "}"; }

  std::string emit(const Scripts& s) const {
    const auto& base = *s.base;
    std::string out = (*this)(base);
    if (!(base.is<Symbol>() || base.is<Number>() || base.is<Group>())) out = "{" + out + "}";
    if (s.sub) out += "_{" + (*this)(**s.sub) + "}";
    if (s.sup) out += "^{" + (*this)(**s.sup) + "}";
    return out;
  }

  std::string emit(const Root& r) const {
    std::string out = "\\sqrt";
    if (r.degree) out += "[" + (*this)(**r.degree) + "]";
    return out + "{" + (*this)(*r.radicand) + "}";
  }

  std::string emit(const BigOp& b) const {
    std::string out = b.op == BigOpKind::Sum ? "\\sum" : b.op == BigOpKind::Product ? "\\prod" : "\\int";
    if (b.lower) out += "_{" + (*this)(**b.lower) + "}";
    if (b.upper) out += "^{" + (*this)(**b.upper) + "}";
    return out + " " + (*this)(*b.body);
  }

  std::string emit(const Group& g) const {
    const bool paren = g.kind == BracketKind::Paren;
    std::string open = paren ? "(" : "[";
    std::string close = paren ? ")" : "]";
    if (options_.auto_size_brackets) {
      open = "\\left" + open;
      close = "\\right" + close;
    }
    return open + (*this)(*g.child) + close;
  }
};

// ---------------------------------------------------------------- MathML

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

class MathML {
 public:
  std::string operator()(const ExprNode& node) const {
    return std::visit([this](const auto& n) { return emit(n); }, node.node);
  }

 private:
  static std::string wrap(const std::string& tag, const std::string& body) { return "<" + tag + ">" + body + "</" + tag + ">"; }

  // Script and fraction arguments must be a single element.
  std::string arg(const ExprNode& node) const {
    const std::string inner = (*this)(node);
    return node.is<Row>() ? inner : wrap("mrow", inner);
  }

  std::string emit(const Symbol& s) const {
    const auto& l = s.label;
    if (l == "unknown") return wrap("merror", wrap("mtext", "?"));
    if (is_function_name(l)) return wrap("mi", l);
    if (l == "sum") return wrap("mo", "&#x2211;");
    if (l == "prod") return wrap("mo", "&#x220F;");
    if (l == "int") return wrap("mo", "&#x222B;");
    if (l == "sqrt") return wrap("mo", "&#x221A;");
    if (l == "-") return wrap("mo", "&#x2212;");
    if (l.size() == 1 && is_digit(l[0])) return wrap("mn", l);
    if (!l.empty() && std::all_of(l.begin(), l.end(), is_letter)) return wrap("mi", l);
    return wrap("mo", escape(l));
  }
  std::string emit(const Number& n) const { return wrap("mn", escape(n.text)); }
  std::string emit(const Row& r) const {
    std::string out;
    for (const auto& c : r.children) out += (*this)(c);
    return wrap("mrow", out);
  }
  std::string emit(const Fraction& f) const { return wrap("mfrac", arg(*f.numerator) + arg(*f.denominator)); }
  std::string emit(const Scripts& s) const {
    const std::string base = arg(*s.base);
    if (s.sub && s.sup) return wrap("msubsup", base + arg(**s.sub) + arg(**s.sup));
    if (s.sub) return wrap("msub", base + arg(**s.sub));
    return wrap("msup", base + arg(**s.sup));
  }
  std::string emit(const Root& r) const {
    if (r.degree) return wrap("mroot", arg(*r.radicand) + arg(**r.degree));
    return wrap("msqrt", (*this)(*r.radicand));
  }
  std::string emit(const BigOp& b) const {
    const std::string glyph = b.op == BigOpKind::Sum ? "&#x2211;" : b.op == BigOpKind::Product ? "&#x220F;" : "&#x222B;";
    const std::string mo = wrap("mo", glyph);
    const bool integral = b.op == BigOpKind::Integral;
    std::string op;
    if (b.lower && b.upper)
      op = wrap(integral ? "msubsup" : "munderover", mo + arg(**b.lower) + arg(**b.upper));
    else if (b.lower)
      op = wrap(integral ? "msub" : "munder", mo + arg(**b.lower));
    else if (b.upper)
      op = wrap(integral ? "msup" : "mover", mo + arg(**b.upper));
    else
      op = mo;
    return wrap("mrow", op + (*this)(*b.body));
  }
  std::string emit(const Group& g) const {
    const bool paren = g.kind == BracketKind::Paren;
    return wrap("mrow", wrap("mo", paren ? "(" : "[") + (*this)(*g.child) + wrap("mo", paren ? ")" : "]"));
  }
};

}  // namespace

std::string to_latex(const ExprNode& node, const RenderOptions& options) { return Latex(options)(node); }

std::string to_mathml(const ExprNode& node, const RenderOptions&) {
  return "<math xmlns=\"http://www.w3.org/1998/Math/MathML\">" + MathML()(node) + "</math>";
}

std::string render(const ExprNode& node, const RenderOptions& options) {
  return options.target == Target::Latex ? to_latex(node, options) : to_mathml(node, options);
}

Target target_from_string(const std::string& s) {
  if (s == "latex") return Target::Latex;
  if (s == "mathml") return Target::MathML;
  throw DataError("unknown render target '" + s + "'");
}

}  // namespace mathink::render
