#pragma once

#include <string>

#include "mathink/expr.hpp"

namespace mathink::render {

enum class Target { Latex, MathML };

enum class Spacing {
  Minimal,  // only spaces LaTeX needs to separate tokens
  Relaxed,  // also spaces around binary operators and relations
};

struct RenderOptions {
  Target target = Target::Latex;
  Spacing spacing = Spacing::Minimal;
  bool auto_size_brackets = false;  // \left( ... \right)
};

std::string render(const expr::ExprNode& node, const RenderOptions& options = {});

std::string to_latex(const expr::ExprNode& node, const RenderOptions& options = {});
std::string to_mathml(const expr::ExprNode& node, const RenderOptions& options = {});

Target target_from_string(const std::string& s);

}  // namespace mathink::render
