#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace mathink::expr {

/// Heap-allocated value with deep copy and value equality; lets the tree
/// types refer to themselves.
template <class T>
class Box {
 public:
  Box(T value) : ptr_(std::make_unique<T>(std::move(value))) {}  // NOLINT(google-explicit-constructor)
  Box(const Box& other) : ptr_(std::make_unique<T>(*other.ptr_)) {}
  Box(Box&&) noexcept = default;
  Box& operator=(const Box& other) {
    if (this != &other) ptr_ = std::make_unique<T>(*other.ptr_);
    return *this;
  }
  Box& operator=(Box&&) noexcept = default;
  ~Box() = default;

  const T& operator*() const { return *ptr_; }
  T& operator*() { return *ptr_; }
  const T* operator->() const { return ptr_.get(); }
  T* operator->() { return ptr_.get(); }

  friend bool operator==(const Box& a, const Box& b) { return *a.ptr_ == *b.ptr_; }

 private:
  std::unique_ptr<T> ptr_;
};

struct ExprNode;
using Child = Box<ExprNode>;
using OptionalChild = std::optional<Box<ExprNode>>;

enum class BigOpKind { Sum, Product, Integral };
enum class BracketKind { Paren, Square };

struct Symbol {
  std::string label;
  bool operator==(const Symbol&) const = default;
};
struct Number {
  std::string text;
  bool operator==(const Number&) const = default;
};
struct Row {
  std::vector<ExprNode> children;
  bool operator==(const Row&) const;
};
struct Fraction {
  Child numerator;
  Child denominator;
  bool operator==(const Fraction&) const = default;
};
struct Scripts {
  Child base;
  OptionalChild sup;
  OptionalChild sub;
  bool operator==(const Scripts&) const = default;
};
struct Root {
  OptionalChild degree;
  Child radicand;
  bool operator==(const Root&) const = default;
};
struct BigOp {
  BigOpKind op = BigOpKind::Sum;
  OptionalChild lower;
  OptionalChild upper;
  Child body;
  bool operator==(const BigOp&) const = default;
};
struct Group {
  BracketKind kind = BracketKind::Paren;
  Child child;
  bool operator==(const Group&) const = default;
};

struct ExprNode {
  std::variant<Symbol, Number, Row, Fraction, Scripts, Root, BigOp, Group> node;

  template <class T>
  bool is() const { return std::holds_alternative<T>(node); }
  template <class T>
  const T& as() const { return std::get<T>(node); }

  bool operator==(const ExprNode&) const = default;
};

inline bool Row::operator==(const Row& other) const { return children == other.children; }

// Builders used heavily by tests and the corpus generator.
ExprNode sym(std::string label);
ExprNode num(std::string text);
ExprNode row(std::vector<ExprNode> children = {});
ExprNode frac(ExprNode numerator, ExprNode denominator);
ExprNode sup(ExprNode base, ExprNode script);
ExprNode sub(ExprNode base, ExprNode script);
ExprNode subsup(ExprNode base, ExprNode subscript, ExprNode superscript);
ExprNode sqrt(ExprNode radicand, std::optional<ExprNode> degree = std::nullopt);
ExprNode bigop(BigOpKind op, std::optional<ExprNode> lower, std::optional<ExprNode> upper, ExprNode body);
ExprNode group(BracketKind kind, ExprNode child);

/// A single element stays as is; anything else becomes a Row.
ExprNode slot(std::vector<ExprNode> children);

/// Throws StructureError when a node breaks the tree invariants.
void validate(const ExprNode& node);

std::string to_string(BigOpKind op);
std::string to_string(BracketKind kind);
BigOpKind bigop_from_string(const std::string& s);
BracketKind bracket_from_string(const std::string& s);

nlohmann::json to_json(const ExprNode& node);
ExprNode from_json(const nlohmann::json& j);

/// Compact one-line form for test failure messages, e.g. row(frac(a,b),+,x).
std::string debug_string(const ExprNode& node);

}  // namespace mathink::expr
