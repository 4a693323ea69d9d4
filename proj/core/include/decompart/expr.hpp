#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>

#include "decompart/common.hpp"

namespace decompart {

/// Error carrying the byte offset of the offending token.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset(offset) {}
  std::size_t offset;
};

class UnknownIdentifier : public Error {
 public:
  UnknownIdentifier(const std::string& name, std::size_t offset)
      : Error("unknown identifier '" + name + "' (at byte " + std::to_string(offset) + ")"),
        name(name),
        offset(offset) {}
  std::string name;
  std::size_t offset;
};

enum class UnaryOp { Neg, Sin, Cos, Exp, Sqrt };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct Constant {
  double value;
};
struct StateRef {
  int index;  // 1-based compartment index
};
struct TimeVar {};
struct Unary {
  UnaryOp op;
  ExprPtr arg;
};
struct Binary {
  BinaryOp op;
  ExprPtr lhs, rhs;
};

struct ExprNode {
  std::variant<Constant, StateRef, TimeVar, Unary, Binary> v;
};

/// How an expression depends on the state, relative to a role in the model.
/// LinearInDonor(c) means the expression is exactly c * x_donor; the linear
/// routes use this to build the constant intensity matrix.
struct LinearityTag {
  enum class Kind { LinearInDonor, ConstantInput, TimeOnlyInput, Nonlinear };
  Kind kind = Kind::Nonlinear;
  double coeff = 0.0;  // set for LinearInDonor and ConstantInput

  static LinearityTag linear_in_donor(double c) { return {Kind::LinearInDonor, c}; }
  static LinearityTag constant_input(double c) { return {Kind::ConstantInput, c}; }
  static LinearityTag time_only_input() { return {Kind::TimeOnlyInput, 0.0}; }
  static LinearityTag nonlinear() { return {Kind::Nonlinear, 0.0}; }
};

/// Role an expression plays inside a model, used by classify_linearity.
struct ExprRole {
  enum class Kind { Flow, Input, Output };
  Kind kind;
  int donor = 0;  // donor compartment j for Flow(i,j) and Output(j)

  static ExprRole flow(int /*i*/, int j) { return {Kind::Flow, j}; }
  static ExprRole input() { return {Kind::Input, 0}; }
  static ExprRole output(int j) { return {Kind::Output, j}; }
};

/// Immutable scalar expression in t and x1..xN.
///
/// Evaluation is a pure function of (t, x); values are cheap to copy and
/// safe to share across threads.
class Expr {
 public:
  Expr() : root_(zero_node()) {}
  explicit Expr(ExprPtr root) : root_(std::move(root)) {}

  /// Parses the flow-expression grammar. Throws SyntaxError or
  /// UnknownIdentifier with the byte offset of the problem.
  static Expr parse(std::string_view source);

  static Expr constant(double c);
  static Expr zero() { return Expr(); }

  double eval(double t, std::span<const double> x) const;

  /// Unparses with minimal parentheses; parse(print()) is structurally
  /// identical to the original.
  std::string print() const;

  LinearityTag classify_linearity(const ExprRole& role) const;

  /// Largest state index referenced (0 when the expression is state-free).
  int max_state_index() const;

  bool is_zero_constant() const;

  bool structurally_equal(const Expr& other) const;

  const ExprPtr& root() const { return root_; }

 private:
  static const ExprPtr& zero_node();
  ExprPtr root_;
};

}  // namespace decompart
