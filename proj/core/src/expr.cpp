#include "decompart/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>
#include <vector>

namespace decompart {

namespace {

ExprPtr make(Constant c) { return std::make_shared<ExprNode>(ExprNode{c}); }
ExprPtr make(StateRef s) { return std::make_shared<ExprNode>(ExprNode{s}); }
ExprPtr make(TimeVar tv) { return std::make_shared<ExprNode>(ExprNode{tv}); }
ExprPtr make(Unary u) { return std::make_shared<ExprNode>(ExprNode{std::move(u)}); }
ExprPtr make(Binary b) { return std::make_shared<ExprNode>(ExprNode{std::move(b)}); }

// Recursive-descent parser over the grammar
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := '-' factor | power
//   power  := atom ('^' factor)?
//   atom   := NUMBER | 't' | 'x' DIGIT+ | IDENT '(' expr ')' | '(' expr ')'
// Exponentiation is right-associative and binds tighter than unary minus.
class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  ExprPtr run() {
    ExprPtr e = parse_expr();
    skip_ws();
    if (pos_ != src_.size()) throw SyntaxError("trailing input", pos_);
    return e;
  }

 private:
  std::string_view src_;
  std::size_t pos_ = 0;

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < src_.size() ? src_[pos_] : '\0';
  }

  ExprPtr parse_expr() {
    ExprPtr lhs = parse_term();
    for (;;) {
      if (eat('+')) {
        lhs = make(Binary{BinaryOp::Add, lhs, parse_term()});
      } else if (eat('-')) {
        lhs = make(Binary{BinaryOp::Sub, lhs, parse_term()});
      } else {
        return lhs;
      }
    }
  }

  ExprPtr parse_term() {
    ExprPtr lhs = parse_factor();
    for (;;) {
      if (eat('*')) {
        lhs = make(Binary{BinaryOp::Mul, lhs, parse_factor()});
      } else if (eat('/')) {
        lhs = make(Binary{BinaryOp::Div, lhs, parse_factor()});
      } else {
        return lhs;
      }
    }
  }

  ExprPtr parse_factor() {
    if (eat('-')) return make(Unary{UnaryOp::Neg, parse_factor()});
    return parse_power();
  }

  ExprPtr parse_power() {
    ExprPtr base = parse_atom();
    if (eat('^')) {
      // exponent may itself carry a unary minus
      return make(Binary{BinaryOp::Pow, base, parse_factor()});
    }
    return base;
  }

  ExprPtr parse_atom() {
    skip_ws();
    if (pos_ >= src_.size()) throw SyntaxError("unexpected end of input", pos_);
    char c = src_[pos_];

    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();

    if (c == '(') {
      ++pos_;
      ExprPtr inner = parse_expr();
      if (!eat(')')) throw SyntaxError("expected ')'", pos_);
      return inner;
    }

    if (std::isalpha(static_cast<unsigned char>(c))) return parse_ident();

    throw SyntaxError(std::string("unexpected character '") + c + "'", pos_);
  }

  ExprPtr parse_number() {
    std::size_t start = pos_;
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t mark = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      } else {
        pos_ = mark;  // 'e' belongs to something else; not part of the literal
      }
    }
    double value = 0.0;
    auto res = std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (res.ec != std::errc() || res.ptr != src_.data() + pos_)
      throw SyntaxError("malformed number literal", start);
    return make(Constant{value});
  }

  ExprPtr parse_ident() {
    std::size_t start = pos_;
    while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    std::string_view name = src_.substr(start, pos_ - start);

    if (name == "t") return make(TimeVar{});

    if (name.size() >= 2 && name[0] == 'x') {
      int index = 0;
      auto res = std::from_chars(name.data() + 1, name.data() + name.size(), index);
      if (res.ec == std::errc() && res.ptr == name.data() + name.size()) {
        if (index < 1) throw SyntaxError("state index must be >= 1", start);
        return make(StateRef{index});
      }
    }

    UnaryOp op;
    if (name == "sin") {
      op = UnaryOp::Sin;
    } else if (name == "cos") {
      op = UnaryOp::Cos;
    } else if (name == "exp") {
      op = UnaryOp::Exp;
    } else if (name == "sqrt") {
      op = UnaryOp::Sqrt;
    } else {
      throw UnknownIdentifier(std::string(name), start);
    }

    if (!eat('(')) throw SyntaxError("expected '(' after function name", pos_);
    ExprPtr arg = parse_expr();
    if (!eat(')')) throw SyntaxError("expected ')'", pos_);
    return make(Unary{op, arg});
  }
};

double eval_node(const ExprNode& node, double t, std::span<const double> x);

double eval_unary(const Unary& u, double t, std::span<const double> x) {
  double a = eval_node(*u.arg, t, x);
  switch (u.op) {
    case UnaryOp::Neg:
      return -a;
    case UnaryOp::Sin:
      return std::sin(a);
    case UnaryOp::Cos:
      return std::cos(a);
    case UnaryOp::Exp:
      return std::exp(a);
    case UnaryOp::Sqrt: {
      double r = std::sqrt(a);
      if (std::isnan(r)) throw EvalError("sqrt of negative value");
      return r;
    }
  }
  return 0.0;  // unreachable
}

double eval_node(const ExprNode& node, double t, std::span<const double> x) {
  return std::visit(
      [&](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Constant>) {
          return n.value;
        } else if constexpr (std::is_same_v<T, StateRef>) {
          if (n.index < 1 || static_cast<std::size_t>(n.index) > x.size())
            throw EvalError("state reference x" + std::to_string(n.index) +
                            " out of range for state of size " + std::to_string(x.size()));
          return x[n.index - 1];
        } else if constexpr (std::is_same_v<T, TimeVar>) {
          return t;
        } else if constexpr (std::is_same_v<T, Unary>) {
          return eval_unary(n, t, x);
        } else {
          double a = eval_node(*n.lhs, t, x);
          double b = eval_node(*n.rhs, t, x);
          switch (n.op) {
            case BinaryOp::Add:
              return a + b;
            case BinaryOp::Sub:
              return a - b;
            case BinaryOp::Mul:
              return a * b;
            case BinaryOp::Div:
              if (b == 0.0) throw EvalError("division by zero");
              return a / b;
            case BinaryOp::Pow: {
              double r = std::pow(a, b);
              if (std::isnan(r)) throw EvalError("pow produced NaN");
              return r;
            }
          }
          return 0.0;  // unreachable
        }
      },
      node.v);
}

int precedence(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add:
    case BinaryOp::Sub:
      return 1;
    case BinaryOp::Mul:
    case BinaryOp::Div:
      return 2;
    case BinaryOp::Pow:
      return 4;
  }
  return 0;
}

void print_node(const ExprNode& node, std::ostream& os, int parent_prec, bool rhs_of_parent);

void print_binary(const Binary& b, std::ostream& os, int parent_prec, bool rhs_of_parent) {
  int prec = precedence(b.op);
  // '-' and '/' are left-associative, so a right operand at equal precedence
  // needs parentheses; '^' is right-associative and needs them on the left.
  bool need_paren = prec < parent_prec || (prec == parent_prec && rhs_of_parent);
  if (b.op == BinaryOp::Pow && parent_prec == precedence(BinaryOp::Pow) && !rhs_of_parent)
    need_paren = true;
  if (need_paren) os << '(';
  const char* sym = "";
  switch (b.op) {
    case BinaryOp::Add:
      sym = " + ";
      break;
    case BinaryOp::Sub:
      sym = " - ";
      break;
    case BinaryOp::Mul:
      sym = "*";
      break;
    case BinaryOp::Div:
      sym = "/";
      break;
    case BinaryOp::Pow:
      sym = "^";
      break;
  }
  bool right_assoc = b.op == BinaryOp::Pow;
  print_node(*b.lhs, os, prec, right_assoc);
  os << sym;
  print_node(*b.rhs, os, prec, !right_assoc);
  if (need_paren) os << ')';
}

void print_node(const ExprNode& node, std::ostream& os, int parent_prec, bool rhs_of_parent) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Constant>) {
          std::ostringstream tmp;
          tmp.precision(17);
          tmp << n.value;
          std::string s = tmp.str();
          if (!s.empty() && s[0] == '-') {
            os << '(' << s << ')';
          } else {
            os << s;
          }
        } else if constexpr (std::is_same_v<T, StateRef>) {
          os << 'x' << n.index;
        } else if constexpr (std::is_same_v<T, TimeVar>) {
          os << 't';
        } else if constexpr (std::is_same_v<T, Unary>) {
          switch (n.op) {
            case UnaryOp::Neg: {
              bool need_paren = parent_prec >= 2;  // inside a product or tighter
              if (need_paren) os << '(';
              os << '-';
              print_node(*n.arg, os, 3, true);
              if (need_paren) os << ')';
              break;
            }
            case UnaryOp::Sin:
              os << "sin(";
              print_node(*n.arg, os, 0, false);
              os << ')';
              break;
            case UnaryOp::Cos:
              os << "cos(";
              print_node(*n.arg, os, 0, false);
              os << ')';
              break;
            case UnaryOp::Exp:
              os << "exp(";
              print_node(*n.arg, os, 0, false);
              os << ')';
              break;
            case UnaryOp::Sqrt:
              os << "sqrt(";
              print_node(*n.arg, os, 0, false);
              os << ')';
              break;
          }
        } else {
          print_binary(n, os, parent_prec, rhs_of_parent);
        }
      },
      node.v);
}

int max_state_index_node(const ExprNode& node) {
  return std::visit(
      [&](const auto& n) -> int {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, StateRef>) {
          return n.index;
        } else if constexpr (std::is_same_v<T, Unary>) {
          return max_state_index_node(*n.arg);
        } else if constexpr (std::is_same_v<T, Binary>) {
          return std::max(max_state_index_node(*n.lhs), max_state_index_node(*n.rhs));
        } else {
          return 0;
        }
      },
      node.v);
}

bool depends_on_time(const ExprNode& node) {
  return std::visit(
      [&](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, TimeVar>) {
          return true;
        } else if constexpr (std::is_same_v<T, Unary>) {
          return depends_on_time(*n.arg);
        } else if constexpr (std::is_same_v<T, Binary>) {
          return depends_on_time(*n.lhs) || depends_on_time(*n.rhs);
        } else {
          return false;
        }
      },
      node.v);
}

// Constant folding; returns a node that is a Constant wherever the subtree is
// state- and time-free.
ExprPtr fold(const ExprPtr& node) {
  return std::visit(
      [&](const auto& n) -> ExprPtr {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Unary>) {
          ExprPtr arg = fold(n.arg);
          if (const auto* c = std::get_if<Constant>(&arg->v)) {
            double x[1] = {0.0};
            return make(Constant{eval_unary(Unary{n.op, arg}, 0.0, x)});
            (void)c;
          }
          return make(Unary{n.op, arg});
        } else if constexpr (std::is_same_v<T, Binary>) {
          ExprPtr lhs = fold(n.lhs);
          ExprPtr rhs = fold(n.rhs);
          const auto* cl = std::get_if<Constant>(&lhs->v);
          const auto* cr = std::get_if<Constant>(&rhs->v);
          if (cl && cr) {
            double v = 0.0;
            switch (n.op) {
              case BinaryOp::Add:
                v = cl->value + cr->value;
                break;
              case BinaryOp::Sub:
                v = cl->value - cr->value;
                break;
              case BinaryOp::Mul:
                v = cl->value * cr->value;
                break;
              case BinaryOp::Div:
                if (cr->value == 0.0) return make(Binary{n.op, lhs, rhs});
                v = cl->value / cr->value;
                break;
              case BinaryOp::Pow:
                v = std::pow(cl->value, cr->value);
                if (std::isnan(v)) return make(Binary{n.op, lhs, rhs});
                break;
            }
            return make(Constant{v});
          }
          return make(Binary{n.op, lhs, rhs});
        } else {
          return make(n);
        }
      },
      node->v);
}

// Flattens a folded product tree into factors; division contributes the
// reciprocal when the divisor is constant. Returns false when the shape is
// not a pure product.
bool collect_factors(const ExprPtr& node, std::vector<ExprPtr>& factors, double& scale) {
  if (const auto* b = std::get_if<Binary>(&node->v)) {
    if (b->op == BinaryOp::Mul)
      return collect_factors(b->lhs, factors, scale) && collect_factors(b->rhs, factors, scale);
    if (b->op == BinaryOp::Div) {
      const auto* cr = std::get_if<Constant>(&b->rhs->v);
      if (!cr || cr->value == 0.0) return false;
      scale /= cr->value;
      return collect_factors(b->lhs, factors, scale);
    }
    return false;
  }
  if (const auto* u = std::get_if<Unary>(&node->v)) {
    if (u->op == UnaryOp::Neg) {
      scale = -scale;
      return collect_factors(u->arg, factors, scale);
    }
    return false;
  }
  if (const auto* c = std::get_if<Constant>(&node->v)) {
    scale *= c->value;
    return true;
  }
  factors.push_back(node);
  return true;
}

bool structurally_equal_node(const ExprNode& a, const ExprNode& b) {
  if (a.v.index() != b.v.index()) return false;
  return std::visit(
      [&](const auto& na) -> bool {
        using T = std::decay_t<decltype(na)>;
        const auto& nb = std::get<T>(b.v);
        if constexpr (std::is_same_v<T, Constant>) {
          return na.value == nb.value;
        } else if constexpr (std::is_same_v<T, StateRef>) {
          return na.index == nb.index;
        } else if constexpr (std::is_same_v<T, TimeVar>) {
          return true;
        } else if constexpr (std::is_same_v<T, Unary>) {
          return na.op == nb.op && structurally_equal_node(*na.arg, *nb.arg);
        } else {
          return na.op == nb.op && structurally_equal_node(*na.lhs, *nb.lhs) &&
                 structurally_equal_node(*na.rhs, *nb.rhs);
        }
      },
      a.v);
}

}  // namespace

const ExprPtr& Expr::zero_node() {
  static const ExprPtr zero = make(Constant{0.0});
  return zero;
}

Expr Expr::parse(std::string_view source) { return Expr(Parser(source).run()); }

Expr Expr::constant(double c) { return Expr(make(Constant{c})); }

double Expr::eval(double t, std::span<const double> x) const { return eval_node(*root_, t, x); }

std::string Expr::print() const {
  std::ostringstream os;
  print_node(*root_, os, 0, false);
  return os.str();
}

int Expr::max_state_index() const { return max_state_index_node(*root_); }

bool Expr::is_zero_constant() const {
  const auto* c = std::get_if<Constant>(&root_->v);
  return c && c->value == 0.0;
}

bool Expr::structurally_equal(const Expr& other) const {
  return structurally_equal_node(*root_, *other.root_);
}

LinearityTag Expr::classify_linearity(const ExprRole& role) const {
  ExprPtr folded = fold(root_);

  if (role.kind == ExprRole::Kind::Input) {
    if (const auto* c = std::get_if<Constant>(&folded->v))
      return LinearityTag::constant_input(c->value);
    if (max_state_index_node(*folded) == 0) return LinearityTag::time_only_input();
    return LinearityTag::nonlinear();
  }

  // flow(i,j) / output(j): match c * x_donor
  if (depends_on_time(*folded)) return LinearityTag::nonlinear();
  std::vector<ExprPtr> factors;
  double scale = 1.0;
  if (!collect_factors(folded, factors, scale)) return LinearityTag::nonlinear();
  if (factors.size() != 1) return LinearityTag::nonlinear();
  const auto* s = std::get_if<StateRef>(&factors[0]->v);
  if (!s || s->index != role.donor) return LinearityTag::nonlinear();
  return LinearityTag::linear_in_donor(scale);
}

}  // namespace decompart
