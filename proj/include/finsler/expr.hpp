#pragma once

// Arithmetic expression language used to declare Lagrangians, sections,
// fiber fields and scalars.
//
//   expr    := sum
//   sum     := product (('+' | '-') product)*
//   product := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := atom ('^' exponent)?          (right associative)
//   atom    := number | identifier | call | '(' expr ')'
//   call    := name '(' expr ')' | 'pow' '(' expr ',' rational ')'
//
// Identifiers are x<i>, y<i> (i < dim), `pi`, or declared parameter names.
// Exponents are rational literals: 2, -1, (3/4), (-1/2).

#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "finsler/jet.hpp"

namespace finsler::expr {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// A jet domain error raised while evaluating a specific node.
class EvalError : public std::runtime_error {
 public:
  EvalError(const std::string& what, std::size_t offset, std::string node)
      : std::runtime_error(what + " (in '" + node + "' at offset " + std::to_string(offset) + ")"),
        offset_(offset),
        node_(std::move(node)) {}
  std::size_t offset() const { return offset_; }
  const std::string& node() const { return node_; }

 private:
  std::size_t offset_;
  std::string node_;
};

enum class Kind { constant, x_var, y_var, param, neg, add, sub, mul, div, pow, call };
enum class Func { sqrt, exp, log, sin, cos, abs };

struct Node {
  Kind kind = Kind::constant;
  double value = 0.0;  // constant
  int index = 0;       // x_var / y_var
  std::string name;    // param
  Func func = Func::sqrt;
  long long num = 1, den = 1;  // pow exponent
  std::size_t offset = 0;
  std::vector<Node> children;
};

inline const char* func_name(Func f) {
  switch (f) {
    case Func::sqrt: return "sqrt";
    case Func::exp: return "exp";
    case Func::log: return "log";
    case Func::sin: return "sin";
    case Func::cos: return "cos";
    case Func::abs: return "abs";
  }
  return "?";
}

/// Parsed expression; immutable after construction.
class Ast {
 public:
  Ast() = default;
  Ast(Node root, int dim) : root_(std::move(root)), dim_(dim) {}
  const Node& root() const { return root_; }
  int dim() const { return dim_; }

  bool uses_y() const { return uses(root_, Kind::y_var); }
  bool uses_x() const { return uses(root_, Kind::x_var); }
  /// Largest referenced index of the given variable kind, or -1.
  int max_index(Kind k) const { return max_index(root_, k); }
  std::set<std::string> params() const {
    std::set<std::string> out;
    collect(root_, out);
    return out;
  }

 private:
  static bool uses(const Node& n, Kind k) {
    if (n.kind == k) return true;
    for (const auto& c : n.children)
      if (uses(c, k)) return true;
    return false;
  }
  static int max_index(const Node& n, Kind k) {
    int m = n.kind == k ? n.index : -1;
    for (const auto& c : n.children) m = std::max(m, max_index(c, k));
    return m;
  }
  static void collect(const Node& n, std::set<std::string>& out) {
    if (n.kind == Kind::param) out.insert(n.name);
    for (const auto& c : n.children) collect(c, out);
  }

  Node root_;
  int dim_ = 0;
};

namespace detail {

class Parser {
 public:
  Parser(std::string_view text, int dim, const std::set<std::string>& params)
      : s_(text), dim_(dim), params_(params) {}

  Node parse() {
    Node n = parse_sum();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }
  [[noreturn]] void fail(const std::string& msg, std::size_t at) const { throw ParseError(msg, at); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool peek(char c) {
    skip_ws();
    return pos_ < s_.size() && s_[pos_] == c;
  }
  bool accept(char c) {
    if (!peek(c)) return false;
    ++pos_;
    return true;
  }
  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= s_.size()) fail(std::string("expected '") + c + "' but reached end of input");
      fail(std::string("expected '") + c + "'");
    }
  }

  static Node binary(Kind k, Node a, Node b, std::size_t at) {
    Node n;
    n.kind = k;
    n.offset = at;
    n.children.push_back(std::move(a));
    n.children.push_back(std::move(b));
    return n;
  }

  Node parse_sum() {
    Node lhs = parse_product();
    for (;;) {
      skip_ws();
      const std::size_t at = pos_;
      if (accept('+')) {
        lhs = binary(Kind::add, std::move(lhs), parse_product(), at);
      } else if (accept('-')) {
        lhs = binary(Kind::sub, std::move(lhs), parse_product(), at);
      } else {
        return lhs;
      }
    }
  }

  Node parse_product() {
    Node lhs = parse_unary();
    for (;;) {
      skip_ws();
      const std::size_t at = pos_;
      if (accept('*')) {
        lhs = binary(Kind::mul, std::move(lhs), parse_unary(), at);
      } else if (accept('/')) {
        lhs = binary(Kind::div, std::move(lhs), parse_unary(), at);
      } else {
        return lhs;
      }
    }
  }

  Node parse_unary() {
    skip_ws();
    const std::size_t at = pos_;
    if (accept('-')) {
      Node n;
      n.kind = Kind::neg;
      n.offset = at;
      n.children.push_back(parse_unary());
      return n;
    }
    return parse_power();
  }

  Node parse_power() {
    Node base = parse_atom();
    skip_ws();
    const std::size_t at = pos_;
    if (accept('^')) {
      Node n;
      n.kind = Kind::pow;
      n.offset = at;
      parse_rational(n.num, n.den);
      n.children.push_back(std::move(base));
      return n;
    }
    return base;
  }

  long long parse_integer() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) fail("exponent must be a rational literal");
    if (pos_ < s_.size() && (s_[pos_] == '.' || s_[pos_] == 'e' || s_[pos_] == 'E'))
      fail("exponent must be a rational literal", start);
    if (pos_ - start > 15) fail("exponent literal too large", start);
    return std::stoll(std::string(s_.substr(start, pos_ - start)));
  }

  // rational := ['-'] int | '(' ['-'] int ['/' int] ')'
  void parse_rational(long long& num, long long& den) {
    const bool paren = accept('(');
    const bool neg = accept('-');
    num = parse_integer();
    den = 1;
    if (paren && accept('/')) {
      const std::size_t at = pos_;
      den = parse_integer();
      if (den == 0) fail("zero denominator in exponent", at);
    }
    if (paren) expect(')');
    if (neg) num = -num;
    const long long g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  Node parse_number() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) ++pos_;
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < s_.size() && (s_[p] == '+' || s_[p] == '-')) ++p;
      if (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) {
        pos_ = p;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      }
    }
    const std::string lit(s_.substr(start, pos_ - start));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(lit, &used);
    } catch (const std::exception&) {
      fail("malformed number '" + lit + "'", start);
    }
    if (used != lit.size()) fail("malformed number '" + lit + "'", start);
    Node n;
    n.kind = Kind::constant;
    n.value = v;
    n.offset = start;
    return n;
  }

  Node parse_atom() {
    skip_ws();
    const std::size_t start = pos_;
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      Node n = parse_sum();
      expect(')');
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      const std::string id(s_.substr(start, pos_ - start));
      return identifier(id, start);
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  Node identifier(const std::string& id, std::size_t start) {
    static const std::map<std::string, Func> funcs{{"sqrt", Func::sqrt}, {"exp", Func::exp}, {"log", Func::log},
                                                   {"sin", Func::sin},   {"cos", Func::cos}, {"abs", Func::abs}};
    if (auto it = funcs.find(id); it != funcs.end()) {
      expect('(');
      Node n;
      n.kind = Kind::call;
      n.func = it->second;
      n.offset = start;
      n.children.push_back(parse_sum());
      expect(')');
      return n;
    }
    if (id == "pow") {
      expect('(');
      Node n;
      n.kind = Kind::pow;
      n.offset = start;
      n.children.push_back(parse_sum());
      expect(',');
      parse_rational(n.num, n.den);
      expect(')');
      return n;
    }
    if (id == "pi") {
      Node n;
      n.kind = Kind::constant;
      n.value = M_PI;
      n.offset = start;
      return n;
    }
    if ((id[0] == 'x' || id[0] == 'y') && id.size() > 1 &&
        id.find_first_not_of("0123456789", 1) == std::string::npos) {
      if (id.size() > 4) fail("variable index out of range: " + id, start);
      const int idx = std::stoi(id.substr(1));
      if (idx >= dim_) fail("variable index out of range: " + id + " (dim " + std::to_string(dim_) + ")", start);
      Node n;
      n.kind = id[0] == 'x' ? Kind::x_var : Kind::y_var;
      n.index = idx;
      n.offset = start;
      return n;
    }
    if (params_.count(id)) {
      Node n;
      n.kind = Kind::param;
      n.name = id;
      n.offset = start;
      return n;
    }
    fail("unknown identifier '" + id + "'", start);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int dim_;
  const std::set<std::string>& params_;
};

inline int precedence(const Node& n) {
  switch (n.kind) {
    case Kind::add:
    case Kind::sub: return 1;
    case Kind::mul:
    case Kind::div: return 2;
    case Kind::neg: return 3;
    case Kind::pow: return 4;
    default: return 5;
  }
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void print_node(const Node& n, std::string& out);

inline void print_child(const Node& c, int min_prec, std::string& out) {
  const bool wrap = precedence(c) < min_prec;
  if (wrap) out += '(';
  print_node(c, out);
  if (wrap) out += ')';
}

inline void print_node(const Node& n, std::string& out) {
  switch (n.kind) {
    case Kind::constant: out += format_double(n.value); return;
    case Kind::x_var: out += "x" + std::to_string(n.index); return;
    case Kind::y_var: out += "y" + std::to_string(n.index); return;
    case Kind::param: out += n.name; return;
    case Kind::neg:
      out += '-';
      print_child(n.children[0], 3, out);
      return;
    case Kind::add:
    case Kind::sub:
    case Kind::mul:
    case Kind::div: {
      const int p = precedence(n);
      const char op = n.kind == Kind::add ? '+' : n.kind == Kind::sub ? '-' : n.kind == Kind::mul ? '*' : '/';
      print_child(n.children[0], p, out);
      out += ' ';
      out += op;
      out += ' ';
      // left associative: an equal-precedence right child needs parentheses
      print_child(n.children[1], p + 1, out);
      return;
    }
    case Kind::pow:
      print_child(n.children[0], 5, out);
      out += '^';
      if (n.den == 1 && n.num >= 0) {
        out += std::to_string(n.num);
      } else {
        out += '(' + std::to_string(n.num);
        if (n.den != 1) out += '/' + std::to_string(n.den);
        out += ')';
      }
      return;
    case Kind::call:
      out += func_name(n.func);
      out += '(';
      print_node(n.children[0], out);
      out += ')';
      return;
  }
}

}  // namespace detail

/// Parses `text` for a chart of dimension `dim`. `params` lists the names
/// that may appear as free parameters.
inline Ast parse(std::string_view text, int dim, const std::set<std::string>& params = {}) {
  if (dim < 1 || dim > 5) throw std::invalid_argument("expression dimension must be in [1, 5]");
  detail::Parser p(text, dim, params);
  return Ast(p.parse(), dim);
}

/// Canonical text: minimal parentheses, single spaces around binary operators.
inline std::string print(const Ast& ast) {
  std::string out;
  detail::print_node(ast.root(), out);
  return out;
}

inline bool structurally_equal(const Node& a, const Node& b) {
  if (a.kind != b.kind || a.children.size() != b.children.size()) return false;
  switch (a.kind) {
    case Kind::constant:
      if (a.value != b.value) return false;
      break;
    case Kind::x_var:
    case Kind::y_var:
      if (a.index != b.index) return false;
      break;
    case Kind::param:
      if (a.name != b.name) return false;
      break;
    case Kind::pow:
      if (a.num != b.num || a.den != b.den) return false;
      break;
    case Kind::call:
      if (a.func != b.func) return false;
      break;
    default: break;
  }
  for (std::size_t i = 0; i < a.children.size(); ++i)
    if (!structurally_equal(a.children[i], b.children[i])) return false;
  return true;
}

using Params = std::map<std::string, double>;

/// Variable bindings: one jet per x coordinate and one per y coordinate.
struct JetEnv {
  std::span<const jets::Jet> x;
  std::span<const jets::Jet> y;
};

namespace detail {

inline double lookup(const Params& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::invalid_argument("unbound parameter '" + name + "'");
  return it->second;
}

inline jets::Jet eval(const Node& n, const JetEnv& env, const Params& params, const jets::Jet& zero) {
  using jets::Jet;
  auto arg = [&](int i) { return eval(n.children[i], env, params, zero); };
  try {
    switch (n.kind) {
      case Kind::constant: return zero + n.value;
      case Kind::x_var:
        if (n.index >= static_cast<int>(env.x.size())) throw std::invalid_argument("x variable not bound");
        return env.x[n.index];
      case Kind::y_var:
        if (n.index >= static_cast<int>(env.y.size())) throw std::invalid_argument("y variable not bound");
        return env.y[n.index];
      case Kind::param: return zero + lookup(params, n.name);
      case Kind::neg: return -arg(0);
      case Kind::add: return arg(0) + arg(1);
      case Kind::sub: return arg(0) - arg(1);
      case Kind::mul: return arg(0) * arg(1);
      case Kind::div: return arg(0) / arg(1);
      case Kind::pow: return jets::pow_rational(arg(0), n.num, n.den);
      case Kind::call: {
        Jet a = arg(0);
        switch (n.func) {
          case Func::sqrt: return jets::sqrt(a);
          case Func::exp: return jets::exp(a);
          case Func::log: return jets::log(a);
          case Func::sin: return jets::sin(a);
          case Func::cos: return jets::cos(a);
          case Func::abs: return jets::abs(a);
        }
      }
    }
  } catch (const jets::DomainError& e) {
    std::string text;
    print_node(n, text);
    throw EvalError(e.what(), n.offset, text);
  }
  throw std::logic_error("unreachable expression node");
}

inline double eval_scalar(const Node& n, std::span<const double> x, std::span<const double> y, const Params& params) {
  auto arg = [&](int i) { return eval_scalar(n.children[i], x, y, params); };
  auto domain = [&](const char* what) {
    std::string text;
    print_node(n, text);
    throw EvalError(what, n.offset, text);
  };
  switch (n.kind) {
    case Kind::constant: return n.value;
    case Kind::x_var:
      if (n.index >= static_cast<int>(x.size())) throw std::invalid_argument("x variable not bound");
      return x[n.index];
    case Kind::y_var:
      if (n.index >= static_cast<int>(y.size())) throw std::invalid_argument("y variable not bound");
      return y[n.index];
    case Kind::param: return lookup(params, n.name);
    case Kind::neg: return -arg(0);
    case Kind::add: return arg(0) + arg(1);
    case Kind::sub: return arg(0) - arg(1);
    case Kind::mul: return arg(0) * arg(1);
    case Kind::div: {
      const double b = arg(1);
      if (b == 0.0) domain("division by a jet with zero constant term");
      return arg(0) * (1.0 / b);  // same rounding as the jet path
    }
    case Kind::pow: {
      const double b = arg(0);
      if (n.den == 1) {
        if (n.num < 0 && b == 0.0) domain("division by a jet with zero constant term");
        // same multiplication chain as the jet path
        long long p = n.num < 0 ? -n.num : n.num;
        double result = 1.0, base = b;
        bool first = true;
        while (p > 0) {
          if (p & 1) {
            result = first ? base : result * base;
            first = false;
          }
          p >>= 1;
          if (p > 0) base = base * base;
        }
        return n.num < 0 ? 1.0 / result : result;
      }
      if (!(b > 0.0)) domain("non-integer power of a non-positive value");
      return std::pow(b, static_cast<double>(n.num) / static_cast<double>(n.den));
    }
    case Kind::call: {
      const double a = arg(0);
      switch (n.func) {
        case Func::sqrt:
          if (!(a > 0.0)) domain("sqrt of a non-positive value");
          return std::pow(a, 0.5);
        case Func::exp: return std::exp(a);
        case Func::log:
          if (!(a > 0.0)) domain("log of a non-positive value");
          return std::log(a);
        case Func::sin: return std::sin(a);
        case Func::cos: return std::cos(a);
        case Func::abs:
          if (a == 0.0) domain("abs at zero is not smooth");
          return a > 0.0 ? a : -a;
      }
    }
  }
  throw std::logic_error("unreachable expression node");
}

}  // namespace detail

/// Evaluates the expression in jet arithmetic. All bound jets must share a
/// dimension; the result order is the smallest order among the bindings.
inline jets::Jet eval_jet(const Ast& ast, const JetEnv& env, const Params& params = {}) {
  const jets::Jet* ref = !env.x.empty() ? &env.x[0] : !env.y.empty() ? &env.y[0] : nullptr;
  if (!ref) throw std::invalid_argument("eval_jet needs at least one bound variable");
  const jets::Jet zero = jets::Jet::constant(ref->dim(), ref->order(), 0.0);
  return detail::eval(ast.root(), env, params, zero);
}

/// Direct floating-point evaluation (no jets).
inline double eval_scalar(const Ast& ast, std::span<const double> x, std::span<const double> y,
                          const Params& params = {}) {
  return detail::eval_scalar(ast.root(), x, y, params);
}

}  // namespace finsler::expr
