#pragma once

// Built-in Finsler Lagrangians. Every entry is an expression in (x, y) plus a
// list of admissibility constraints that carve out the cone subbundle on
// which the Lagrangian is smooth.

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "finsler/expr.hpp"
#include "finsler/jet.hpp"

namespace finsler {

class InadmissiblePoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Constraint {
  enum class Kind { positive, nonzero };
  expr::Ast ast;
  Kind kind = Kind::positive;
  std::string text;
};

/// Parameters accepted by build_lagrangian. Which fields are read depends on
/// the catalog id.
struct LagrangianParams {
  std::map<std::string, double> numbers;            // quartic: "sign"; custom: free constants
  std::map<std::string, std::string> fields;        // affine_sphere_friedmann: "a"
  std::vector<std::vector<std::string>> matrix;     // quadratic_metric
  std::string expression;                           // custom_expression
  std::vector<std::string> positive;                // custom_expression extra constraints (> 0)
  std::vector<std::string> nonzero;                 // custom_expression extra constraints (!= 0)
};

struct LagrangianSpec {
  std::string id;
  int dim = 0;
  expr::Ast lagrangian;
  std::string text;
  expr::Params constants;
  std::vector<Constraint> constraints;
  std::optional<std::vector<int>> expected_signature;  // sorted signs, e.g. {-1, 1, 1, 1}

  bool admissible(std::span<const double> x, std::span<const double> y) const {
    bool nonzero = false;
    for (double v : y) nonzero |= (v != 0.0);
    if (!nonzero) return false;
    try {
      for (const auto& c : constraints) {
        const double v = expr::eval_scalar(c.ast, x, y, constants);
        if (c.kind == Constraint::Kind::positive ? !(v > 0.0) : !(v != 0.0)) return false;
      }
      const double l = expr::eval_scalar(lagrangian, x, y, constants);
      return std::isfinite(l);
    } catch (const expr::EvalError&) {
      return false;
    }
  }

  void require_admissible(std::span<const double> x, std::span<const double> y) const {
    if (!admissible(x, y)) {
      std::ostringstream os;
      os << "inadmissible point for '" << id << "': x=(";
      for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
      os << ") y=(";
      for (std::size_t i = 0; i < y.size(); ++i) os << (i ? "," : "") << y[i];
      os << ")";
      throw InadmissiblePoint(os.str());
    }
  }

  double value(std::span<const double> x, std::span<const double> y) const {
    require_admissible(x, y);
    return expr::eval_scalar(lagrangian, x, y, constants);
  }

  jets::Jet eval(std::span<const jets::Jet> x, std::span<const jets::Jet> y) const {
    return expr::eval_jet(lagrangian, {x, y}, constants);
  }
};

namespace detail {

inline std::string num(double v) { return "(" + expr::detail::format_double(v) + ")"; }

inline void check_field_in_x(const std::string& text, int dim, const std::string& what,
                             const std::set<std::string>& params = {}) {
  expr::Ast a;
  try {
    a = expr::parse(text, dim, params);
  } catch (const expr::ParseError& e) {
    throw SpecError(what + ": " + e.what());
  }
  if (a.uses_y()) throw SpecError(what + " must not depend on y");
}

inline Constraint make_constraint(const std::string& text, int dim, Constraint::Kind kind,
                                  const std::set<std::string>& params = {}) {
  return {expr::parse(text, dim, params), kind, text};
}

}  // namespace detail

/// Builds a catalog Lagrangian:
///   minkowski                L = (-(y0)^2 + sum (yi)^2) / 2
///   quadratic_metric         L = g_{mn}(x) y^m y^n / 2, g given as expressions in x
///   affine_sphere_friedmann  the affine-sphere Friedmann Lagrangian with scale factor a(x0)
///   quartic                  L = sign/2 * (sign*(-(y0)^4 + sum (yi)^4))^(1/2)
///   custom_expression        any expression text
inline LagrangianSpec build_lagrangian(const std::string& id, int dim, const LagrangianParams& params = {}) {
  if (dim < 2 || dim > 5) throw SpecError("dimension must be in [2, 5]");
  LagrangianSpec spec;
  spec.id = id;
  spec.dim = dim;
  std::set<std::string> param_names;
  std::string text;

  if (id == "minkowski") {
    text = "0.5*(-y0^2";
    for (int i = 1; i < dim; ++i) text += " + y" + std::to_string(i) + "^2";
    text += ")";
    std::vector<int> sig(dim, 1);
    sig[0] = -1;
    spec.expected_signature = sig;
  } else if (id == "quadratic_metric") {
    const auto& m = params.matrix;
    if (static_cast<int>(m.size()) != dim) throw SpecError("quadratic_metric: matrix must be dim x dim");
    for (const auto& row : m)
      if (static_cast<int>(row.size()) != dim) throw SpecError("quadratic_metric: matrix must be dim x dim");
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) {
        detail::check_field_in_x(m[i][j], dim, "quadratic_metric entry (" + std::to_string(i) + "," +
                                                   std::to_string(j) + ")");
        if (j > i) {
          const auto a = expr::parse(m[i][j], dim), b = expr::parse(m[j][i], dim);
          if (!expr::structurally_equal(a.root(), b.root()))
            throw SpecError("quadratic_metric: matrix must be symmetric");
        }
      }
    }
    text = "0.5*(";
    bool first = true;
    for (int i = 0; i < dim; ++i) {
      for (int j = i; j < dim; ++j) {
        if (!first) text += " + ";
        first = false;
        text += (i == j ? "(" : "2*(") + m[i][j] + ")*y" + std::to_string(i) + "*y" + std::to_string(j);
      }
    }
    text += ")";
  } else if (id == "affine_sphere_friedmann") {
    if (dim != 4) throw SpecError("affine_sphere_friedmann requires dim = 4");
    auto it = params.fields.find("a");
    const std::string a = it == params.fields.end() ? "1" : it->second;
    detail::check_field_in_x(a, dim, "scale factor a");
    if (expr::parse(a, dim).max_index(expr::Kind::x_var) > 0)
      throw SpecError("scale factor a must depend on x0 only");
    const std::string A = "(" + a + ")";
    const std::string alpha = "(0.5*y0 + (sqrt(3)/2)*" + A + "*y3)";
    const std::string beta = "((sqrt(3)/2)*y0 - 0.5*" + A + "*y3)";
    const std::string rad = "(" + beta + "^2 - " + A + "^2*(y1^2 + y2^2))";
    text = "-(2/3^(3/4))*(" + alpha + "^2)^(1/4)*" + rad + "^(3/4)";
    spec.constraints.push_back(detail::make_constraint(alpha, dim, Constraint::Kind::nonzero));
    spec.constraints.push_back(detail::make_constraint(rad, dim, Constraint::Kind::positive));
    spec.constraints.push_back(detail::make_constraint(A, dim, Constraint::Kind::positive));
  } else if (id == "quartic") {
    double sign = 1.0;
    if (auto it = params.numbers.find("sign"); it != params.numbers.end()) sign = it->second;
    if (sign != 1.0 && sign != -1.0) throw SpecError("quartic: sign must be +1 or -1");
    std::string r = "(-y0^4";
    for (int i = 1; i < dim; ++i) r += " + y" + std::to_string(i) + "^4";
    r += ")";
    const std::string s = detail::num(sign);
    text = "0.5*" + s + "*(" + s + "*" + r + ")^(1/2)";
    spec.constraints.push_back(detail::make_constraint(s + "*" + r, dim, Constraint::Kind::positive));
  } else if (id == "custom_expression") {
    if (params.expression.empty()) throw SpecError("custom_expression: missing expression");
    for (const auto& [name, value] : params.numbers) {
      param_names.insert(name);
      spec.constants[name] = value;
    }
    text = params.expression;
    try {
      for (const auto& c : params.positive)
        spec.constraints.push_back(detail::make_constraint(c, dim, Constraint::Kind::positive, param_names));
      for (const auto& c : params.nonzero)
        spec.constraints.push_back(detail::make_constraint(c, dim, Constraint::Kind::nonzero, param_names));
    } catch (const expr::ParseError& e) {
      throw SpecError(std::string("custom_expression constraint: ") + e.what());
    }
  } else {
    throw SpecError("unknown catalog id '" + id + "'");
  }

  try {
    spec.lagrangian = expr::parse(text, dim, param_names);
  } catch (const expr::ParseError& e) {
    throw SpecError("lagrangian '" + id + "': " + e.what());
  }
  spec.text = text;
  return spec;
}

/// Convenience matrix for the spatially flat Friedmann metric
/// -dt^2 + a(t)^2 (dx^2 + dy^2 + dz^2).
inline std::vector<std::vector<std::string>> friedmann_matrix(const std::string& a) {
  std::vector<std::vector<std::string>> m(4, std::vector<std::string>(4, "0"));
  m[0][0] = "-1";
  for (int i = 1; i < 4; ++i) m[i][i] = "(" + a + ")^2";
  return m;
}

/// Euler residual y^m dL/dy^m - 2L at an admissible point.
inline double homogeneity_residual(const LagrangianSpec& spec, std::span<const double> x, std::span<const double> y) {
  spec.require_admissible(x, y);
  const int n = spec.dim;
  std::vector<double> pt(x.begin(), x.end());
  pt.insert(pt.end(), y.begin(), y.end());
  std::vector<int> active;
  for (int i = n; i < 2 * n; ++i) active.push_back(i);
  auto seeds = jets::seed_variables(pt, active, 1);
  const jets::Jet l = spec.eval(std::span(seeds).first(n), std::span(seeds).subspan(n));
  double r = -2.0 * l.value();
  for (int i = 0; i < n; ++i) r += y[i] * l.d(n + i);
  return r;
}

}  // namespace finsler
