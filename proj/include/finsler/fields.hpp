#pragma once

// Sections s: M -> TM\0 and fiber-dependent vector fields Z: TM\0 -> TM,
// both declared as expression text.

#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "finsler/expr.hpp"
#include "finsler/jet.hpp"
#include "finsler/tensors.hpp"

namespace finsler {

namespace detail {

inline std::set<std::string> param_names(const expr::Params& params) {
  std::set<std::string> out;
  for (const auto& [k, v] : params) out.insert(k);
  return out;
}

}  // namespace detail

struct SectionField {
  int dim = 0;
  std::vector<expr::Ast> components;
  std::vector<std::string> texts;
  expr::Params params;
  std::string name;

  static SectionField parse(const std::vector<std::string>& texts, int dim, const expr::Params& params = {},
                            std::string name = "s") {
    if (static_cast<int>(texts.size()) != dim)
      throw std::invalid_argument("section needs " + std::to_string(dim) + " components");
    SectionField s{dim, {}, texts, params, std::move(name)};
    for (const auto& t : texts) {
      auto ast = expr::parse(t, dim, detail::param_names(params));
      if (ast.uses_y()) throw std::invalid_argument("section component '" + t + "' depends on y");
      s.components.push_back(std::move(ast));
    }
    return s;
  }

  std::vector<double> value(std::span<const double> x) const {
    std::vector<double> out;
    for (const auto& c : components) out.push_back(expr::eval_scalar(c, x, {}, params));
    return out;
  }

  /// Component jets given jets for x.
  std::vector<jets::Jet> jets(std::span<const jets::Jet> x) const {
    std::vector<jets::Jet> out;
    for (const auto& c : components) out.push_back(expr::eval_jet(c, {x, {}}, params));
    return out;
  }
};

/// Either explicit components Z^mu(x, y) or the raised vertical gradient of a
/// scalar f(x, y): Z_nu = df/dy^nu, Z^mu = g^{mu nu} Z_nu.
struct FiberVectorField {
  enum class Kind { components, vertical_gradient };
  Kind kind = Kind::components;
  int dim = 0;
  std::vector<expr::Ast> components;
  expr::Ast scalar;
  std::vector<std::string> texts;
  expr::Params params;

  static FiberVectorField from_components(const std::vector<std::string>& texts, int dim,
                                          const expr::Params& params = {}) {
    if (static_cast<int>(texts.size()) != dim)
      throw std::invalid_argument("field needs " + std::to_string(dim) + " components");
    FiberVectorField z;
    z.kind = Kind::components;
    z.dim = dim;
    z.texts = texts;
    z.params = params;
    for (const auto& t : texts) z.components.push_back(expr::parse(t, dim, detail::param_names(params)));
    return z;
  }

  static FiberVectorField vertical_gradient(const std::string& f, int dim, const expr::Params& params = {}) {
    FiberVectorField z;
    z.kind = Kind::vertical_gradient;
    z.dim = dim;
    z.texts = {f};
    z.params = params;
    z.scalar = expr::parse(f, dim, detail::param_names(params));
    return z;
  }

  bool y_dependent() const {
    if (kind == Kind::vertical_gradient) return true;
    for (const auto& c : components)
      if (c.uses_y()) return true;
    return false;
  }

  /// Upper-index component jets in a frame whose inverse metric jets are
  /// `ginv`. Vertical gradients lose two orders relative to the frame.
  std::vector<jets::Jet> upper(const JetFrame& f, const std::vector<std::vector<jets::Jet>>& ginv) const {
    std::vector<jets::Jet> out;
    if (kind == Kind::components) {
      for (const auto& c : components) out.push_back(expr::eval_jet(c, {f.x, f.y}, params));
      return out;
    }
    const jets::Jet fj = expr::eval_jet(scalar, {f.x, f.y}, params);
    std::vector<jets::Jet> low;
    for (int v = 0; v < f.n; ++v) low.push_back(fj.derivative(f.yvar(v)));
    for (int m = 0; m < f.n; ++m) {
      jets::Jet acc = ginv[m][0] * low[0];
      for (int v = 1; v < f.n; ++v) acc += ginv[m][v] * low[v];
      out.push_back(acc);
    }
    return out;
  }

  /// Lower-index jets Z_nu; explicit components are lowered with `g`.
  std::vector<jets::Jet> lower(const JetFrame& f, const std::vector<std::vector<jets::Jet>>& g,
                               const std::vector<std::vector<jets::Jet>>& ginv) const {
    std::vector<jets::Jet> out;
    if (kind == Kind::vertical_gradient) {
      const jets::Jet fj = expr::eval_jet(scalar, {f.x, f.y}, params);
      for (int v = 0; v < f.n; ++v) out.push_back(fj.derivative(f.yvar(v)));
      return out;
    }
    const auto up = upper(f, ginv);
    for (int v = 0; v < f.n; ++v) {
      jets::Jet acc = g[v][0] * up[0];
      for (int m = 1; m < f.n; ++m) acc += g[v][m] * up[m];
      out.push_back(acc);
    }
    return out;
  }

  /// Upper components evaluated in a fiber context.
  std::vector<jets::Jet> upper(const FiberContext& ctx) const { return upper(ctx.frame(), ctx.inverse_metric_jets()); }

  std::vector<jets::Jet> lower(const FiberContext& ctx) const {
    return lower(ctx.frame(), ctx.metric_jets(), ctx.inverse_metric_jets());
  }

  std::vector<double> value(const FiberContext& ctx) const {
    std::vector<double> out;
    for (const auto& j : upper(ctx)) out.push_back(j.value());
    return out;
  }
};

}  // namespace finsler
