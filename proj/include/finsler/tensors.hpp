#pragma once

// Pointwise Finsler objects at a fiber point (x, y).
//
// A FiberContext expands the Lagrangian once, as a jet in all 2n variables
// (x^0..x^{n-1}, y^0..y^{n-1}), and derives every object from that single
// expansion:
//
//   g_{mn}     = d^2 L / dy^m dy^n
//   C_{abc}    = 1/2 d g_{bc} / dy^a,          I_c = g^{ab} C_{abc}
//   2 G^a      = g^{ad} (d^2 L/dx^c dy^d y^c - dL/dx^d)
//   N^a_m      = d G^a / dy^m,                 delta_m = d/dx^m - N^n_m d/dy^n
//   G^a_{mn}   = d N^a_m / dy^n                (Berwald)
//   Gamma^a_{bc} = 1/2 g^{as} (delta_b g_{sc} + delta_c g_{sb} - delta_s g_{bc})
//   L^a_{bc}   = G^a_{bc} - Gamma^a_{bc},      J_a = L^m_{am}
//
// An order-K context provides objects that need at most K derivatives of L:
// g needs 2, C / N / Gamma need 3, Berwald / Landsberg need 4.

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "finsler/catalog.hpp"
#include "finsler/expr.hpp"
#include "finsler/jet.hpp"
#include "finsler/jet_linalg.hpp"
#include "finsler/tensor_block.hpp"

namespace finsler {

using jets::Jet;

struct FiberPoint {
  std::vector<double> x;
  std::vector<double> y;
};

class DegenerateMetric : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDegeneracyThreshold = 1e-12;

/// Jets of x and y over the 2n variables (x vars first, then y vars).
struct JetFrame {
  int n = 0;
  int order = 0;
  std::vector<Jet> x;
  std::vector<Jet> y;

  int xvar(int i) const { return i; }
  int yvar(int i) const { return n + i; }
  Jet zero() const { return Jet::constant(2 * n, order, 0.0); }
};

/// Independent seeds: x = x0 + dx, y = y0 + dy.
inline JetFrame standard_frame(std::span<const double> x, std::span<const double> y, int order) {
  const int n = static_cast<int>(x.size());
  JetFrame f{n, order, {}, {}};
  for (int i = 0; i < n; ++i) f.x.push_back(Jet::variable(2 * n, order, i, x[i]));
  for (int i = 0; i < n; ++i) f.y.push_back(Jet::variable(2 * n, order, n + i, y[i]));
  return f;
}

/// |det g| relative to the product of row norms.
inline double relative_determinant(const Eigen::MatrixXd& g) {
  double norms = 1.0;
  for (int i = 0; i < g.rows(); ++i) norms *= g.row(i).norm();
  if (norms == 0.0) return 0.0;
  return std::abs(g.determinant()) / norms;
}

inline void check_nondegenerate(const Eigen::MatrixXd& g, const char* what) {
  if (!(relative_determinant(g) > kDegeneracyThreshold))
    throw DegenerateMetric(std::string(what) + " is degenerate (relative |det| <= 1e-12)");
}

/// Second y-derivatives of a Lagrangian jet given in a frame; symmetric.
inline std::vector<std::vector<Jet>> vertical_hessian(const Jet& l, const JetFrame& f) {
  const int n = f.n;
  std::vector<std::vector<Jet>> g(n, std::vector<Jet>(n));
  for (int i = 0; i < n; ++i) {
    const Jet di = l.derivative(f.yvar(i));
    for (int j = i; j < n; ++j) {
      g[i][j] = di.derivative(f.yvar(j));
      if (j != i) g[j][i] = g[i][j];
    }
  }
  return g;
}

inline Eigen::MatrixXd values(const std::vector<std::vector<Jet>>& m) {
  const int n = static_cast<int>(m.size());
  Eigen::MatrixXd v(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) v(i, j) = m[i][j].value();
  return v;
}

inline std::vector<std::vector<Jet>> jet_inverse(const std::vector<std::vector<Jet>>& m) {
  const int n = static_cast<int>(m.size());
  jets::JetMatrix a(n, m[0][0]);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = m[i][j];
  const auto inv = jets::JetLU(a).inverse();
  std::vector<std::vector<Jet>> out(n, std::vector<Jet>(n));
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      out[i][j] = (inv(i, j) + inv(j, i)) * 0.5;
      out[j][i] = out[i][j];
    }
  return out;
}

struct Signature {
  int negative = 0;
  int positive = 0;
  bool lorentzian() const { return negative == 1 && positive >= 1; }
};

/// Inertia of a symmetric matrix (Sylvester: any congruence diagonalization
/// gives the same counts).
inline Signature inertia(const Eigen::MatrixXd& g) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
  Signature s;
  for (int i = 0; i < g.rows(); ++i) (es.eigenvalues()(i) < 0 ? s.negative : s.positive)++;
  return s;
}

class FiberContext {
 public:
  FiberContext(const LagrangianSpec& spec, FiberPoint p, int order = 4) : spec_(&spec), p_(std::move(p)), order_(order) {
    const int n = spec.dim;
    n_ = n;
    if (static_cast<int>(p_.x.size()) != n || static_cast<int>(p_.y.size()) != n)
      throw std::invalid_argument("fiber point has wrong dimension");
    if (order < 2 || order > 4) throw std::invalid_argument("fiber context order must be 2, 3 or 4");
    spec.require_admissible(p_.x, p_.y);

    frame_ = standard_frame(p_.x, p_.y, order);
    l_ = spec.eval(frame_.x, frame_.y);
    g_ = vertical_hessian(l_, frame_);
    g_values_ = values(g_);
    check_nondegenerate(g_values_, "Finsler metric g");
    ginv_ = jet_inverse(g_);

    // spray
    const int ko = order - 2;
    std::vector<Jet> dxl(n);
    std::vector<std::vector<Jet>> dxdyl(n, std::vector<Jet>(n));
    for (int d = 0; d < n; ++d) {
      const Jet dyd = l_.derivative(frame_.yvar(d));
      dxl[d] = l_.derivative(frame_.xvar(d)).truncated(ko);
      for (int c = 0; c < n; ++c) dxdyl[c][d] = dyd.derivative(frame_.xvar(c));
    }
    spray_.resize(n);
    for (int a = 0; a < n; ++a) {
      Jet acc = frame_.zero().truncated(ko);
      for (int d = 0; d < n; ++d) {
        Jet inner = -dxl[d];
        for (int c = 0; c < n; ++c) inner += dxdyl[c][d] * frame_.y[c];
        acc += ginv_[a][d] * inner;
      }
      spray_[a] = acc * 0.5;
    }

    if (order >= 3) {
      nonlinear_.assign(n, std::vector<Jet>(n));
      for (int a = 0; a < n; ++a)
        for (int m = 0; m < n; ++m) nonlinear_[a][m] = spray_[a].derivative(frame_.yvar(m));

      cartan_ = TensorBlock(n, {Valence::down, Valence::down, Valence::down});
      delta_g_ = TensorBlock(n, {Valence::down, Valence::down, Valence::down});
      for (int b = 0; b < n; ++b)
        for (int c = b; c < n; ++c) {
          std::vector<double> dy(n);
          for (int a = 0; a < n; ++a) dy[a] = g_[b][c].d(frame_.yvar(a));
          for (int a = 0; a < n; ++a) {
            cartan_(a, b, c) = cartan_(a, c, b) = 0.5 * dy[a];
            double dd = g_[b][c].d(frame_.xvar(a));
            for (int v = 0; v < n; ++v) dd -= nonlinear_[v][a].value() * dy[v];
            delta_g_(a, b, c) = delta_g_(a, c, b) = dd;
          }
        }

      chern_rund_ = TensorBlock(n, {Valence::up, Valence::down, Valence::down});
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          for (int c = b; c < n; ++c) {
            double s = 0.0;
            for (int sg = 0; sg < n; ++sg)
              s += ginv_[a][sg].value() * (delta_g_(b, sg, c) + delta_g_(c, sg, b) - delta_g_(sg, b, c));
            chern_rund_(a, b, c) = chern_rund_(a, c, b) = 0.5 * s;
          }
    }

    if (order >= 4) {
      berwald_ = TensorBlock(n, {Valence::up, Valence::down, Valence::down});
      for (int a = 0; a < n; ++a)
        for (int m = 0; m < n; ++m)
          for (int v = 0; v < n; ++v) berwald_(a, m, v) = nonlinear_[a][m].d(frame_.yvar(v));
    }
  }

  const LagrangianSpec& spec() const { return *spec_; }
  const FiberPoint& point() const { return p_; }
  int dim() const { return n_; }
  int order() const { return order_; }
  const JetFrame& frame() const { return frame_; }

  // jets (orders: L = K, g / g^-1 / G = K-2, N = K-3)
  const Jet& lagrangian_jet() const { return l_; }
  const Jet& metric_jet(int m, int n) const { return g_[m][n]; }
  const Jet& inverse_metric_jet(int m, int n) const { return ginv_[m][n]; }
  const std::vector<std::vector<Jet>>& inverse_metric_jets() const { return ginv_; }
  const std::vector<std::vector<Jet>>& metric_jets() const { return g_; }
  const Jet& spray_jet(int a) const { return spray_[a]; }
  const Jet& nonlinear_jet(int a, int m) const {
    require(3, "nonlinear connection");
    return nonlinear_[a][m];
  }

  double lagrangian() const { return l_.value(); }
  const Eigen::MatrixXd& metric_matrix() const { return g_values_; }
  Eigen::MatrixXd inverse_metric_matrix() const { return values(ginv_); }
  Signature signature() const { return inertia(g_values_); }

  TensorBlock metric() const { return matrix_block(g_, Valence::down); }
  TensorBlock inverse_metric() const { return matrix_block(ginv_, Valence::up); }

  TensorBlock cartan_torsion() const {
    require(3, "Cartan torsion");
    return cartan_;
  }

  /// I_c = g^{ab} C_{abc}.
  TensorBlock mean_cartan_contract() const {
    require(3, "mean Cartan torsion");
    TensorBlock out(n_, {Valence::down});
    for (int c = 0; c < n_; ++c) {
      double s = 0.0;
      for (int a = 0; a < n_; ++a)
        for (int b = 0; b < n_; ++b) s += ginv_[a][b].value() * cartan_(a, b, c);
      out(c) = s;
    }
    return out;
  }

  /// I_c = 1/2 d/dy^c log|det g|, with a jet-valued determinant.
  TensorBlock mean_cartan_logdet() const {
    require(3, "mean Cartan torsion");
    const Jet logdet = log_abs_det_jet();
    TensorBlock out(n_, {Valence::down});
    for (int c = 0; c < n_; ++c) out(c) = 0.5 * logdet.d(frame_.yvar(c));
    return out;
  }

  /// |det g| at the point.
  double abs_det_metric() const { return std::abs(g_values_.determinant()); }

  TensorBlock spray() const {
    TensorBlock out(n_, {Valence::up});
    for (int a = 0; a < n_; ++a) out(a) = spray_[a].value();
    return out;
  }

  TensorBlock nonlinear_connection() const {
    require(3, "nonlinear connection");
    TensorBlock out(n_, {Valence::up, Valence::down});
    for (int a = 0; a < n_; ++a)
      for (int m = 0; m < n_; ++m) out(a, m) = nonlinear_[a][m].value();
    return out;
  }

  TensorBlock berwald() const {
    require(4, "Berwald coefficients");
    return berwald_;
  }

  /// delta_a g_{bc} stored as (a, b, c).
  TensorBlock delta_metric() const {
    require(3, "horizontal derivative of g");
    return delta_g_;
  }

  TensorBlock chern_rund() const {
    require(3, "Chern-Rund coefficients");
    return chern_rund_;
  }

  TensorBlock landsberg() const {
    require(4, "Landsberg tensor");
    return berwald_ - chern_rund_;
  }

  /// J_a = L^m_{am}.
  TensorBlock landsberg_trace() const {
    const TensorBlock l = landsberg();
    TensorBlock out(n_, {Valence::down});
    for (int a = 0; a < n_; ++a) {
      double s = 0.0;
      for (int m = 0; m < n_; ++m) s += l(m, a, m);
      out(a) = s;
    }
    return out;
  }

  /// Raises the first index of C: C^a_{bc} = g^{ad} C_{dbc}.
  TensorBlock cartan_mixed() const {
    const TensorBlock c = cartan_torsion();
    TensorBlock out(n_, {Valence::up, Valence::down, Valence::down});
    for (int a = 0; a < n_; ++a)
      for (int b = 0; b < n_; ++b)
        for (int cc = 0; cc < n_; ++cc) {
          double s = 0.0;
          for (int d = 0; d < n_; ++d) s += ginv_[a][d].value() * c(d, b, cc);
          out(a, b, cc) = s;
        }
    return out;
  }

  /// delta_m F = dF/dx^m - N^n_m dF/dy^n for a jet F expressed in this
  /// context's frame (order >= 1).
  double delta(const Jet& f, int m) const {
    require(3, "horizontal derivative");
    double r = f.d(frame_.xvar(m));
    for (int v = 0; v < n_; ++v) r -= nonlinear_[v][m].value() * f.d(frame_.yvar(v));
    return r;
  }

  /// Jet version of delta_m F; the result has order min(F.order, K-2) - 1.
  Jet delta_jet(const Jet& f, int m) const {
    require(4, "horizontal derivative jet");
    Jet r = f.derivative(frame_.xvar(m));
    for (int v = 0; v < n_; ++v) r -= nonlinear_[v][m] * f.derivative(frame_.yvar(v));
    return r;
  }

  /// d/dy^c and d/dx^c of log|det g| as a jet of order K-2.
  Jet log_abs_det_jet() const {
    jets::JetMatrix a(n_, g_[0][0]);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) a(i, j) = g_[i][j];
    return jets::log(jets::abs(jets::JetLU(a).determinant()));
  }

  /// Evaluates an (x, y) expression in this context's frame.
  Jet field_jet(const expr::Ast& ast, const expr::Params& params = {}) const {
    return expr::eval_jet(ast, {frame_.x, frame_.y}, params);
  }

 private:
  void require(int k, const char* what) const {
    if (order_ < k)
      throw std::logic_error(std::string(what) + " needs a fiber context of order " + std::to_string(k));
  }

  TensorBlock matrix_block(const std::vector<std::vector<Jet>>& m, Valence v) const {
    TensorBlock out(n_, {v, v});
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) out(i, j) = m[i][j].value();
    return out;
  }

  const LagrangianSpec* spec_;
  FiberPoint p_;
  int order_;
  int n_ = 0;
  JetFrame frame_;
  Jet l_;
  std::vector<std::vector<Jet>> g_, ginv_;
  Eigen::MatrixXd g_values_;
  std::vector<Jet> spray_;
  std::vector<std::vector<Jet>> nonlinear_;
  TensorBlock cartan_, delta_g_, chern_rund_, berwald_;
};

enum class MeanCartanMethod { contract, logdet };

inline TensorBlock metric(const LagrangianSpec& spec, const FiberPoint& p) { return FiberContext(spec, p, 2).metric(); }
inline TensorBlock inverse_metric(const LagrangianSpec& spec, const FiberPoint& p) {
  return FiberContext(spec, p, 2).inverse_metric();
}
inline TensorBlock cartan_torsion(const LagrangianSpec& spec, const FiberPoint& p) {
  return FiberContext(spec, p, 3).cartan_torsion();
}
inline TensorBlock mean_cartan_torsion(const LagrangianSpec& spec, const FiberPoint& p,
                                       MeanCartanMethod method = MeanCartanMethod::contract) {
  FiberContext ctx(spec, p, 3);
  return method == MeanCartanMethod::contract ? ctx.mean_cartan_contract() : ctx.mean_cartan_logdet();
}
inline TensorBlock spray(const LagrangianSpec& spec, const FiberPoint& p) { return FiberContext(spec, p, 2).spray(); }
inline TensorBlock nonlinear_connection(const LagrangianSpec& spec, const FiberPoint& p) {
  return FiberContext(spec, p, 3).nonlinear_connection();
}
inline TensorBlock berwald_coeffs(const LagrangianSpec& spec, const FiberPoint& p) {
  return FiberContext(spec, p, 4).berwald();
}
inline TensorBlock chern_rund_coeffs(const LagrangianSpec& spec, const FiberPoint& p) {
  return FiberContext(spec, p, 3).chern_rund();
}
inline TensorBlock landsberg(const LagrangianSpec& spec, const FiberPoint& p) {
  return FiberContext(spec, p, 4).landsberg();
}
inline TensorBlock landsberg_trace(const LagrangianSpec& spec, const FiberPoint& p) {
  return FiberContext(spec, p, 4).landsberg_trace();
}

/// delta F / delta x^m for a scalar field F(x, y) given as an expression.
inline double delta_derivative(const LagrangianSpec& spec, const expr::Ast& field, const FiberPoint& p, int m,
                               const expr::Params& params = {}) {
  FiberContext ctx(spec, p, 3);
  return ctx.delta(ctx.field_jet(field, params), m);
}

/// max over (a, b, c) of |delta_c g_{ab} - Gamma^m_{ac} g_{mb} - Gamma^m_{bc} g_{am}|.
inline double metric_compatibility_residual(const FiberContext& ctx) {
  const int n = ctx.dim();
  const TensorBlock dg = ctx.delta_metric();
  const TensorBlock gam = ctx.chern_rund();
  const auto& g = ctx.metric_matrix();
  double worst = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        double r = dg(c, a, b);
        for (int m = 0; m < n; ++m) r -= gam(m, a, c) * g(m, b) + gam(m, b, c) * g(a, m);
        worst = std::max(worst, std::abs(r));
      }
  return worst;
}

/// max_a |Gamma^m_{am} - delta_a log sqrt|det g||.
inline double trace_identity_residual(const FiberContext& ctx) {
  const int n = ctx.dim();
  const TensorBlock gam = ctx.chern_rund();
  const Jet logdet = ctx.log_abs_det_jet();
  double worst = 0.0;
  for (int a = 0; a < n; ++a) {
    double tr = 0.0;
    for (int m = 0; m < n; ++m) tr += gam(m, a, m);
    worst = std::max(worst, std::abs(tr - 0.5 * ctx.delta(logdet, a)));
  }
  return worst;
}

inline double trace_identity_residual(const LagrangianSpec& spec, const FiberPoint& p) {
  return trace_identity_residual(FiberContext(spec, p, 3));
}

/// Homogeneity and symmetry checks at one fiber point. Every entry is a
/// residual scaled by max(1, size of the object involved).
struct HomogeneityAudit {
  double euler_lagrangian = 0.0;  // y^m dL/dy^m - 2L
  double euler_cartan = 0.0;      // y^a C_abc
  double euler_spray = 0.0;       // N^a_m y^m - 2 G^a
  double cartan_symmetry = 0.0;
  double ladder_metric = 0.0;     // g(x, l y) = g(x, y)
  double ladder_cartan = 0.0;     // C(x, l y) = C(x, y) / l
  double ladder_spray = 0.0;      // G(x, l y) = l^2 G(x, y)
  double ladder_nonlinear = 0.0;  // N(x, l y) = l N(x, y)
  double worst() const {
    return std::max({euler_lagrangian, euler_cartan, euler_spray, cartan_symmetry, ladder_metric, ladder_cartan,
                     ladder_spray, ladder_nonlinear});
  }
};

namespace detail {
inline double scaled_gap(const TensorBlock& at_scaled, const TensorBlock& base, double factor) {
  double gap = 0.0, size = 1.0;
  for (std::size_t i = 0; i < base.data().size(); ++i) {
    gap = std::max(gap, std::abs(at_scaled.data()[i] - factor * base.data()[i]));
    size = std::max(size, std::abs(factor * base.data()[i]));
  }
  return gap / size;
}
}  // namespace detail

inline HomogeneityAudit homogeneity_audit(const LagrangianSpec& spec, const FiberPoint& p, double lambda = 2.0) {
  const int n = spec.dim;
  FiberPoint q = p;
  for (double& c : q.y) c *= lambda;
  const FiberContext c1(spec, p, 3), c2(spec, q, 3);
  HomogeneityAudit a;
  a.euler_lagrangian = std::abs(homogeneity_residual(spec, p.x, p.y)) / std::max(1.0, std::abs(c1.lagrangian()));
  const auto c = c1.cartan_torsion();
  const auto nl = c1.nonlinear_connection();
  const auto sp = c1.spray();
  const double csize = std::max(1.0, c.max_abs());
  for (int b = 0; b < n; ++b)
    for (int d = 0; d < n; ++d) {
      double v = 0.0;
      for (int m = 0; m < n; ++m) {
        v += p.y[m] * c(m, b, d);
        a.cartan_symmetry = std::max(a.cartan_symmetry, std::abs(c(b, d, m) - c(d, m, b)) / csize);
      }
      a.euler_cartan = std::max(a.euler_cartan, std::abs(v) / csize);
    }
  const double gsize = std::max(1.0, sp.max_abs());
  for (int b = 0; b < n; ++b) {
    double v = -2.0 * sp(b);
    for (int m = 0; m < n; ++m) v += nl(b, m) * p.y[m];
    a.euler_spray = std::max(a.euler_spray, std::abs(v) / gsize);
  }
  a.ladder_metric = detail::scaled_gap(c2.metric(), c1.metric(), 1.0);
  a.ladder_cartan = detail::scaled_gap(c2.cartan_torsion(), c, 1.0 / lambda);
  a.ladder_spray = detail::scaled_gap(c2.spray(), sp, lambda * lambda);
  a.ladder_nonlinear = detail::scaled_gap(c2.nonlinear_connection(), nl, lambda);
  return a;
}

}  // namespace finsler
