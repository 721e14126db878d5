#pragma once

// Derivatives along a section s: M -> TM\0 and the pointwise identities that
// relate the Levi-Civita connection of s*g to pulled-back Finsler objects.
//
// Two independent evaluation routes are used throughout:
//   * SectionPoint: a FiberContext at (x, s(x)) plus first derivatives of s,
//     giving D_mu s^a = d_mu s^a + N^a_mu(x, s(x)) and every fiber tensor there.
//   * ComposedFrame: jets in (xi, eta) with x = x0 + xi, y = s(x0 + xi) + eta,
//     so xi-derivatives are total derivatives of pulled-back quantities such
//     as s*g and s*Z, and eta-derivatives are vertical derivatives.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "finsler/fields.hpp"
#include "finsler/tensors.hpp"

namespace finsler {

enum class HorizontalConnection { chern_rund, berwald };
enum class PullbackKind { chern_rund, cartan, berwald };

class SectionPoint {
 public:
  SectionPoint(const LagrangianSpec& spec, const SectionField& s, std::span<const double> x, int order = 3)
      : x_(x.begin(), x.end()) {
    const int n = spec.dim;
    if (s.dim != n || static_cast<int>(x.size()) != n) throw std::invalid_argument("section dimension mismatch");
    if (order < 3) throw std::invalid_argument("section point needs fiber order >= 3");
    std::vector<Jet> xj;
    for (int i = 0; i < n; ++i) xj.push_back(Jet::variable(n, 1, i, x[i]));
    const auto sj = s.jets(xj);
    ds_ = TensorBlock(n, {Valence::up, Valence::down});
    for (int a = 0; a < n; ++a) {
      s_.push_back(sj[a].value());
      for (int m = 0; m < n; ++m) ds_(a, m) = sj[a].d(m);
    }
    ctx_.emplace(spec, FiberPoint{x_, s_}, order);
    const auto nl = ctx_->nonlinear_connection();
    d_ = ds_ + nl;
  }

  const FiberContext& fiber() const { return *ctx_; }
  int dim() const { return ctx_->dim(); }
  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& s() const { return s_; }
  /// d_mu s^a stored as (a, mu).
  const TensorBlock& ds() const { return ds_; }
  /// D_mu s^a stored as (a, mu).
  const TensorBlock& D() const { return d_; }

  /// D^b s^a = g^{bc} D_c s^a, stored as (b, a).
  TensorBlock D_raised() const {
    const int n = dim();
    const auto gi = ctx_->inverse_metric_matrix();
    TensorBlock out(n, {Valence::up, Valence::up});
    for (int b = 0; b < n; ++b)
      for (int a = 0; a < n; ++a) {
        double v = 0.0;
        for (int c = 0; c < n; ++c) v += gi(b, c) * d_(a, c);
        out(b, a) = v;
      }
    return out;
  }

  /// (D_s s)^a = D_mu s^a s^mu.
  std::vector<double> D_along_s() const {
    const int n = dim();
    std::vector<double> out(n, 0.0);
    for (int a = 0; a < n; ++a)
      for (int m = 0; m < n; ++m) out[a] += d_(a, m) * s_[m];
    return out;
  }

 private:
  std::vector<double> x_;
  std::vector<double> s_;
  std::optional<FiberContext> ctx_;
  TensorBlock ds_, d_;
};

class ComposedFrame {
 public:
  ComposedFrame(const LagrangianSpec& spec, const SectionField& s, std::span<const double> x, int order = 3) {
    const int n = spec.dim;
    frame_.n = n;
    frame_.order = order;
    for (int i = 0; i < n; ++i) frame_.x.push_back(Jet::variable(2 * n, order, i, x[i]));
    const auto sj = s.jets(frame_.x);
    std::vector<double> sv;
    for (int i = 0; i < n; ++i) {
      sv.push_back(sj[i].value());
      frame_.y.push_back(sj[i] + Jet::variable(2 * n, order, n + i, 0.0));
    }
    spec.require_admissible(x, sv);
    l_ = spec.eval(frame_.x, frame_.y);
    g_ = vertical_hessian(l_, frame_);
    check_nondegenerate(values(g_), "pullback metric s*g");
    ginv_ = jet_inverse(g_);
  }

  const JetFrame& frame() const { return frame_; }
  int dim() const { return frame_.n; }
  const Jet& lagrangian_jet() const { return l_; }
  const std::vector<std::vector<Jet>>& metric_jets() const { return g_; }
  const std::vector<std::vector<Jet>>& inverse_metric_jets() const { return ginv_; }

  Eigen::MatrixXd pullback_metric() const { return values(g_); }

  /// Levi-Civita coefficients of s*g, stored as (c, a, b).
  TensorBlock christoffels() const {
    const int n = dim();
    TensorBlock dh(n, {Valence::down, Valence::down, Valence::down});
    for (int r = 0; r < n; ++r)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) dh(r, a, b) = g_[a][b].d(frame_.xvar(r));
    TensorBlock out(n, {Valence::up, Valence::down, Valence::down});
    for (int c = 0; c < n; ++c)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          double v = 0.0;
          for (int r = 0; r < n; ++r) v += ginv_[c][r].value() * (dh(a, r, b) + dh(b, r, a) - dh(r, a, b));
          out(c, a, b) = 0.5 * v;
        }
    return out;
  }

  /// Jets of s*Z (total x-derivatives via the xi variables).
  std::vector<Jet> pulled_field(const FiberVectorField& z) const { return z.upper(frame_, ginv_); }

 private:
  JetFrame frame_;
  Jet l_;
  std::vector<std::vector<Jet>> g_, ginv_;
};

inline TensorBlock section_D(const LagrangianSpec& spec, const SectionField& s, std::span<const double> x) {
  return SectionPoint(spec, s, x).D();
}

/// delta_a Z^a + H^a_{ma} Z^m at the context's fiber point.
inline double horizontal_div(const FiberContext& ctx, const FiberVectorField& z,
                             HorizontalConnection which = HorizontalConnection::chern_rund) {
  const int n = ctx.dim();
  const auto zu = z.upper(ctx);
  const TensorBlock h = which == HorizontalConnection::chern_rund ? ctx.chern_rund() : ctx.berwald();
  double div = 0.0;
  for (int a = 0; a < n; ++a) div += ctx.delta(zu[a], a);
  for (int a = 0; a < n; ++a)
    for (int m = 0; m < n; ++m) div += h(a, m, a) * zu[m].value();
  return div;
}

inline double horizontal_div(const LagrangianSpec& spec, const FiberVectorField& z, const FiberPoint& p,
                             HorizontalConnection which = HorizontalConnection::chern_rund) {
  return horizontal_div(FiberContext(spec, p, which == HorizontalConnection::berwald ? 4 : 3), z, which);
}

/// Coefficients (c, a, b) of the pullback of a Finsler connection along s;
/// a is the differentiation direction.
inline TensorBlock pullback_connection_coeffs(const SectionPoint& sp, PullbackKind which) {
  const FiberContext& ctx = sp.fiber();
  if (which == PullbackKind::berwald) return ctx.berwald();
  TensorBlock out = ctx.chern_rund();
  if (which == PullbackKind::cartan) {
    const int n = ctx.dim();
    const auto cm = ctx.cartan_mixed();
    const auto& d = sp.D();
    for (int c = 0; c < n; ++c)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          double v = 0.0;
          for (int m = 0; m < n; ++m) v += cm(c, b, m) * d(m, a);
          out(c, a, b) += v;
        }
  }
  return out;
}

inline TensorBlock pullback_connection_coeffs(const LagrangianSpec& spec, const SectionField& s,
                                              std::span<const double> x, PullbackKind which) {
  return pullback_connection_coeffs(SectionPoint(spec, s, x, which == PullbackKind::berwald ? 4 : 3), which);
}

inline TensorBlock pullback_metric_christoffels(const LagrangianSpec& spec, const SectionField& s,
                                                std::span<const double> x) {
  return ComposedFrame(spec, s, x).christoffels();
}

struct TensorComparison {
  TensorBlock lhs;
  TensorBlock rhs;
  double residual = 0.0;  // max-entry, scaled by max(1, max|lhs|, max|rhs|)
};

/// Difference between the Levi-Civita connection of s*g and the pulled-back
/// Chern-Rund connection, against its expression through C and D s:
///   C^c_{ma} D_b s^m + C^c_{mb} D_a s^m - g^{cr} C_{mab} D_r s^m.
inline TensorComparison connection_difference(const SectionPoint& sp, const ComposedFrame& cf) {
  const int n = sp.dim();
  const FiberContext& ctx = sp.fiber();
  TensorComparison out{cf.christoffels() - ctx.chern_rund(), TensorBlock(n, {Valence::up, Valence::down, Valence::down}),
                       0.0};
  const auto c = ctx.cartan_torsion();
  const auto cm = ctx.cartan_mixed();
  const auto gi = ctx.inverse_metric_matrix();
  const auto& d = sp.D();
  for (int g = 0; g < n; ++g)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        double v = 0.0;
        for (int m = 0; m < n; ++m) {
          v += cm(g, m, a) * d(m, b) + cm(g, m, b) * d(m, a);
          for (int r = 0; r < n; ++r) v -= gi(g, r) * c(m, a, b) * d(m, r);
        }
        out.rhs(g, a, b) = v;
      }
  out.residual = normalized_residual(out.lhs, out.rhs);
  return out;
}

inline TensorComparison connection_difference(const LagrangianSpec& spec, const SectionField& s,
                                              std::span<const double> x) {
  return connection_difference(SectionPoint(spec, s, x), ComposedFrame(spec, s, x));
}

inline double connection_difference_residual(const LagrangianSpec& spec, const SectionField& s,
                                             std::span<const double> x) {
  return connection_difference(spec, s, x).residual;
}

/// Trace form: (div of s*g - div of pulled-back Chern-Rund) Y = I(D_Y s) on
/// basis vectors Y.
inline double corollary_residual(const SectionPoint& sp, const ComposedFrame& cf) {
  const int n = sp.dim();
  const auto diff = cf.christoffels() - sp.fiber().chern_rund();
  const auto i = sp.fiber().mean_cartan_contract();
  const auto& d = sp.D();
  double worst = 0.0;
  for (int b = 0; b < n; ++b) {
    double tr = 0.0, id = 0.0;
    for (int a = 0; a < n; ++a) tr += diff(a, a, b);
    for (int m = 0; m < n; ++m) id += i(m) * d(m, b);
    worst = std::max(worst, std::abs(tr - id));
  }
  return worst;
}

/// Pulled-back Chern-Rund derivative of s*Z along basis vectors against the
/// pullback of the horizontal derivative plus the chain term.
inline TensorComparison lemma_chain(const SectionPoint& sp, const ComposedFrame& cf, const FiberVectorField& z) {
  const int n = sp.dim();
  const FiberContext& ctx = sp.fiber();
  const auto gam = ctx.chern_rund();
  const auto sz = cf.pulled_field(z);
  const auto zu = z.upper(ctx);
  const auto& d = sp.D();
  TensorComparison out{TensorBlock(n, {Valence::up, Valence::down}), TensorBlock(n, {Valence::up, Valence::down}), 0.0};
  for (int g = 0; g < n; ++g)
    for (int a = 0; a < n; ++a) {
      double l = sz[g].d(cf.frame().xvar(a));
      double r = ctx.delta(zu[g], a);
      for (int b = 0; b < n; ++b) {
        l += gam(g, a, b) * sz[b].value();
        r += gam(g, b, a) * zu[b].value() + zu[g].d(ctx.frame().yvar(b)) * d(b, a);
      }
      out.lhs(g, a) = l;
      out.rhs(g, a) = r;
    }
  out.residual = normalized_residual(out.lhs, out.rhs);
  return out;
}

inline double lemma_chain_residual(const LagrangianSpec& spec, const FiberVectorField& z, const SectionField& s,
                                   std::span<const double> x) {
  return lemma_chain(SectionPoint(spec, s, x), ComposedFrame(spec, s, x), z).residual;
}

/// Pieces of the pulled-back divergence identity at one base point.
struct DivergencePieces {
  double horizontal = 0.0;   // s*(div^HC Z)
  double mean_cartan = 0.0;  // s*I(D_{s*Z} s)
  double chain = 0.0;        // s*(dZ^m/dy^b) D_m s^b
  double rhs() const { return horizontal + mean_cartan + chain; }
};

inline DivergencePieces divergence_pieces(const SectionPoint& sp, const FiberVectorField& z) {
  const int n = sp.dim();
  const FiberContext& ctx = sp.fiber();
  const auto zu = z.upper(ctx);
  const auto i = ctx.mean_cartan_contract();
  const auto& d = sp.D();
  DivergencePieces p;
  p.horizontal = horizontal_div(ctx, z);
  for (int m = 0; m < n; ++m)
    for (int b = 0; b < n; ++b) {
      p.mean_cartan += i(b) * d(b, m) * zu[m].value();
      p.chain += zu[m].d(ctx.frame().yvar(b)) * d(b, m);
    }
  return p;
}

/// Divergence of s*Z with the Levi-Civita connection of s*g.
inline double pullback_divergence(const ComposedFrame& cf, const FiberVectorField& z) {
  const int n = cf.dim();
  const auto sz = cf.pulled_field(z);
  const auto gam = cf.christoffels();
  double div = 0.0;
  for (int a = 0; a < n; ++a) {
    div += sz[a].d(cf.frame().xvar(a));
    for (int m = 0; m < n; ++m) div += gam(a, a, m) * sz[m].value();
  }
  return div;
}

struct OapResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
  DivergencePieces pieces;
};

inline OapResult divergence_oap(const LagrangianSpec& spec, const FiberVectorField& z, const SectionField& s,
                                std::span<const double> x) {
  const SectionPoint sp(spec, s, x);
  const ComposedFrame cf(spec, s, x);
  OapResult r;
  r.lhs = pullback_divergence(cf, z);
  r.pieces = divergence_pieces(sp, z);
  r.rhs = r.pieces.rhs();
  r.residual = std::abs(r.lhs - r.rhs);
  return r;
}

struct VerticalGradientDiv {
  double form_a = 0.0;  // horizontal divergence of the raised vertical gradient
  double form_b = 0.0;  // vertical divergence of the raised horizontal gradient + I, J terms
  double mean_cartan_term = 0.0;
  double landsberg_term = 0.0;
};

inline VerticalGradientDiv vertical_gradient_div(const FiberContext& ctx, const FiberVectorField& f) {
  if (f.kind != FiberVectorField::Kind::vertical_gradient)
    throw std::invalid_argument("vertical_gradient_div needs a scalar potential");
  const int n = ctx.dim();
  VerticalGradientDiv out;
  out.form_a = horizontal_div(ctx, f);

  const Jet fj = ctx.field_jet(f.scalar, f.params);
  const auto& ginv = ctx.inverse_metric_jets();
  std::vector<Jet> df;
  for (int m = 0; m < n; ++m) df.push_back(ctx.delta_jet(fj, m));
  const auto gi = ctx.inverse_metric_matrix();
  const auto i = ctx.mean_cartan_contract();
  const auto j = ctx.landsberg_trace();
  for (int v = 0; v < n; ++v) {
    Jet h = ginv[v][0] * df[0];
    for (int m = 1; m < n; ++m) h += ginv[v][m] * df[m];
    out.form_b += h.d(ctx.frame().yvar(v));
  }
  for (int m = 0; m < n; ++m) {
    double iu = 0.0, ju = 0.0;
    for (int b = 0; b < n; ++b) {
      iu += gi(m, b) * i(b);
      ju += gi(m, b) * j(b);
    }
    out.mean_cartan_term += 2.0 * iu * df[m].value();
    out.landsberg_term += ju * fj.d(ctx.frame().yvar(m));
  }
  out.form_b += out.mean_cartan_term + out.landsberg_term;
  return out;
}

inline VerticalGradientDiv vertical_gradient_div(const LagrangianSpec& spec, const FiberVectorField& f,
                                                 const FiberPoint& p) {
  return vertical_gradient_div(FiberContext(spec, p, 4), f);
}

}  // namespace finsler
