#pragma once

// Killing and pregeodesic tests for a section s, the chain-term cancellation
// for vertical-gradient fields, and conserved energies on coordinate slices.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "finsler/connections.hpp"
#include "finsler/integration.hpp"

namespace finsler {

/// A hypothesis that a routine relies on does not hold at the input.
class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// g_{db} H_c s^b + g_{cb} H_d s^b + 2 y^b (H_b s^m) C_{cdm} at (x, y), where
/// H is the Chern-Rund covariant derivative of s lifted as a y-independent
/// field. Stored as (c, d).
inline TensorBlock killing_tensor(const LagrangianSpec& spec, const SectionField& s, const FiberPoint& p) {
  const int n = spec.dim;
  const FiberContext ctx(spec, p, 3);
  std::vector<Jet> xj;
  for (int i = 0; i < n; ++i) xj.push_back(Jet::variable(n, 1, i, p.x[i]));
  const auto sj = s.jets(xj);
  const auto g = ctx.metric_matrix();
  const auto gam = ctx.chern_rund();
  const auto c = ctx.cartan_torsion();
  // H_c s^b stored as hs[b][c]
  std::vector<std::vector<double>> hs(n, std::vector<double>(n));
  for (int b = 0; b < n; ++b)
    for (int cc = 0; cc < n; ++cc) {
      double v = sj[b].d(cc);
      for (int m = 0; m < n; ++m) v += gam(b, m, cc) * sj[m].value();
      hs[b][cc] = v;
    }
  std::vector<double> along(n, 0.0);  // y^b H_b s^m
  for (int m = 0; m < n; ++m)
    for (int b = 0; b < n; ++b) along[m] += p.y[b] * hs[m][b];
  TensorBlock out(n, {Valence::down, Valence::down});
  for (int cc = 0; cc < n; ++cc)
    for (int d = 0; d < n; ++d) {
      double v = 0.0;
      for (int b = 0; b < n; ++b) v += g(d, b) * hs[b][cc] + g(cc, b) * hs[b][d];
      for (int m = 0; m < n; ++m) v += 2.0 * along[m] * c(cc, d, m);
      out(cc, d) = v;
    }
  return out;
}

/// Max entry of the Killing tensor at (x, y).
inline double killing_residual(const LagrangianSpec& spec, const SectionField& s, const FiberPoint& p) {
  return killing_tensor(spec, s, p).max_abs();
}

/// C^{ab}_m = g^{ac} g^{bd} C_{cdm}, stored as (a, b, m).
inline TensorBlock cartan_raised(const FiberContext& ctx) {
  const int n = ctx.dim();
  const auto gi = ctx.inverse_metric_matrix();
  const auto cm = ctx.cartan_mixed();  // (a, d, m) = g^{ac} C_{cdm}
  TensorBlock out(n, {Valence::up, Valence::up, Valence::down});
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int m = 0; m < n; ++m) {
        double v = 0.0;
        for (int d = 0; d < n; ++d) v += gi(b, d) * cm(a, d, m);
        out(a, b, m) = v;
      }
  return out;
}

/// D^a s^b + D^b s^a + 2 (D_s s)^m C^{ab}_m at (x, s(x)), stored as (a, b).
inline TensorBlock evaluated_killing_tensor(const SectionPoint& sp) {
  const int n = sp.dim();
  const auto dr = sp.D_raised();
  const auto dss = sp.D_along_s();
  const auto cr = cartan_raised(sp.fiber());
  TensorBlock out(n, {Valence::up, Valence::up});
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double v = dr(a, b) + dr(b, a);
      for (int m = 0; m < n; ++m) v += 2.0 * dss[m] * cr(a, b, m);
      out(a, b) = v;
    }
  return out;
}

inline double evaluated_killing_residual(const SectionPoint& sp) { return evaluated_killing_tensor(sp).max_abs(); }

inline double evaluated_killing_residual(const LagrangianSpec& spec, const SectionField& s,
                                         std::span<const double> x) {
  return evaluated_killing_residual(SectionPoint(spec, s, x));
}

/// Relative distance of D_s s from the line spanned by s.
inline double pregeodesic_defect(const SectionPoint& sp) {
  const auto v = sp.D_along_s();
  const auto& s = sp.s();
  double ss = 0.0, vs = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    ss += s[i] * s[i];
    vs += v[i] * s[i];
    vv += v[i] * v[i];
  }
  if (ss == 0.0) throw std::invalid_argument("pregeodesic defect needs s != 0");
  if (vv == 0.0) return 0.0;
  const double lam = vs / ss;
  double r = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) r += (v[i] - lam * s[i]) * (v[i] - lam * s[i]);
  return std::sqrt(r) / (std::sqrt(vv) + std::sqrt(ss));
}

inline double pregeodesic_defect(const LagrangianSpec& spec, const SectionField& s, std::span<const double> x) {
  return pregeodesic_defect(SectionPoint(spec, s, x));
}

/// Four expressions of the chain term (dZ^m/dy^b) D_m s^b for a raised
/// vertical gradient Z, from the direct form to the one left after using the
/// Killing equation.
struct HudReport {
  double direct = 0.0;     // dZ^m/dy^b D_m s^b
  double split = 0.0;      // (g^{mv} dZ_v/dy^b - 2 C^{mv}_b Z_v) D_m s^b
  double raised = 0.0;     // M_{ab} D^a s^b
  double killing = 0.0;    // -M_{ab} C^{ab}_m (D_s s)^m
  double identity_residual = 0.0;
  double killing_step = 0.0;
  double killing_residual = 0.0;
  double pregeodesic_defect = 0.0;
  bool killing_holds = false;
  bool vanishing_applies = false;  // s pregeodesic, so the value must vanish
  bool vanishes = false;
  double value() const { return killing; }
};

inline HudReport hud_residual(const LagrangianSpec& spec, const FiberVectorField& f, const SectionField& s,
                              std::span<const double> x, double tol = 1e-8) {
  if (f.kind != FiberVectorField::Kind::vertical_gradient)
    throw PreconditionError("the chain-term rewrite needs Z to be a vertical gradient");
  const SectionPoint sp(spec, s, x, 3);
  const FiberContext& ctx = sp.fiber();
  const int n = sp.dim();
  const auto& fr = ctx.frame();
  const auto zu = f.upper(ctx);
  const auto zl = f.lower(ctx);
  const auto gi = ctx.inverse_metric_matrix();
  const auto cr = cartan_raised(ctx);
  const auto cm = ctx.cartan_mixed();
  const auto& d = sp.D();
  const auto dr = sp.D_raised();
  const auto dss = sp.D_along_s();

  HudReport r;
  for (int m = 0; m < n; ++m)
    for (int b = 0; b < n; ++b) {
      r.direct += zu[m].d(fr.yvar(b)) * d(b, m);
      double v = 0.0;
      for (int w = 0; w < n; ++w) v += gi(m, w) * zl[w].d(fr.yvar(b)) - 2.0 * cr(m, w, b) * zl[w].value();
      r.split += v * d(b, m);
    }
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double mab = zl[a].d(fr.yvar(b));
      for (int v = 0; v < n; ++v) mab -= 2.0 * cm(v, a, b) * zl[v].value();
      r.raised += mab * dr(a, b);
      for (int m = 0; m < n; ++m) r.killing -= mab * cr(a, b, m) * dss[m];
    }
  const double scale = std::max(1.0, std::abs(r.direct));
  r.identity_residual = std::max(std::abs(r.direct - r.split), std::abs(r.split - r.raised)) / scale;
  r.killing_step = std::abs(r.raised - r.killing) / scale;
  r.killing_residual = evaluated_killing_residual(sp);
  r.pregeodesic_defect = pregeodesic_defect(sp);
  r.killing_holds = r.killing_residual <= tol;
  r.vanishing_applies = r.pregeodesic_defect <= tol;
  r.vanishes = std::abs(r.killing) <= tol;
  return r;
}

/// Normalized sections: 2 g(D_s s, .) = -d(g(s, s)) once s is Killing.
struct NormalizedKillingReport {
  int points = 0;
  double max_normalization_error = 0.0;  // |g(s, s) + 1|
  double max_killing_residual = 0.0;
  double max_acceleration = 0.0;         // |D_s s|
  double max_identity_residual = 0.0;    // 2 g(D_s s, .) + d(g(s, s))
  bool killing_holds = false;
  bool passed = false;
};

inline NormalizedKillingReport normalized_killing_is_geodesic(const LagrangianSpec& spec, const SectionField& s,
                                                              const std::vector<std::vector<double>>& points,
                                                              double tol = 1e-8) {
  NormalizedKillingReport r;
  const int n = spec.dim;
  for (const auto& x : points) {
    const SectionPoint sp(spec, s, x);
    const ComposedFrame cf(spec, s, x, 2);
    const double gss = 2.0 * sp.fiber().lagrangian();
    const double norm_err = std::abs(gss + 1.0);
    if (norm_err > 1e-10)
      throw PreconditionError("section is not normalized: |g(s, s) + 1| = " + expr::detail::format_double(norm_err));
    r.max_normalization_error = std::max(r.max_normalization_error, norm_err);
    r.max_killing_residual = std::max(r.max_killing_residual, evaluated_killing_residual(sp));
    const auto dss = sp.D_along_s();
    double acc = 0.0;
    for (double v : dss) acc += v * v;
    r.max_acceleration = std::max(r.max_acceleration, std::sqrt(acc));
    const auto& g = sp.fiber().metric_matrix();
    for (int d = 0; d < n; ++d) {
      double v = 2.0 * cf.lagrangian_jet().d(cf.frame().xvar(d));
      for (int b = 0; b < n; ++b) v += 2.0 * g(d, b) * dss[b];
      r.max_identity_residual = std::max(r.max_identity_residual, std::abs(v));
    }
    ++r.points;
  }
  r.killing_holds = r.max_killing_residual <= tol;
  r.passed = r.killing_holds && r.max_acceleration <= tol && r.max_identity_residual <= tol;
  return r;
}

// ---------------------------------------------------------------------------
// energy on coordinate slices

/// Slice {x^axis = level} of `box` (the box range on `axis` is ignored).
struct SliceSpec {
  int axis = 0;
  double level = 0.0;
  Box box;
  std::vector<double> seed;  // Legendre seed; empty means the dual of dx^axis
};

struct EnergyValue {
  double value = 0.0;   // int g_n(n, s*Z) nu with n dual to +dx^axis
  double oracle = 0.0;  // int (s*Z)^axis sqrt|det g|
  int max_iterations = 0;
  double max_ker_residual = 0.0;
  bool skipped = false;
};

inline EnergyValue conserved_energy(const LagrangianSpec& spec, const FiberVectorField& z, const SectionField& s,
                                    const SliceSpec& slice, int order, const FinslerOptions& opt = {}) {
  if (slice.axis < 0 || slice.axis >= spec.dim) throw std::invalid_argument("slice axis out of range");
  Box b = slice.box;
  b.lower[slice.axis] = slice.level;
  b.upper[slice.axis] = slice.level + 1.0;
  // the slice is the lower face of b; its outward flux is minus the energy
  const FaceFlux ff = finsler_face_flux(spec, z, s, b, Face{slice.axis, false}, order, opt, slice.seed);
  EnergyValue e;
  e.value = -ff.normal_flux;
  e.oracle = -ff.oracle_flux;
  e.max_iterations = ff.max_iterations;
  e.max_ker_residual = ff.max_ker_residual;
  e.skipped = ff.skipped;
  return e;
}

struct HypothesisAudit {
  int nodes = 0;
  double max_mean_cartan = 0.0;
  double max_horizontal_divergence = 0.0;
  double max_killing_residual = 0.0;
  double max_pregeodesic_defect = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::vector<std::string> failures;
};

/// Evaluates every hypothesis of the conservation statement at (x, s(x)) on
/// the Gauss nodes of `box`.
inline HypothesisAudit audit_hypotheses(const LagrangianSpec& spec, const FiberVectorField& z, const SectionField& s,
                                        const Box& box, int order, double tol, int threads) {
  const auto nodes = domain_nodes(box, order);
  std::vector<double> mi(nodes.size()), hd(nodes.size()), kr(nodes.size()), pd(nodes.size());
  parallel_for(nodes.size(), threads, [&](std::size_t i) {
    const SectionPoint sp(spec, s, nodes[i].x);
    mi[i] = sp.fiber().mean_cartan_contract().max_abs();
    hd[i] = std::abs(horizontal_div(sp.fiber(), z));
    kr[i] = evaluated_killing_residual(sp);
    pd[i] = pregeodesic_defect(sp);
  });
  HypothesisAudit a;
  a.nodes = static_cast<int>(nodes.size());
  a.tolerance = tol;
  a.max_mean_cartan = *std::max_element(mi.begin(), mi.end());
  a.max_horizontal_divergence = *std::max_element(hd.begin(), hd.end());
  a.max_killing_residual = *std::max_element(kr.begin(), kr.end());
  a.max_pregeodesic_defect = *std::max_element(pd.begin(), pd.end());
  if (z.kind != FiberVectorField::Kind::vertical_gradient) a.failures.push_back("field is not a vertical gradient");
  if (!(a.max_mean_cartan <= tol)) a.failures.push_back("mean Cartan torsion");
  if (!(a.max_horizontal_divergence <= tol)) a.failures.push_back("horizontal divergence");
  if (!(a.max_killing_residual <= tol)) a.failures.push_back("Killing equation");
  if (!(a.max_pregeodesic_defect <= tol)) a.failures.push_back("pregeodesic");
  a.passed = a.failures.empty();
  return a;
}

struct EnergyRow {
  int order = 0;
  EnergyValue first, second;
  double drift = 0.0;            // E(second) - E(first)
  double lateral = 0.0;          // outward flux through the remaining faces
  double corrected_drift = 0.0;  // drift + lateral
  double volume = 0.0;           // integral of div(s*Z) over the slab
  double closure = 0.0;          // volume - (drift + lateral)
};

struct EnergyReport {
  HypothesisAudit audit;
  bool forced = false;
  double tolerance = 1e-7;
  std::vector<EnergyRow> rows;
  bool passed = false;  // |corrected drift| <= tolerance at the finest order
};

struct EnergyOptions {
  FinslerOptions finsler;  // seed scale, threads, force
  double audit_tolerance = 1e-7;
  double drift_tolerance = 1e-7;
  int audit_order = 4;
};

inline EnergyReport two_slice_drift(const LagrangianSpec& spec, const FiberVectorField& z, const SectionField& s,
                                    const SliceSpec& first, const SliceSpec& second, const std::vector<int>& orders,
                                    const EnergyOptions& opt = {}) {
  if (first.axis != second.axis) throw std::invalid_argument("slices must share an axis");
  if (!(first.level < second.level)) throw std::invalid_argument("slice levels must increase");
  if (orders.empty()) throw std::invalid_argument("no quadrature orders given");
  const int axis = first.axis;
  Box slab = first.box;
  slab.lower[axis] = first.level;
  slab.upper[axis] = second.level;
  slab.validate();
  if (slab.dim() != spec.dim) throw std::invalid_argument("slice box dimension does not match the Lagrangian");

  EnergyReport rep;
  rep.forced = opt.finsler.force;
  rep.tolerance = opt.drift_tolerance;
  rep.audit = audit_hypotheses(spec, z, s, slab, opt.audit_order, opt.audit_tolerance, opt.finsler.threads);
  if (!rep.audit.passed && !opt.finsler.force) {
    std::string what;
    for (const auto& f : rep.audit.failures) what += (what.empty() ? "" : ", ") + f;
    throw GateRefused("conservation hypotheses fail: " + what);
  }

  for (int order : orders) {
    EnergyRow row;
    row.order = order;
    row.first = conserved_energy(spec, z, s, first, order, opt.finsler);
    row.second = conserved_energy(spec, z, s, second, order, opt.finsler);
    row.drift = row.second.value - row.first.value;
    for (const Face& f : faces_of(slab)) {
      if (f.axis == axis) continue;
      row.lateral += quad_face(
          [&](const std::vector<double>& x) {
            const FiberContext ctx(spec, FiberPoint{x, s.value(x)}, 2);
            return f.sign() * std::sqrt(ctx.abs_det_metric()) * z.value(ctx)[f.axis];
          },
          slab, f, order, opt.finsler.threads);
    }
    row.corrected_drift = row.drift + row.lateral;
    row.volume = quad_domain(
        [&](const std::vector<double>& x) {
          const SectionPoint sp(spec, s, x);
          return divergence_pieces(sp, z).rhs() * std::sqrt(sp.fiber().abs_det_metric());
        },
        slab, order, opt.finsler.threads);
    row.closure = row.volume - row.corrected_drift;
    rep.rows.push_back(row);
  }
  rep.passed = std::abs(rep.rows.back().corrected_drift) <= opt.drift_tolerance;
  return rep;
}

}  // namespace finsler
