#pragma once

// Finslerian normals via the Legendre map, induced boundary densities, and
// the two integral divergence checks on coordinate boxes.
//
// Face conventions. A face of a box carries the outward conormal
// sigma dx^i (sigma = +1 on the upper face). The Finslerian normal n of a face
// solves g_n(n, .) = -lambda sigma dx^i with lambda > 0, which makes the
// induced density nu = rho / (-g_n(n, X_out)) positive for the outward
// coordinate vector X_out = sigma e_i. With this choice
//     -g_n(n, Z) nu = sigma rho Z^i = i_Z mu   on the face,
// which is the independent oracle used for the boundary side.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "finsler/connections.hpp"
#include "finsler/quadrature.hpp"
#include "finsler/tensors.hpp"

namespace finsler {

class LegendreError : public std::runtime_error {
 public:
  LegendreError(const std::string& msg, std::vector<double> last) : std::runtime_error(msg), last_(std::move(last)) {}
  const std::vector<double>& last_iterate() const { return last_; }

 private:
  std::vector<double> last_;
};

/// Theorem preconditions that do not hold (mean Cartan torsion, audits).
class GateRefused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline Eigen::VectorXd to_vec(std::span<const double> v) {
  Eigen::VectorXd out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out(i) = v[i];
  return out;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

/// l(v) = g_v(v, .).
inline std::vector<double> legendre_map(const LagrangianSpec& spec, std::span<const double> x, std::span<const double> v) {
  const FiberContext ctx(spec, FiberPoint{{x.begin(), x.end()}, {v.begin(), v.end()}}, 2);
  return detail::to_std(ctx.metric_matrix() * detail::to_vec(v));
}

struct LegendreSolution {
  std::vector<double> v;
  int iterations = 0;
  double residual = 0.0;  // |l(v) - omega| / |omega|
};

/// Newton iteration on l(v) = omega with Jacobian g_v (the Cartan term drops
/// since C(v, ., .) = 0). Steps that leave the admissible cone are halved.
inline LegendreSolution legendre_invert(const LagrangianSpec& spec, std::span<const double> x,
                                        std::span<const double> omega, std::span<const double> seed,
                                        double tol = 1e-12, int max_iter = 50) {
  const std::vector<double> xv(x.begin(), x.end());
  const Eigen::VectorXd w = detail::to_vec(omega);
  const double wn = w.norm();
  if (wn == 0.0) throw std::invalid_argument("legendre_invert needs a nonzero covector");
  Eigen::VectorXd v = detail::to_vec(seed);
  if (!spec.admissible(xv, detail::to_std(v)))
    throw LegendreError("Newton seed is not admissible", detail::to_std(v));

  auto eval = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& g, Eigen::VectorXd& f) {
    const FiberContext ctx(spec, FiberPoint{xv, detail::to_std(p)}, 2);
    g = ctx.metric_matrix();
    f = g * p - w;
  };
  Eigen::MatrixXd g;
  Eigen::VectorXd f;
  eval(v, g, f);
  for (int it = 0; it <= max_iter; ++it) {
    if (f.norm() <= tol * wn) return {detail::to_std(v), it, f.norm() / wn};
    if (it == max_iter) break;
    const Eigen::VectorXd step = -g.fullPivLu().solve(f);
    double t = 1.0;
    bool moved = false;
    for (int half = 0; half < 40; ++half, t *= 0.5) {
      const Eigen::VectorXd trial = v + t * step;
      if (!spec.admissible(xv, detail::to_std(trial))) continue;
      Eigen::MatrixXd gt;
      Eigen::VectorXd ft;
      try {
        eval(trial, gt, ft);
      } catch (const DegenerateMetric&) {
        continue;
      }
      // accept full steps unconditionally, damped ones only if they help
      if (half == 0 || ft.norm() < f.norm()) {
        v = trial;
        g = gt;
        f = ft;
        moved = true;
        break;
      }
    }
    if (!moved) throw LegendreError("Newton step cannot stay in the admissible cone", detail::to_std(v));
  }
  throw LegendreError("Legendre inversion did not converge in " + std::to_string(max_iter) + " iterations",
                      detail::to_std(v));
}

struct FaceNormal {
  std::vector<double> n;        // after the optional Lorentzian normalization
  std::vector<double> n_newton; // as returned by Newton
  std::vector<double> covector; // g_n(n, .)
  double gnn = 0.0;             // g_n(n, n) before normalization
  bool normalized = false;
  int iterations = 0;
  double ker_residual = 0.0;    // max |g_n(n, e_j)| over face-tangent e_j, relative to |g_n(n, .)|
};

/// Target covector -scale * sigma dx^axis of a face.
inline std::vector<double> face_covector(int dim, const Face& face, double scale = 1.0) {
  std::vector<double> w(dim, 0.0);
  w[face.axis] = -scale * face.sign();
  return w;
}

/// g(x, y)^{-1} omega.
inline std::vector<double> dual_seed(const LagrangianSpec& spec, std::span<const double> x, std::span<const double> y,
                                     std::span<const double> omega) {
  const FiberContext ctx(spec, FiberPoint{{x.begin(), x.end()}, {y.begin(), y.end()}}, 2);
  return detail::to_std(ctx.metric_matrix().fullPivLu().solve(detail::to_vec(omega)));
}

inline FaceNormal face_normal(const LagrangianSpec& spec, const Face& face, std::span<const double> x,
                              std::span<const double> seed, double scale = 1.0, bool normalize = true) {
  const int n = spec.dim;
  const auto w = face_covector(n, face, scale);
  const auto sol = legendre_invert(spec, x, w, seed);
  FaceNormal out;
  out.n_newton = sol.v;
  out.n = sol.v;
  out.iterations = sol.iterations;
  const FiberContext ctx(spec, FiberPoint{{x.begin(), x.end()}, sol.v}, 2);
  const Eigen::VectorXd nv = detail::to_vec(sol.v);
  out.gnn = nv.dot(ctx.metric_matrix() * nv);
  if (normalize && ctx.signature().lorentzian() && out.gnn < 0.0) {
    const double lam = 1.0 / std::sqrt(-out.gnn);
    for (double& c : out.n) c *= lam;
    out.normalized = true;
  }
  // g is 0-homogeneous, so the covector at the rescaled n is a rescaling
  const Eigen::VectorXd cov = ctx.metric_matrix() * detail::to_vec(out.n);
  out.covector = detail::to_std(cov);
  double ker = 0.0;
  for (int j = 0; j < n; ++j)
    if (j != face.axis) ker = std::max(ker, std::abs(cov(j)));
  out.ker_residual = ker / cov.cwiseAbs().maxCoeff();
  return out;
}

/// Density of nu = i_X mu / (-g_n(n, X)) in face Lebesgue measure for
/// transverse X (default: the outward coordinate vector). `rho` is the
/// coordinate density of mu.
inline double induced_volume_weight(std::span<const double> covector, const Face& face, double rho,
                                    std::span<const double> tangent_shift = {}) {
  // i_X mu restricted to the face only sees the transverse component of X
  double gx = covector[face.axis] * face.sign();
  for (std::size_t j = 0; j < tangent_shift.size(); ++j)
    if (static_cast<int>(j) != face.axis) gx += covector[j] * tangent_shift[j];
  if (gx == 0.0) throw std::runtime_error("transverse field is tangent to the normal's kernel");
  return rho / (-gx);
}

/// sqrt|det g(x, y)|.
inline double volume_density(const LagrangianSpec& spec, std::span<const double> x, std::span<const double> y) {
  return std::sqrt(FiberContext(spec, FiberPoint{{x.begin(), x.end()}, {y.begin(), y.end()}}, 2).abs_det_metric());
}

// ---------------------------------------------------------------------------
// Rund's theorem: everything from the Riemannian metric h = s*g.

struct RundRow {
  int order = 0;
  double volume = 0.0;
  double boundary = 0.0;
  double oracle = 0.0;
  double residual = 0.0;  // |volume - boundary|
  std::vector<double> face_flux;
};

struct RundReport {
  std::vector<RundRow> rows;
  bool monotone = true;
};

/// Pointwise Rund boundary integrand h(Z, n^R) nu^R on a face.
inline double rund_boundary_integrand(const Eigen::MatrixXd& h, std::span<const double> z, const Face& face) {
  const int n = static_cast<int>(h.rows());
  const Eigen::MatrixXd hi = h.inverse();
  Eigen::VectorXd conormal = Eigen::VectorXd::Zero(n);
  conormal(face.axis) = face.sign();
  const Eigen::VectorXd nr = hi * conormal / std::sqrt(std::abs(hi(face.axis, face.axis)));
  Eigen::MatrixXd hf(n - 1, n - 1);
  for (int a = 0, ra = 0; a < n; ++a) {
    if (a == face.axis) continue;
    for (int b = 0, rb = 0; b < n; ++b) {
      if (b == face.axis) continue;
      hf(ra, rb++) = h(a, b);
    }
    ++ra;
  }
  const double nu = n > 1 ? std::sqrt(std::abs(hf.determinant())) : 1.0;
  return detail::to_vec(z).dot(h * nr) * nu;
}

/// Residual sequence is "monotone" if each residual does not exceed the
/// previous one, allowing a roundoff floor.
inline bool monotone_decay(const std::vector<double>& r, double floor = 1e-13) {
  for (std::size_t i = 1; i < r.size(); ++i)
    if (r[i] > r[i - 1] && r[i] > floor) return false;
  return true;
}

inline RundReport verify_divergence_rund(const LagrangianSpec& spec, const FiberVectorField& z, const SectionField& s,
                                         const Box& box, const std::vector<int>& orders, int threads = 1) {
  box.validate();
  if (box.dim() != spec.dim) throw std::invalid_argument("box dimension does not match the Lagrangian");
  RundReport rep;
  std::vector<double> res;
  for (int order : orders) {
    RundRow row;
    row.order = order;
    row.volume = quad_domain(
        [&](const std::vector<double>& x) {
          const SectionPoint sp(spec, s, x);
          return divergence_pieces(sp, z).rhs() * std::sqrt(sp.fiber().abs_det_metric());
        },
        box, order, threads);
    for (const Face& face : faces_of(box)) {
      double rund = 0.0, oracle = 0.0;
      const auto nodes = face_nodes(box, face, order);
      std::vector<double> rv(nodes.size()), ov(nodes.size());
      parallel_for(nodes.size(), threads, [&](std::size_t i) {
        const auto& x = nodes[i].x;
        const FiberContext ctx(spec, FiberPoint{x, s.value(x)}, 2);
        const auto zv = z.value(ctx);
        rv[i] = nodes[i].weight * rund_boundary_integrand(ctx.metric_matrix(), zv, face);
        ov[i] = nodes[i].weight * face.sign() * std::sqrt(ctx.abs_det_metric()) * zv[face.axis];
      });
      rund = pairwise_sum(rv);
      oracle = pairwise_sum(ov);
      row.face_flux.push_back(rund);
      row.boundary += rund;
      row.oracle += oracle;
    }
    row.residual = std::abs(row.volume - row.boundary);
    res.push_back(row.residual);
    rep.rows.push_back(std::move(row));
  }
  rep.monotone = monotone_decay(res);
  return rep;
}

// ---------------------------------------------------------------------------
// Finslerian theorem: Legendre normals and induced densities.

struct FinslerOptions {
  std::vector<std::vector<double>> face_seeds;  // one per face (lower/upper by axis) or empty for defaults
  double seed_scale = 1.0;
  bool force = false;
  double gate_tolerance = 1e-7;
  int threads = 1;
};

struct FaceFlux {
  Face face;
  bool skipped = false;              // s*Z vanishes at every node
  double normal_flux = 0.0;          // -int g_n(n, Z) nu, normalized n
  double newton_scale_flux = 0.0;    // same with the Newton-scale n
  double oracle_flux = 0.0;          // int i_Z mu
  int max_iterations = 0;
  double max_ker_residual = 0.0;
  double max_transverse_spread = 0.0;
  bool any_normalized = false;
};

struct FinslerRow {
  int order = 0;
  double volume = 0.0;
  double boundary = 0.0;
  double boundary_newton_scale = 0.0;
  double oracle = 0.0;
  double volume_vs_boundary = 0.0;
  double volume_vs_oracle = 0.0;
  double boundary_vs_oracle = 0.0;
  double max_mean_cartan = 0.0;
  std::vector<FaceFlux> faces;
};

struct FinslerReport {
  double gate_max_mean_cartan = 0.0;
  bool gate_passed = true;
  bool forced = false;
  double det_spread = 0.0;  // y-independence of sqrt|det g|
  std::vector<FinslerRow> rows;
  bool monotone = true;
};

/// Largest relative spread of sqrt|det g| between s(x) and perturbed fiber
/// points at the given nodes.
inline double determinant_spread(const LagrangianSpec& spec, const SectionField& s,
                                 const std::vector<QuadNode>& nodes, int threads) {
  std::vector<double> out(nodes.size(), 0.0);
  parallel_for(nodes.size(), threads, [&](std::size_t i) {
    const auto& x = nodes[i].x;
    const auto sv = s.value(x);
    const double r0 = volume_density(spec, x, sv);
    double scale = 0.0;
    for (double c : sv) scale = std::max(scale, std::abs(c));
    double lo = r0, hi = r0;
    for (int k = 0; k < 3; ++k) {
      auto y = sv;
      y[k % spec.dim] += (k == 1 ? -0.05 : 0.05) * scale;
      y[(k + 1) % spec.dim] += 0.03 * scale;
      if (!spec.admissible(x, y)) continue;
      try {
        const double r = volume_density(spec, x, y);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      } catch (const DegenerateMetric&) {
      }
    }
    out[i] = (hi - lo) / std::abs(r0);
  });
  return out.empty() ? 0.0 : *std::max_element(out.begin(), out.end());
}

inline double max_mean_cartan_at(const LagrangianSpec& spec, const SectionField& s, const std::vector<QuadNode>& nodes,
                                 int threads) {
  std::vector<double> out(nodes.size());
  parallel_for(nodes.size(), threads, [&](std::size_t i) {
    const auto& x = nodes[i].x;
    out[i] = FiberContext(spec, FiberPoint{x, s.value(x)}, 3).mean_cartan_contract().max_abs();
  });
  return out.empty() ? 0.0 : *std::max_element(out.begin(), out.end());
}

/// Fluxes of s*Z through one face with Legendre normals, plus the i_Z mu
/// oracle.
inline FaceFlux finsler_face_flux(const LagrangianSpec& spec, const FiberVectorField& z, const SectionField& s,
                                  const Box& box, const Face& face, int order, const FinslerOptions& opt,
                                  std::span<const double> seed) {
  const int n = spec.dim;
  FaceFlux ff;
  ff.face = face;
  const auto nodes = face_nodes(box, face, order);
  std::vector<std::vector<double>> zv(nodes.size());
  std::vector<double> ov(nodes.size());
  parallel_for(nodes.size(), opt.threads, [&](std::size_t i) {
    const auto& x = nodes[i].x;
    const FiberContext ctx(spec, FiberPoint{x, s.value(x)}, 2);
    zv[i] = z.value(ctx);
    ov[i] = nodes[i].weight * face.sign() * std::sqrt(ctx.abs_det_metric()) * zv[i][face.axis];
  });
  ff.oracle_flux = pairwise_sum(ov);
  bool all_zero = true;
  for (const auto& v : zv)
    for (double c : v) all_zero &= (c == 0.0);
  if (all_zero) {
    ff.skipped = true;
    return ff;
  }

  std::vector<double> fv(nodes.size()), nv(nodes.size()), spread(nodes.size()), ker(nodes.size());
  std::vector<int> iters(nodes.size());
  std::vector<char> normed(nodes.size());
  parallel_for(nodes.size(), opt.threads, [&](std::size_t i) {
    const auto& x = nodes[i].x;
    std::vector<double> sd;
    if (!seed.empty()) {
      sd.assign(seed.begin(), seed.end());
    } else {
      sd = dual_seed(spec, x, s.value(x), face_covector(n, face));
    }
    for (double& c : sd) c *= opt.seed_scale;
    const FaceNormal fn = face_normal(spec, face, x, sd, opt.seed_scale);
    const double rho = volume_density(spec, x, fn.n);
    const double w = induced_volume_weight(fn.covector, face, rho);
    double gz = 0.0;
    for (int a = 0; a < n; ++a) gz += fn.covector[a] * zv[i][a];
    fv[i] = -nodes[i].weight * gz * w;

    // Newton-scale normal: covector and weight both rescale
    const double lam = fn.normalized ? std::sqrt(-fn.gnn) : 1.0;
    std::vector<double> cov_newton = fn.covector;
    for (double& c : cov_newton) c *= lam;
    const double w_newton = induced_volume_weight(cov_newton, face, rho);
    double gzn = 0.0;
    for (int a = 0; a < n; ++a) gzn += cov_newton[a] * zv[i][a];
    nv[i] = -nodes[i].weight * gzn * w_newton;

    // transverse-field independence: X_out + 0.3 (sum of tangent vectors)
    std::vector<double> shift(n, 0.3);
    const double w_shift = induced_volume_weight(fn.covector, face, rho, shift);
    spread[i] = std::abs(w_shift - w) / std::abs(w);
    ker[i] = fn.ker_residual;
    iters[i] = fn.iterations;
    normed[i] = fn.normalized;
  });
  ff.normal_flux = pairwise_sum(fv);
  ff.newton_scale_flux = pairwise_sum(nv);
  ff.max_iterations = *std::max_element(iters.begin(), iters.end());
  ff.max_ker_residual = *std::max_element(ker.begin(), ker.end());
  ff.max_transverse_spread = *std::max_element(spread.begin(), spread.end());
  ff.any_normalized = std::any_of(normed.begin(), normed.end(), [](char c) { return c != 0; });
  return ff;
}

inline FinslerReport verify_divergence_finsler(const LagrangianSpec& spec, const FiberVectorField& z,
                                               const SectionField& s, const Box& box, const std::vector<int>& orders,
                                               const FinslerOptions& opt = {}) {
  box.validate();
  if (box.dim() != spec.dim) throw std::invalid_argument("box dimension does not match the Lagrangian");
  if (!opt.face_seeds.empty() && opt.face_seeds.size() != static_cast<std::size_t>(2 * spec.dim))
    throw std::invalid_argument("face seeds must list one vector per face");
  FinslerReport rep;
  rep.forced = opt.force;

  // applicability gate on the nodes of the first order
  const auto gate_nodes = domain_nodes(box, orders.front());
  rep.gate_max_mean_cartan = max_mean_cartan_at(spec, s, gate_nodes, opt.threads);
  rep.gate_passed = rep.gate_max_mean_cartan <= opt.gate_tolerance;
  if (!rep.gate_passed && !opt.force)
    throw GateRefused("mean Cartan torsion does not vanish (max |I| = " +
                      expr::detail::format_double(rep.gate_max_mean_cartan) + "); the Finslerian theorem does not apply");
  rep.det_spread = determinant_spread(spec, s, gate_nodes, opt.threads);

  std::vector<double> res;
  for (int order : orders) {
    FinslerRow row;
    row.order = order;
    const auto nodes = domain_nodes(box, order);
    std::vector<double> vv(nodes.size()), iv(nodes.size());
    parallel_for(nodes.size(), opt.threads, [&](std::size_t i) {
      const SectionPoint sp(spec, s, nodes[i].x);
      const auto p = divergence_pieces(sp, z);
      vv[i] = nodes[i].weight * (p.horizontal + p.chain) * std::sqrt(sp.fiber().abs_det_metric());
      iv[i] = sp.fiber().mean_cartan_contract().max_abs();
    });
    row.volume = pairwise_sum(vv);
    row.max_mean_cartan = *std::max_element(iv.begin(), iv.end());
    const auto faces = faces_of(box);
    for (std::size_t k = 0; k < faces.size(); ++k) {
      const std::span<const double> seed =
          opt.face_seeds.empty() ? std::span<const double>() : std::span<const double>(opt.face_seeds[k]);
      FaceFlux ff = finsler_face_flux(spec, z, s, box, faces[k], order, opt, seed);
      row.boundary += ff.normal_flux;
      row.boundary_newton_scale += ff.newton_scale_flux;
      row.oracle += ff.oracle_flux;
      row.faces.push_back(std::move(ff));
    }
    row.volume_vs_boundary = std::abs(row.volume - row.boundary);
    row.volume_vs_oracle = std::abs(row.volume - row.oracle);
    row.boundary_vs_oracle = std::abs(row.boundary - row.oracle);
    res.push_back(row.volume_vs_boundary);
    rep.rows.push_back(std::move(row));
  }
  rep.monotone = monotone_decay(res);
  return rep;
}

}  // namespace finsler
