#include <gtest/gtest.h>

#include <chrono>
#include <cstring>
#include <cmath>
#include <numbers>
#include <random>

#include "finsler/integration.hpp"
#include "support/random_fields.hpp"
#include "support/sampling.hpp"

using namespace finsler;
namespace ft = finsler::testing;

namespace {

Box unit_box(int n) { return Box{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)}; }

// affine sphere scenario with a field that vanishes on the lateral faces
struct AffineScenario {
  LagrangianSpec spec = ft::affine_sphere("exp(x0)");
  SectionField s = SectionField::parse({"1 + 0.1*x1", "0.1 + 0.05*sin(x0 + x1)", "-0.1 + 0.05*x3", "0.1*cos(x2)"}, 4);
  FiberVectorField z = FiberVectorField::from_components(
      {"x1*(1 - x1)*x2*(1 - x2)*x3*(1 - x3)*(1 + y1^2/(1 + y0^2) + x0)",
       "x1*(1 - x1)*x2*(1 - x2)*x3*(1 - x3)*(y0*y2 + sin(x0))", "x1*(1 - x1)*x2*(1 - x2)*x3*(1 - x3)*x1*y3",
       "x1*(1 - x1)*x2*(1 - x2)*x3*(1 - x3)*(y1 + x2)"},
      4);
  Box box{{0.0, 0.0, 0.0, 0.0}, {0.5, 1.0, 1.0, 1.0}};
};

}  // namespace

TEST(Quadrature, ExactnessAndAccuracy) {
  auto one = [](const std::vector<double>&) { return 1.0; };
  EXPECT_DOUBLE_EQ(quad_domain(one, unit_box(2), 3), 1.0);
  auto x7 = [](const std::vector<double>& x) { return std::pow(x[0], 7); };
  EXPECT_NEAR(quad_domain(x7, unit_box(1), 4), 0.125, 1e-16);
  auto sn = [](const std::vector<double>& x) { return std::sin(x[0]); };
  EXPECT_NEAR(quad_domain(sn, Box{{0.0}, {std::numbers::pi}}, 12), 2.0, 1e-10);
  EXPECT_THROW(quad_domain(one, Box{{0.0}, {0.0}}, 4), std::invalid_argument);
}

TEST(Quadrature, GaussRuleIsSymmetricAndNormalized) {
  for (int n : {1, 2, 5, 12, 20}) {
    const auto& r = gauss_rule(n);
    double w = 0.0;
    for (int i = 0; i < n; ++i) {
      w += r.weights[i];
      EXPECT_EQ(r.nodes[i], -r.nodes[n - 1 - i]);
    }
    EXPECT_NEAR(w, 2.0, 1e-14);
  }
}

TEST(Quadrature, ThreadCountDoesNotChangeBits) {
  auto f = [](const std::vector<double>& x) { return std::exp(x[0] * x[1]) / (1.3 - x[2]); };
  const double a = quad_domain(f, unit_box(3), 9, 1);
  const double b = quad_domain(f, unit_box(3), 9, 8);
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
}

TEST(Quadrature, BoundaryOfConstantFieldFluxIsZero) {
  auto flux = [](const Face& f, const std::vector<double>&) { return f.axis == 1 ? f.sign() : 0.0; };
  EXPECT_NEAR(quad_boundary(flux, unit_box(3), 4), 0.0, 1e-15);
}

TEST(Legendre, MapExamples) {
  const auto mink = build_lagrangian("minkowski", 4);
  const std::vector<double> x(4, 0.0);
  const auto w = legendre_map(mink, x, std::vector<double>{1, 0, 0, 0});
  EXPECT_EQ(w, (std::vector<double>{-1, 0, 0, 0}));

  std::mt19937_64 rng(1);
  for (const auto& spec : {ft::quartic(3), ft::affine_sphere("exp(x0)"), ft::warped_quartic()}) {
    for (int k = 0; k < 10; ++k) {
      const FiberPoint p = ft::sample_for(spec, rng);
      const auto l1 = legendre_map(spec, p.x, p.y);
      std::vector<double> y2 = p.y;
      for (double& c : y2) c *= 2;
      const auto l2 = legendre_map(spec, p.x, y2);
      const FiberContext ctx(spec, p, 2);
      for (int a = 0; a < spec.dim; ++a) {
        EXPECT_NEAR(l2[a], 2 * l1[a], 1e-10 * std::max(1.0, std::abs(l1[a])));
        EXPECT_NEAR(l1[a], ctx.lagrangian_jet().d(ctx.frame().yvar(a)), 1e-10 * std::max(1.0, std::abs(l1[a])));
      }
    }
  }
}

TEST(Legendre, InversionRoundTrip) {
  const auto mink = build_lagrangian("minkowski", 4);
  const std::vector<double> x(4, 0.0);
  const auto sol = legendre_invert(mink, x, std::vector<double>{-1, 0, 0, 0}, std::vector<double>{0.9, 0, 0, 0});
  EXPECT_NEAR(sol.v[0], 1.0, 1e-15);
  for (int i = 1; i < 4; ++i) EXPECT_EQ(sol.v[i], 0.0);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  int done = 0;
  for (const auto& spec : {ft::quartic(3), ft::affine_sphere("exp(x0)"), ft::warped_quartic(), ft::quartic(4)}) {
    for (int k = 0; k < 13; ++k, ++done) {
      const FiberPoint p = ft::sample_for(spec, rng);
      const auto w = legendre_map(spec, p.x, p.y);
      std::vector<double> seed = p.y;
      for (double& c : seed) c *= 1.0 + u(rng);
      const auto r = legendre_invert(spec, p.x, w, seed);
      const auto back = legendre_map(spec, p.x, r.v);
      double wn = 0.0;
      for (double c : w) wn = std::max(wn, std::abs(c));
      for (int a = 0; a < spec.dim; ++a) EXPECT_NEAR(back[a], w[a], 1e-10 * wn);
      EXPECT_LE(r.iterations, 50);
    }
  }
  EXPECT_GE(done, 50);
}

TEST(Legendre, TwoDimensionalPreimagesDependOnSeed) {
  LagrangianParams lp;
  lp.expression = "(abs(y0)/y0)*(-y0^2 + y1^2)/2";
  lp.nonzero = {"y0"};
  const auto spec = build_lagrangian("custom_expression", 2, lp);
  const std::vector<double> x{0.0, 0.0}, w{-1.0, 0.3};
  const auto a = legendre_invert(spec, x, w, std::vector<double>{0.8, 0.1});
  const auto b = legendre_invert(spec, x, w, std::vector<double>{-0.8, -0.1});
  EXPECT_NEAR(a.v[0], 1.0, 1e-12);
  EXPECT_NEAR(a.v[1], 0.3, 1e-12);
  EXPECT_NEAR(b.v[0], -1.0, 1e-12);
  EXPECT_NEAR(b.v[1], -0.3, 1e-12);
  for (const auto& v : {a.v, b.v}) {
    const auto back = legendre_map(spec, x, v);
    EXPECT_NEAR(back[0], w[0], 1e-12);
    EXPECT_NEAR(back[1], w[1], 1e-12);
  }
}

TEST(Legendre, InadmissibleSeedIsReported) {
  const auto spec = ft::affine_sphere("1");
  const std::vector<double> x(4, 0.0);
  try {
    legendre_invert(spec, x, std::vector<double>{-1, 0, 0, 0}, std::vector<double>{0, 1, 0, 0});
    FAIL();
  } catch (const LegendreError& e) {
    EXPECT_EQ(e.last_iterate().size(), 4u);
  }
}

TEST(FaceNormals, MinkowskiAndFriedmann) {
  const auto mink = build_lagrangian("minkowski", 4);
  const std::vector<double> x{0.5, 0.1, 0.2, 0.3};
  const auto fn = face_normal(mink, Face{0, true}, x, std::vector<double>{0.7, 0.1, 0, 0});
  EXPECT_NEAR(fn.n[0], 1.0, 1e-14);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(fn.n[i], 0.0, 1e-14);
  EXPECT_TRUE(fn.normalized);
  EXPECT_LE(fn.ker_residual, 1e-14);
  const auto lower = face_normal(mink, Face{0, false}, x, std::vector<double>{-0.7, 0.1, 0, 0});
  EXPECT_NEAR(lower.n[0], -1.0, 1e-14);

  const auto fr = ft::friedmann_quadratic("exp(x0)");
  const auto fn2 = face_normal(fr, Face{0, true}, x, std::vector<double>{1.0, 0.0, 0.2, 0.0});
  EXPECT_NEAR(fn2.n[0], 1.0, 1e-12);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(fn2.n[i], 0.0, 1e-12);
}

TEST(FaceNormals, AffineSphereKernelAndDensities) {
  const auto spec = ft::affine_sphere("exp(x0)");
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    const std::vector<double> x{u(rng), u(rng), u(rng), u(rng)};
    for (const Face f : {Face{0, true}, Face{0, false}}) {
      const std::vector<double> seed{f.upper ? 1.0 : -1.0, 0.05, 0.0, 0.1};
      const auto fn = face_normal(spec, f, x, seed);
      EXPECT_LE(fn.ker_residual, 1e-10);
      EXPECT_TRUE(fn.normalized);
      const double rho = volume_density(spec, x, fn.n);
      const double w = induced_volume_weight(fn.covector, f, rho);
      EXPECT_GT(w, 0.0);
      // with g_n(n, n) = -1 the density is i_n mu
      EXPECT_NEAR(w, f.sign() * rho * fn.n[0], 1e-10 * w);
      // transverse field independence
      const std::vector<double> shift{0.0, 0.4, -0.2, 0.7};
      EXPECT_NEAR(induced_volume_weight(fn.covector, f, rho, shift), w, 1e-12 * w);
      // n -> 3n: covector triples, weight drops by 3, g_n(n, Z) nu invariant
      std::vector<double> cov3 = fn.covector;
      for (double& c : cov3) c *= 3;
      const double w3 = induced_volume_weight(cov3, f, rho);
      EXPECT_NEAR(w3, w / 3, 1e-14 * w);
      const std::vector<double> z{0.3, -1.2, 0.5, 2.0};
      double g1 = 0.0, g3 = 0.0;
      for (int a = 0; a < 4; ++a) {
        g1 += fn.covector[a] * z[a];
        g3 += cov3[a] * z[a];
      }
      EXPECT_NEAR(g1 * w, g3 * w3, 1e-12 * std::abs(g1 * w));
    }
  }
}

TEST(FaceNormals, MinkowskiUnitWeight) {
  const auto mink = build_lagrangian("minkowski", 4);
  const std::vector<double> x{0.5, 0.1, 0.2, 0.3};
  const auto fn = face_normal(mink, Face{0, true}, x, std::vector<double>{1, 0, 0, 0});
  EXPECT_DOUBLE_EQ(induced_volume_weight(fn.covector, Face{0, true}, 1.0), 1.0);
}

TEST(Rund, MinkowskiLinearField) {
  const auto spec = build_lagrangian("minkowski", 4);
  const auto s = SectionField::parse({"1", "0.2", "0", "0"}, 4);
  const auto z = FiberVectorField::from_components({"0", "x1", "0", "0"}, 4);
  const auto rep = verify_divergence_rund(spec, z, s, unit_box(4), {2});
  EXPECT_NEAR(rep.rows[0].volume, 1.0, 1e-14);
  EXPECT_NEAR(rep.rows[0].boundary, 1.0, 1e-14);
}

TEST(Rund, FriedmannIsClassical) {
  const auto spec = ft::friedmann_quadratic("exp(x0)");
  const auto s = SectionField::parse({"1", "0", "0", "0"}, 4);
  const auto z = FiberVectorField::from_components({"x0*x1 + 1", "x2^2 - x0", "x1*x3", "x0^3"}, 4);
  const auto rep = verify_divergence_rund(spec, z, s, unit_box(4), {6});
  EXPECT_LE(rep.rows[0].residual, 1e-8);
  EXPECT_NEAR(rep.rows[0].boundary, rep.rows[0].oracle, 1e-12);
}

TEST(Rund, QuarticSelfConvergence) {
  const auto spec = ft::quartic(3);
  const auto s = SectionField::parse({"0.6 + 0.1*sin(x1 + x2)", "1 + 0.1*x0*x2", "1 + 0.05*cos(2*x0)"}, 3);
  const auto z = FiberVectorField::from_components(
      {"y1*exp(x0)/(1.25 - x1)", "y0*y2/(1.3 - x2) + x0", "sin(3*x0)*y1^2/(1.2 - x1*x2)"}, 3);
  const auto rep = verify_divergence_rund(spec, z, s, unit_box(3), {4, 8, 12});
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_TRUE(rep.monotone);
  EXPECT_LE(rep.rows[2].residual, 1e-7);
  EXPECT_GT(rep.rows[0].residual, rep.rows[2].residual);
  for (const auto& r : rep.rows) EXPECT_NEAR(r.boundary, r.oracle, 1e-12 * std::max(1.0, std::abs(r.oracle)));
}

TEST(Finsler, MinkowskiDivergenceFreeField) {
  const auto spec = build_lagrangian("minkowski", 4);
  const auto s = SectionField::parse({"1", "0", "0", "0"}, 4);
  const auto z = FiberVectorField::from_components({"x1", "-x0", "x3", "-x2"}, 4);
  const auto rep = verify_divergence_finsler(spec, z, s, unit_box(4), {3});
  EXPECT_LE(std::abs(rep.rows[0].volume), 1e-10);
  EXPECT_LE(std::abs(rep.rows[0].boundary), 1e-10);
}

TEST(Finsler, AffineSphereSlab) {
  const AffineScenario sc;
  FinslerOptions opt;
  opt.threads = 2;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rep = verify_divergence_finsler(sc.spec, sc.z, sc.s, sc.box, {4, 8}, opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  RecordProperty("seconds", std::to_string(secs));
  EXPECT_TRUE(rep.gate_passed);
  EXPECT_LE(rep.det_spread, 1e-8);
  ASSERT_EQ(rep.rows.size(), 2u);
  for (const auto& r : rep.rows) {
    EXPECT_LE(r.boundary_vs_oracle, 1e-9);
    int skipped = 0;
    for (const auto& f : r.faces) skipped += f.skipped;
    EXPECT_EQ(skipped, 6);
  }
  EXPECT_LT(rep.rows[1].volume_vs_boundary, rep.rows[0].volume_vs_boundary);
  EXPECT_LE(rep.rows[1].volume_vs_boundary, 1e-6);
}

TEST(Finsler, SeedScaleInvariance) {
  const AffineScenario sc;
  FinslerOptions a, b;
  b.seed_scale = 5.0;
  const auto ra = verify_divergence_finsler(sc.spec, sc.z, sc.s, sc.box, {4}, a);
  const auto rb = verify_divergence_finsler(sc.spec, sc.z, sc.s, sc.box, {4}, b);
  EXPECT_NEAR(ra.rows[0].boundary, rb.rows[0].boundary, 1e-10 * std::abs(ra.rows[0].boundary));
  EXPECT_NEAR(ra.rows[0].boundary_newton_scale, rb.rows[0].boundary_newton_scale,
              1e-10 * std::abs(ra.rows[0].boundary));
}

TEST(Finsler, GateRefusesNonzeroMeanCartan) {
  const auto spec = ft::quartic(3);
  const auto s = SectionField::parse({"0.6", "1", "1"}, 3);
  const auto z = FiberVectorField::from_components({"1", "x0", "y1"}, 3);
  EXPECT_THROW(verify_divergence_finsler(spec, z, s, unit_box(3), {3}), GateRefused);
  // the covector normals of this quartic have vanishing components, so a
  // forced run has no admissible Legendre preimage
  FinslerOptions force;
  force.force = true;
  EXPECT_THROW(verify_divergence_finsler(spec, z, s, unit_box(3), {3}, force), LegendreError);
}

TEST(Finsler, ForcedRunReportsGateFailure) {
  const AffineScenario sc;
  FinslerOptions opt;
  opt.gate_tolerance = -1.0;
  EXPECT_THROW(verify_divergence_finsler(sc.spec, sc.z, sc.s, sc.box, {3}, opt), GateRefused);
  opt.force = true;
  const auto rep = verify_divergence_finsler(sc.spec, sc.z, sc.s, sc.box, {3}, opt);
  EXPECT_FALSE(rep.gate_passed);
  EXPECT_TRUE(rep.forced);
  EXPECT_EQ(rep.rows.size(), 1u);
}
