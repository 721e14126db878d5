#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "finsler/catalog.hpp"
#include "finsler/tensors.hpp"
#include "support/sampling.hpp"

using namespace finsler;
namespace ft = finsler::testing;

TEST(Catalog, MinkowskiValue) {
  const auto spec = build_lagrangian("minkowski", 4);
  const std::vector<double> x(4, 0.0), y{1, 0, 0, 0};
  EXPECT_DOUBLE_EQ(spec.value(x, y), -0.5);
}

TEST(Catalog, AffineSphereCalibration) {
  const auto spec = ft::affine_sphere("1");
  const std::vector<double> x(4, 0.0), y{1, 0, 0, 0};
  // alpha = 1/2, beta = sqrt(3)/2: -(2/3^(3/4)) (1/4)^(1/4) (3/4)^(3/4)
  const double direct = -(2.0 / std::pow(3.0, 0.75)) * std::pow(0.25, 0.25) * std::pow(0.75, 0.75);
  EXPECT_NEAR(direct, -0.5, 1e-15);
  EXPECT_NEAR(spec.value(x, y), direct, 1e-15);
}

TEST(Catalog, QuarticValue) {
  const auto spec = ft::quartic(3);
  const std::vector<double> x(3, 0.0), y{0, 1, 0};
  EXPECT_DOUBLE_EQ(spec.value(x, y), 0.5);
}

TEST(Catalog, Errors) {
  EXPECT_THROW(build_lagrangian("randers", 4), SpecError);
  EXPECT_THROW(build_lagrangian("affine_sphere_friedmann", 3), SpecError);
  LagrangianParams bad;
  bad.matrix = {{"1", "0"}, {"0"}};
  EXPECT_THROW(build_lagrangian("quadratic_metric", 2, bad), SpecError);
  LagrangianParams asym;
  asym.matrix = {{"1", "x0"}, {"0", "1"}};
  EXPECT_THROW(build_lagrangian("quadratic_metric", 2, asym), SpecError);
  LagrangianParams ydep;
  ydep.matrix = {{"y0", "0"}, {"0", "1"}};
  EXPECT_THROW(build_lagrangian("quadratic_metric", 2, ydep), SpecError);
  LagrangianParams a;
  a.fields["a"] = "exp(x1)";
  EXPECT_THROW(build_lagrangian("affine_sphere_friedmann", 4, a), SpecError);
  LagrangianParams q;
  q.numbers["sign"] = 2.0;
  EXPECT_THROW(build_lagrangian("quartic", 3, q), SpecError);
  EXPECT_THROW(build_lagrangian("custom_expression", 2), SpecError);
}

TEST(Catalog, InadmissiblePointsAreErrors) {
  const auto spec = ft::affine_sphere("1");
  const std::vector<double> x(4, 0.0);
  EXPECT_FALSE(spec.admissible(x, std::vector<double>{0, 1, 0, 0}));  // negative radicand
  EXPECT_FALSE(spec.admissible(x, std::vector<double>{0, 0, 0, 0}));  // zero vector
  EXPECT_THROW(homogeneity_residual(spec, x, std::vector<double>{0, 1, 0, 0}), InadmissiblePoint);
  const FiberPoint p{x, {0, 1, 0, 0}};
  EXPECT_THROW(FiberContext(spec, p, 2), InadmissiblePoint);
}

TEST(Catalog, HomogeneityResidual) {
  const auto mink = build_lagrangian("minkowski", 4);
  const std::vector<double> x{0.1, 0.2, 0.3, 0.4}, y{1.2, -0.3, 0.5, 2.0};
  EXPECT_LE(std::abs(homogeneity_residual(mink, x, y)), 1e-12);

  LagrangianParams broken;
  broken.expression = "0.5*(-y0^2 + y1^2) + 1";
  const auto b = build_lagrangian("custom_expression", 2, broken);
  const std::vector<double> x2{0.0, 0.0}, y2{0.3, 1.1};
  EXPECT_NEAR(homogeneity_residual(b, x2, y2), -2.0, 1e-14);
}

TEST(Catalog, EveryEntryIsTwoHomogeneous) {
  std::mt19937_64 rng(5);
  const std::vector<LagrangianSpec> specs{
      build_lagrangian("minkowski", 4), ft::friedmann_quadratic("exp(x0)"), ft::affine_sphere("exp(x0)"),
      ft::quartic(3), ft::quartic(4, -1.0)};
  for (const auto& spec : specs) {
    for (int i = 0; i < 100; ++i) {
      FiberPoint p = spec.id == "quartic" && spec.constants.empty() && spec.text.find("(-1)") != std::string::npos
                         ? ft::random_point(spec, rng, {1.3, 0.4, 0.4, 0.4}, 0.2)
                         : ft::sample_for(spec, rng);
      const double l = spec.value(p.x, p.y);
      EXPECT_LE(std::abs(homogeneity_residual(spec, p.x, p.y)), 1e-10 * std::max(1.0, std::abs(l))) << spec.id;
    }
  }
}

TEST(Catalog, CustomExpressionWithParametersAndConstraints) {
  LagrangianParams p;
  p.expression = "0.5*k*(abs(y0)/y0)*(-y0^2 + y1^2)";
  p.numbers["k"] = 2.0;
  p.nonzero = {"y0"};
  const auto spec = build_lagrangian("custom_expression", 2, p);
  const std::vector<double> x{0.0, 0.0};
  EXPECT_DOUBLE_EQ(spec.value(x, std::vector<double>{1.0, 0.5}), -0.75);
  EXPECT_DOUBLE_EQ(spec.value(x, std::vector<double>{-1.0, 0.5}), 0.75);
  EXPECT_FALSE(spec.admissible(x, std::vector<double>{0.0, 0.5}));
}

TEST(Catalog, SignatureDetection) {
  const auto spec = ft::affine_sphere("1");
  const FiberPoint p{{0, 0, 0, 0}, {1, 0, 0, 0}};
  const FiberContext ctx(spec, p, 2);
  const auto s = ctx.signature();
  EXPECT_EQ(s.negative, 1);
  EXPECT_EQ(s.positive, 3);
  const auto mink = build_lagrangian("minkowski", 4);
  const FiberContext mc(mink, p, 2);
  ASSERT_TRUE(mink.expected_signature.has_value());
  EXPECT_EQ(mc.signature().negative, 1);
}
