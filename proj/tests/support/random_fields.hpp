#pragma once

// Random smooth sections and fiber fields as expression text.

#include <random>
#include <string>
#include <vector>

#include "finsler/expr.hpp"
#include "finsler/fields.hpp"

namespace finsler::testing {

inline std::string lit(double v) { return "(" + expr::detail::format_double(v) + ")"; }

/// s^a = center_a + eps * (p sin(q . x) + r x_b x_c), kept close to center.
inline SectionField random_section(std::mt19937_64& rng, const std::vector<double>& center, double eps) {
  const int n = static_cast<int>(center.size());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> idx(0, n - 1);
  std::vector<std::string> texts;
  for (int a = 0; a < n; ++a) {
    std::string q;
    for (int i = 0; i < n; ++i) q += (i ? " + " : "") + lit(u(rng)) + "*x" + std::to_string(i);
    texts.push_back(lit(center[a]) + " + " + lit(eps) + "*(" + lit(u(rng)) + "*sin(" + q + ") + " + lit(u(rng)) +
                    "*x" + std::to_string(idx(rng)) + "*x" + std::to_string(idx(rng)) + ")");
  }
  return SectionField::parse(texts, n);
}

/// Explicit y-dependent components.
inline FiberVectorField random_field(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> idx(0, n - 1);
  std::vector<std::string> texts;
  for (int a = 0; a < n; ++a) {
    const std::string xb = "x" + std::to_string(idx(rng)), yc = "y" + std::to_string(idx(rng));
    const std::string yd = "y" + std::to_string(idx(rng));
    texts.push_back(lit(u(rng)) + " + " + lit(u(rng)) + "*sin(" + xb + ")*" + yc + " + " + lit(u(rng)) + "*" + yc +
                    "*" + yd + "/(1 + " + yd + "^2) + " + lit(u(rng)) + "*" + xb + "^2");
  }
  return FiberVectorField::from_components(texts, n);
}

/// Vertical gradient of a random scalar potential.
inline FiberVectorField random_potential(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> idx(0, n - 1);
  std::string f;
  for (int k = 0; k < 4; ++k) {
    const std::string xa = "x" + std::to_string(idx(rng)), yb = "y" + std::to_string(idx(rng));
    const std::string yc = "y" + std::to_string(idx(rng));
    f += (k ? " + " : "") + lit(u(rng)) + "*exp(" + lit(0.5 * u(rng)) + "*" + xa + ")*" + yb + "*" + yc;
  }
  f += " + " + lit(u(rng)) + "*y0^3/(2 + y1^2) + " + lit(u(rng)) + "*sin(x1)*y" + std::to_string(idx(rng));
  return FiberVectorField::vertical_gradient(f, n);
}

}  // namespace finsler::testing
