#pragma once

// Small dense matrices with jet entries. Pivoting looks at constant terms
// only, which is what an indefinite but nondegenerate metric needs.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "finsler/jet.hpp"

namespace finsler::jets {

class JetMatrix {
 public:
  JetMatrix() = default;
  JetMatrix(int n, const Jet& fill) : n_(n), a_(static_cast<std::size_t>(n) * n, fill) {}

  int size() const { return n_; }
  Jet& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * n_ + j]; }
  const Jet& operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * n_ + j]; }

  std::vector<double> values() const {
    std::vector<double> v(a_.size());
    for (std::size_t i = 0; i < a_.size(); ++i) v[i] = a_[i].value();
    return v;
  }

 private:
  int n_ = 0;
  std::vector<Jet> a_;
};

class SingularJetMatrix : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// PA = LU with partial pivoting on constant terms; L unit lower, stored
/// in-place together with U.
class JetLU {
 public:
  explicit JetLU(JetMatrix a) : lu_(std::move(a)), perm_(lu_.size()) {
    const int n = lu_.size();
    for (int i = 0; i < n; ++i) perm_[i] = i;
    for (int k = 0; k < n; ++k) {
      int piv = k;
      double best = std::abs(lu_(k, k).value());
      for (int i = k + 1; i < n; ++i) {
        const double v = std::abs(lu_(i, k).value());
        if (v > best) {
          best = v;
          piv = i;
        }
      }
      if (best == 0.0) throw SingularJetMatrix("singular matrix in jet LU");
      if (piv != k) {
        for (int j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(piv, j));
        std::swap(perm_[k], perm_[piv]);
        sign_ = -sign_;
      }
      const Jet inv = recip(lu_(k, k));
      for (int i = k + 1; i < n; ++i) {
        lu_(i, k) = lu_(i, k) * inv;
        for (int j = k + 1; j < n; ++j) lu_(i, j) -= lu_(i, k) * lu_(k, j);
      }
    }
  }

  Jet determinant() const {
    Jet d = lu_(0, 0);
    for (int i = 1; i < lu_.size(); ++i) d = d * lu_(i, i);
    if (sign_ < 0) d = -d;
    return d;
  }

  /// Solves A x = b.
  std::vector<Jet> solve(const std::vector<Jet>& b) const {
    const int n = lu_.size();
    std::vector<Jet> x(n);
    for (int i = 0; i < n; ++i) {
      Jet s = b[perm_[i]];
      for (int j = 0; j < i; ++j) s -= lu_(i, j) * x[j];
      x[i] = std::move(s);
    }
    for (int i = n - 1; i >= 0; --i) {
      Jet s = x[i];
      for (int j = i + 1; j < n; ++j) s -= lu_(i, j) * x[j];
      x[i] = s / lu_(i, i);
    }
    return x;
  }

  JetMatrix inverse() const {
    const int n = lu_.size();
    const Jet& ref = lu_(0, 0);
    JetMatrix inv(n, Jet::constant(ref.dim(), ref.order(), 0.0));
    for (int c = 0; c < n; ++c) {
      std::vector<Jet> e(n, Jet::constant(ref.dim(), ref.order(), 0.0));
      e[c] += 1.0;
      auto col = solve(e);
      for (int r = 0; r < n; ++r) inv(r, c) = std::move(col[r]);
    }
    return inv;
  }

 private:
  JetMatrix lu_;
  std::vector<int> perm_;
  int sign_ = 1;
};

}  // namespace finsler::jets
