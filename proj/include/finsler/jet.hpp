#pragma once

// Truncated multivariate Taylor arithmetic ("jets").
//
// A Jet stores the Taylor coefficients of a scalar function around an
// expansion point, for every multi-index of total degree <= order, in dense
// graded-lexicographic layout. Because the layout is graded, the coefficients
// of a lower-order truncation are a prefix of the higher-order ones, so
// truncation is a resize and mixed-order arithmetic truncates to the smaller
// order.

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace finsler::jets {

inline constexpr int kMaxOrder = 4;
inline constexpr int kMaxDim = 10;

using MultiIndex = std::vector<int>;

/// Domain violation at the expansion point (log of a non-positive value,
/// division by zero, abs at zero, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Monomial bookkeeping for one variable count: enumeration, rank lookup,
/// product pairs and derivative maps. Shared by every Jet of that dimension.
class MonomialTable {
 public:
  struct Pair {
    std::uint32_t lhs, rhs, out;
  };

  explicit MonomialTable(int dim) : dim_(dim) {
    // graded enumeration: degree 0, then 1, ... each degree in lex order
    // (descending exponent of variable 0 first).
    std::vector<int> cur(dim, 0);
    count_by_order_.fill(0);
    for (int deg = 0; deg <= kMaxOrder; ++deg) {
      enumerate(deg, 0, cur);
      count_by_order_[deg] = static_cast<int>(exps_.size());
    }
    for (std::size_t i = 0; i < exps_.size(); ++i) rank_.emplace(pack(exps_[i]), static_cast<int>(i));

    // all (i, j) with deg(i) + deg(j) <= kMaxOrder, sorted by the degree sum so
    // that the pairs needed at order k form a prefix.
    std::array<std::vector<Pair>, kMaxOrder + 1> by_deg;
    const int total = size(kMaxOrder);
    for (int i = 0; i < total; ++i) {
      for (int j = 0; j < total; ++j) {
        const int d = degree_[i] + degree_[j];
        if (d > kMaxOrder) continue;
        std::vector<int> m(dim);
        for (int v = 0; v < dim; ++v) m[v] = exps_[i][v] + exps_[j][v];
        by_deg[d].push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                             static_cast<std::uint32_t>(rank_.at(pack(m)))});
      }
    }
    for (int d = 0; d <= kMaxOrder; ++d) {
      pairs_.insert(pairs_.end(), by_deg[d].begin(), by_deg[d].end());
      pair_count_[d] = pairs_.size();
    }

    // d/dx_v: coefficient r of the result reads (r_v + 1) * c[r + e_v].
    deriv_src_.assign(dim, {});
    deriv_mul_.assign(dim, {});
    for (int v = 0; v < dim; ++v) {
      for (int r = 0; r < size(kMaxOrder - 1); ++r) {
        std::vector<int> m(exps_[r].begin(), exps_[r].end());
        m[v] += 1;
        deriv_src_[v].push_back(rank_.at(pack(m)));
        deriv_mul_[v].push_back(static_cast<double>(m[v]));
      }
    }
  }

  int dim() const { return dim_; }
  int size(int order) const { return count_by_order_[order]; }
  const std::vector<int>& exponents(int idx) const { return exps_[idx]; }
  int degree(int idx) const { return degree_[idx]; }

  int rank(std::span<const int> m) const {
    auto it = rank_.find(pack(m));
    if (it == rank_.end()) throw std::out_of_range("multi-index outside the jet table");
    return it->second;
  }

  std::span<const Pair> pairs(int order) const { return {pairs_.data(), pair_count_[order]}; }
  const std::vector<int>& deriv_src(int v) const { return deriv_src_[v]; }
  const std::vector<double>& deriv_mul(int v) const { return deriv_mul_[v]; }

  static const MonomialTable& get(int dim) {
    if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("jet dimension must be in [1, 10]");
    static std::array<std::once_flag, kMaxDim + 1> flags;
    static std::array<std::unique_ptr<MonomialTable>, kMaxDim + 1> tables;
    std::call_once(flags[dim], [dim] { tables[dim] = std::make_unique<MonomialTable>(dim); });
    return *tables[dim];
  }

 private:
  static std::uint64_t pack(std::span<const int> m) {
    std::uint64_t key = 0;
    for (int e : m) {
      if (e < 0 || e > kMaxOrder) return ~std::uint64_t{0};
      key = key * (kMaxOrder + 1) + static_cast<std::uint64_t>(e);
    }
    return key;
  }

  void enumerate(int remaining, int var, std::vector<int>& cur) {
    if (var == dim_ - 1) {
      cur[var] = remaining;
      exps_.push_back(cur);
      degree_.push_back(std::accumulate(cur.begin(), cur.end(), 0));
      cur[var] = 0;
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      cur[var] = e;
      enumerate(remaining - e, var + 1, cur);
    }
    cur[var] = 0;
  }

  int dim_;
  std::vector<std::vector<int>> exps_;
  std::vector<int> degree_;
  std::array<int, kMaxOrder + 1> count_by_order_{};
  std::unordered_map<std::uint64_t, int> rank_;
  std::vector<Pair> pairs_;
  std::array<std::size_t, kMaxOrder + 1> pair_count_{};
  std::vector<std::vector<int>> deriv_src_;
  std::vector<std::vector<double>> deriv_mul_;
};

class Jet {
 public:
  Jet() = default;

  static Jet constant(int dim, int order, double value) {
    Jet j(dim, order);
    j.c_[0] = value;
    return j;
  }

  /// Seed of variable `var` around `value`: value + d_var.
  static Jet variable(int dim, int order, int var, double value) {
    Jet j = constant(dim, order, value);
    if (order >= 1) j.c_[1 + var] = 1.0;
    return j;
  }

  int dim() const { return table_ ? table_->dim() : 0; }
  int order() const { return order_; }
  bool empty() const { return table_ == nullptr; }
  double value() const { return c_[0]; }
  std::span<const double> coeffs() const { return c_; }
  std::span<double> coeffs() { return c_; }
  const MonomialTable& table() const { return *table_; }

  /// Taylor coefficient (partial derivative / multi-index factorial).
  double coeff(std::span<const int> m) const {
    check_index(m);
    return c_[table_->rank(m)];
  }

  /// Partial derivative for the multi-index (coefficient times factorial).
  double partial(std::span<const int> m) const {
    check_index(m);
    double fact = 1.0;
    for (int e : m)
      for (int k = 2; k <= e; ++k) fact *= k;
    return c_[table_->rank(m)] * fact;
  }

  double partial(std::initializer_list<int> m) const {
    return partial(std::span<const int>(m.begin(), m.size()));
  }

  /// First partial along one variable.
  double d(int var) const { return order_ >= 1 ? c_[1 + var] : 0.0; }

  Jet truncated(int order) const {
    if (order > order_) throw std::invalid_argument("cannot raise jet order");
    Jet j = *this;
    j.order_ = order;
    j.c_.resize(table_->size(order));
    return j;
  }

  /// d/dx_var of the expansion; the result has order - 1.
  Jet derivative(int var) const {
    if (order_ < 1) throw std::invalid_argument("derivative of an order-0 jet");
    Jet r(dim(), order_ - 1);
    const auto& src = table_->deriv_src(var);
    const auto& mul = table_->deriv_mul(var);
    for (std::size_t i = 0; i < r.c_.size(); ++i) r.c_[i] = mul[i] * c_[src[i]];
    return r;
  }

  Jet& operator+=(const Jet& o) {
    align(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    align(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Jet& operator+=(double s) {
    c_[0] += s;
    return *this;
  }
  Jet& operator-=(double s) {
    c_[0] -= s;
    return *this;
  }
  Jet& operator*=(double s) {
    for (double& v : c_) v *= s;
    return *this;
  }

  friend Jet operator*(const Jet& a, const Jet& b) {
    check_compatible(a, b);
    const int order = std::min(a.order_, b.order_);
    Jet r(a.dim(), order);
    const double* pa = a.c_.data();
    const double* pb = b.c_.data();
    double* pr = r.c_.data();
    for (const auto& p : a.table_->pairs(order)) pr[p.out] += pa[p.lhs] * pb[p.rhs];
    return r;
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator+(Jet a, double s) { return a += s; }
  friend Jet operator+(double s, Jet a) { return a += s; }
  friend Jet operator-(Jet a, double s) { return a -= s; }
  friend Jet operator-(double s, const Jet& a) { return -a + s; }
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator-(Jet a) {
    for (double& v : a.c_) v = -v;
    return a;
  }

 private:
  Jet(int dim, int order) : table_(&MonomialTable::get(dim)), order_(order) {
    if (order < 0 || order > kMaxOrder) throw std::invalid_argument("jet order must be in [0, 4]");
    c_.assign(table_->size(order), 0.0);
  }

  static void check_compatible(const Jet& a, const Jet& b) {
    if (a.table_ != b.table_) throw std::invalid_argument("jets with different dimensions");
  }

  void align(const Jet& o) {
    check_compatible(*this, o);
    if (o.order_ < order_) {
      order_ = o.order_;
      c_.resize(o.c_.size());
    }
  }

  void check_index(std::span<const int> m) const {
    if (static_cast<int>(m.size()) != dim()) throw std::invalid_argument("multi-index has wrong length");
    int deg = 0;
    for (int e : m) {
      if (e < 0) throw std::invalid_argument("negative multi-index entry");
      deg += e;
    }
    if (deg > order_) throw std::out_of_range("multi-index degree exceeds jet order");
  }

  const MonomialTable* table_ = nullptr;
  int order_ = 0;
  std::vector<double> c_;
};

/// One jet per coordinate; active coordinates get a unit linear term in their
/// own variable (variable index = coordinate index).
inline std::vector<Jet> seed_variables(std::span<const double> point, std::span<const int> active, int order) {
  if (order < 0 || order > kMaxOrder) throw std::invalid_argument("jet order must be in [0, 4]");
  const int dim = static_cast<int>(point.size());
  std::vector<bool> is_active(dim, false);
  for (int a : active) {
    if (a < 0 || a >= dim) throw std::invalid_argument("active index out of range");
    if (is_active[a]) throw std::invalid_argument("active indices must be distinct");
    is_active[a] = true;
  }
  std::vector<Jet> out;
  out.reserve(dim);
  for (int i = 0; i < dim; ++i)
    out.push_back(is_active[i] ? Jet::variable(dim, order, i, point[i]) : Jet::constant(dim, order, point[i]));
  return out;
}

inline double extract_partial(const Jet& jet, std::span<const int> m) { return jet.partial(m); }

/// f(u) given the derivatives f^(k)(u0), k = 0..order, at the constant term u0.
inline Jet compose(const Jet& u, std::span<const double> derivs) {
  const int order = u.order();
  Jet h = u;
  h.coeffs()[0] = 0.0;
  double fact = 1.0;
  for (int k = 2; k <= order; ++k) fact *= k;
  Jet r = Jet::constant(u.dim(), order, derivs[order] / fact);
  for (int k = order - 1; k >= 0; --k) {
    fact /= std::max(k + 1, 1);
    r = r * h;
    r.coeffs()[0] += derivs[k] / fact;
  }
  return r;
}

inline Jet exp(const Jet& u) {
  std::array<double, kMaxOrder + 1> d;
  d.fill(std::exp(u.value()));
  return compose(u, d);
}

inline Jet log(const Jet& u) {
  const double c = u.value();
  if (!(c > 0.0)) throw DomainError("log of a non-positive value");
  std::array<double, kMaxOrder + 1> d{std::log(c)};
  double p = 1.0 / c;
  for (int k = 1; k <= kMaxOrder; ++k) {
    d[k] = p;
    p *= -static_cast<double>(k) / c;
  }
  return compose(u, d);
}

inline Jet recip(const Jet& u) {
  const double c = u.value();
  if (c == 0.0) throw DomainError("division by a jet with zero constant term");
  std::array<double, kMaxOrder + 1> d;
  double p = 1.0 / c;
  for (int k = 0; k <= kMaxOrder; ++k) {
    d[k] = p;
    p *= -static_cast<double>(k + 1) / c;
  }
  return compose(u, d);
}

inline Jet operator/(const Jet& a, const Jet& b) { return a * recip(b); }
inline Jet operator/(Jet a, double s) {
  if (s == 0.0) throw DomainError("division by zero");
  return a *= 1.0 / s;
}
inline Jet operator/(double s, const Jet& b) { return s * recip(b); }

/// u^r for real r on the smooth branch u > 0.
inline Jet pow_real(const Jet& u, double r) {
  const double c = u.value();
  if (!(c > 0.0)) throw DomainError("non-integer power of a non-positive value");
  std::array<double, kMaxOrder + 1> d;
  double coef = 1.0;
  for (int k = 0; k <= kMaxOrder; ++k) {
    d[k] = coef * std::pow(c, r - k);
    coef *= (r - k);
  }
  return compose(u, d);
}

inline Jet pow_int(const Jet& u, long long p) {
  if (p < 0) return recip(pow_int(u, -p));
  Jet result = Jet::constant(u.dim(), u.order(), 1.0);
  Jet base = u;
  bool first = true;
  while (p > 0) {
    if (p & 1) {
      result = first ? base : result * base;
      first = false;
    }
    p >>= 1;
    if (p > 0) base = base * base;
  }
  return result;
}

/// u^(num/den), den > 0. Integer exponents use repeated multiplication; other
/// exponents require a strictly positive constant term.
inline Jet pow_rational(const Jet& u, long long num, long long den) {
  if (den <= 0) throw std::invalid_argument("rational exponent needs a positive denominator");
  const long long g = std::gcd(num < 0 ? -num : num, den);
  num /= g;
  den /= g;
  if (den == 1) return pow_int(u, num);
  return pow_real(u, static_cast<double>(num) / static_cast<double>(den));
}

inline Jet sqrt(const Jet& u) {
  const double c = u.value();
  if (!(c > 0.0)) throw DomainError("sqrt of a non-positive value");
  return pow_real(u, 0.5);
}

inline Jet sin(const Jet& u) {
  const double s = std::sin(u.value()), c = std::cos(u.value());
  std::array<double, kMaxOrder + 1> d{s, c, -s, -c, s};
  return compose(u, d);
}

inline Jet cos(const Jet& u) {
  const double s = std::sin(u.value()), c = std::cos(u.value());
  std::array<double, kMaxOrder + 1> d{c, -s, -c, s, c};
  return compose(u, d);
}

/// |u| on the smooth branch: sign(u0) * u.
inline Jet abs(const Jet& u) {
  if (u.value() == 0.0) throw DomainError("abs at zero is not smooth");
  return u.value() > 0.0 ? u : -u;
}

enum class Op { add, sub, mul, div, neg, pow_rational, sqrt, exp, log, sin, cos, abs };

/// Generic dispatcher. pow_rational takes its exponent as (num, den).
inline Jet jet_apply(Op op, std::span<const Jet> args, long long num = 1, long long den = 1) {
  auto need = [&](std::size_t k) {
    if (args.size() != k) throw std::invalid_argument("wrong number of jet arguments");
  };
  switch (op) {
    case Op::add: need(2); return args[0] + args[1];
    case Op::sub: need(2); return args[0] - args[1];
    case Op::mul: need(2); return args[0] * args[1];
    case Op::div: need(2); return args[0] / args[1];
    case Op::neg: need(1); return -args[0];
    case Op::pow_rational: need(1); return pow_rational(args[0], num, den);
    case Op::sqrt: need(1); return sqrt(args[0]);
    case Op::exp: need(1); return exp(args[0]);
    case Op::log: need(1); return log(args[0]);
    case Op::sin: need(1); return sin(args[0]);
    case Op::cos: need(1); return cos(args[0]);
    case Op::abs: need(1); return abs(args[0]);
  }
  throw std::invalid_argument("unknown jet op");
}

}  // namespace finsler::jets
