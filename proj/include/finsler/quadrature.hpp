#pragma once

// Tensor-product Gauss-Legendre quadrature on coordinate boxes and their
// faces. Node values are computed in parallel into a buffer and reduced by
// pairwise summation in node order, so results do not depend on the number
// of worker threads.

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

namespace finsler {

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

inline GaussRule compute_gauss_rule(int n) {
  if (n < 1) throw std::invalid_argument("quadrature order must be positive");
  GaussRule r{std::vector<double>(n), std::vector<double>(n)};
  for (int i = 0; i < (n + 1) / 2; ++i) {
    long double z = std::cos(std::numbers::pi_v<long double> * (i + 0.75L) / (n + 0.5L));
    long double dp = 0.0L;
    for (int it = 0; it < 100; ++it) {
      long double p0 = 1.0L, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const long double p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0L;
      dp = n * (z * p1 - p0) / (z * z - 1.0L);
      const long double step = p1 / dp;
      z -= step;
      if (std::abs(step) < 1e-19L) break;
    }
    // recompute derivative at the converged root
    long double p0 = 1.0L, p1 = z;
    for (int k = 2; k <= n; ++k) {
      const long double p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (z * p1 - p0) / (z * z - 1.0L);
    const long double w = 2.0L / ((1.0L - z * z) * dp * dp);
    r.nodes[i] = static_cast<double>(-z);
    r.nodes[n - 1 - i] = static_cast<double>(z);
    r.weights[i] = r.weights[n - 1 - i] = static_cast<double>(w);
  }
  if (n % 2 == 1) r.nodes[n / 2] = 0.0;
  return r;
}

inline const GaussRule& gauss_rule(int n) {
  static std::mutex m;
  static std::map<int, GaussRule> cache;
  std::lock_guard<std::mutex> lock(m);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, compute_gauss_rule(n)).first;
  return it->second;
}

/// Sum of v in a fixed binary-tree order.
inline double pairwise_sum(std::span<const double> v) {
  if (v.empty()) return 0.0;
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.subspan(0, h)) + pairwise_sum(v.subspan(h));
}

/// Calls body(i) for i in [0, count) on `threads` workers. The first
/// exception (by index) is rethrown after all workers finish.
inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads < 1 ? 1 : threads, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::size_t> error_index(workers, count);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) {
        try {
          body(i);
        } catch (...) {
          errors[w] = std::current_exception();
          error_index[w] = i;
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  std::size_t first = count, which = 0;
  for (std::size_t w = 0; w < workers; ++w)
    if (errors[w] && error_index[w] < first) {
      first = error_index[w];
      which = w;
    }
  if (first < count) std::rethrow_exception(errors[which]);
}

struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  int dim() const { return static_cast<int>(lower.size()); }
  void validate() const {
    if (lower.size() != upper.size() || lower.empty()) throw std::invalid_argument("box bounds have mismatched sizes");
    for (std::size_t i = 0; i < lower.size(); ++i)
      if (!(lower[i] < upper[i])) throw std::invalid_argument("box needs lower < upper on every axis");
  }
  double volume() const {
    double v = 1.0;
    for (int i = 0; i < dim(); ++i) v *= upper[i] - lower[i];
    return v;
  }
};

/// Face {x^axis = lower or upper} with outward conormal sign * dx^axis.
struct Face {
  int axis = 0;
  bool upper = false;
  double sign() const { return upper ? 1.0 : -1.0; }
};

inline std::vector<Face> faces_of(const Box& box) {
  std::vector<Face> out;
  for (int i = 0; i < box.dim(); ++i) {
    out.push_back({i, false});
    out.push_back({i, true});
  }
  return out;
}

struct QuadNode {
  std::vector<double> x;
  double weight = 0.0;
};

/// Tensor-product nodes over the axes in `axes`; other coordinates are taken
/// from `fixed`.
inline std::vector<QuadNode> product_nodes(const Box& box, const std::vector<int>& axes, int order,
                                           const std::vector<double>& fixed) {
  const GaussRule& r = gauss_rule(order);
  std::vector<QuadNode> out;
  std::vector<int> idx(axes.size(), 0);
  for (;;) {
    QuadNode q{fixed, 1.0};
    for (std::size_t k = 0; k < axes.size(); ++k) {
      const int a = axes[k];
      const double half = 0.5 * (box.upper[a] - box.lower[a]);
      const double mid = 0.5 * (box.upper[a] + box.lower[a]);
      q.x[a] = mid + half * r.nodes[idx[k]];
      q.weight *= half * r.weights[idx[k]];
    }
    out.push_back(std::move(q));
    std::size_t k = 0;
    while (k < axes.size() && ++idx[k] == order) idx[k++] = 0;
    if (k == axes.size()) break;
  }
  return out;
}

inline std::vector<QuadNode> domain_nodes(const Box& box, int order) {
  std::vector<int> axes;
  for (int i = 0; i < box.dim(); ++i) axes.push_back(i);
  return product_nodes(box, axes, order, box.lower);
}

inline std::vector<QuadNode> face_nodes(const Box& box, const Face& f, int order) {
  std::vector<int> axes;
  for (int i = 0; i < box.dim(); ++i)
    if (i != f.axis) axes.push_back(i);
  std::vector<double> fixed = box.lower;
  fixed[f.axis] = f.upper ? box.upper[f.axis] : box.lower[f.axis];
  return product_nodes(box, axes, order, fixed);
}

/// Evaluates f at every node (in parallel) and returns the weighted values
/// in node order.
inline std::vector<double> weighted_values(const std::vector<QuadNode>& nodes,
                                           const std::function<double(const std::vector<double>&)>& f, int threads) {
  std::vector<double> v(nodes.size());
  parallel_for(nodes.size(), threads, [&](std::size_t i) { v[i] = nodes[i].weight * f(nodes[i].x); });
  return v;
}

inline double quad_domain(const std::function<double(const std::vector<double>&)>& f, const Box& box, int order,
                          int threads = 1) {
  box.validate();
  const auto v = weighted_values(domain_nodes(box, order), f, threads);
  return pairwise_sum(v);
}

inline double quad_face(const std::function<double(const std::vector<double>&)>& f, const Box& box, const Face& face,
                        int order, int threads = 1) {
  box.validate();
  const auto v = weighted_values(face_nodes(box, face, order), f, threads);
  return pairwise_sum(v);
}

/// Sum over all 2n faces (lower then upper, by axis).
inline double quad_boundary(const std::function<double(const Face&, const std::vector<double>&)>& f, const Box& box,
                            int order, int threads = 1) {
  double total = 0.0;
  for (const Face& face : faces_of(box))
    total += quad_face([&](const std::vector<double>& x) { return f(face, x); }, box, face, order, threads);
  return total;
}

}  // namespace finsler
