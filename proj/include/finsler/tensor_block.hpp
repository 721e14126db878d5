#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <stdexcept>
#include <vector>

namespace finsler {

enum class Valence { up, down };

/// Dense multi-index array at a fiber point; row-major in the declared index
/// order.
class TensorBlock {
 public:
  TensorBlock() = default;
  TensorBlock(int dim, std::vector<Valence> valence)
      : dim_(dim), valence_(std::move(valence)), data_(count(dim, valence_.size()), 0.0) {}

  int dim() const { return dim_; }
  int rank() const { return static_cast<int>(valence_.size()); }
  const std::vector<Valence>& valence() const { return valence_; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  template <typename... I>
  double& operator()(I... idx) {
    return data_[offset({static_cast<int>(idx)...})];
  }
  template <typename... I>
  double operator()(I... idx) const {
    return data_[offset({static_cast<int>(idx)...})];
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  friend TensorBlock operator-(const TensorBlock& a, const TensorBlock& b) {
    a.check_same_shape(b);
    TensorBlock r = a;
    for (std::size_t i = 0; i < r.data_.size(); ++i) r.data_[i] -= b.data_[i];
    return r;
  }
  friend TensorBlock operator+(const TensorBlock& a, const TensorBlock& b) {
    a.check_same_shape(b);
    TensorBlock r = a;
    for (std::size_t i = 0; i < r.data_.size(); ++i) r.data_[i] += b.data_[i];
    return r;
  }

 private:
  static std::size_t count(int dim, std::size_t rank) {
    std::size_t c = 1;
    for (std::size_t i = 0; i < rank; ++i) c *= static_cast<std::size_t>(dim);
    return c;
  }
  std::size_t offset(std::initializer_list<int> idx) const {
    if (idx.size() != valence_.size()) throw std::invalid_argument("tensor index count mismatch");
    std::size_t off = 0;
    for (int i : idx) off = off * dim_ + static_cast<std::size_t>(i);
    return off;
  }
  void check_same_shape(const TensorBlock& o) const {
    if (dim_ != o.dim_ || valence_ != o.valence_) throw std::invalid_argument("tensor shape mismatch");
  }

  int dim_ = 0;
  std::vector<Valence> valence_;
  std::vector<double> data_;
};

/// max |a - b| scaled by max(1, largest entry of either side).
inline double normalized_residual(const TensorBlock& a, const TensorBlock& b) {
  const double scale = std::max({1.0, a.max_abs(), b.max_abs()});
  return (a - b).max_abs() / scale;
}

}  // namespace finsler
