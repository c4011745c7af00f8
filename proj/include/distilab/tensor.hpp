#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace distilab {

// Dense order-k tensor over R^d, stored row-major: the last index varies fastest.
class DenseTensor {
 public:
  DenseTensor() : order_(0), dim_(1), values_(1, 0.0) {}

  DenseTensor(int order, int dim) : order_(order), dim_(dim) {
    if (order < 0) throw std::invalid_argument("DenseTensor: negative order");
    if (dim < 1) throw std::invalid_argument("DenseTensor: dimension must be positive");
    values_.assign(ipow(dim, order), 0.0);
  }

  DenseTensor(int order, int dim, std::vector<double> values)
      : order_(order), dim_(dim), values_(std::move(values)) {
    if (order < 0 || dim < 1) throw std::invalid_argument("DenseTensor: bad shape");
    if (values_.size() != ipow(dim, order))
      throw std::invalid_argument("DenseTensor: value count must equal dim^order");
  }

  static DenseTensor scalar(double v, int dim = 1) {
    DenseTensor t(0, dim);
    t.values_[0] = v;
    return t;
  }

  static DenseTensor from_vector(const Eigen::VectorXd& v) {
    return DenseTensor(1, static_cast<int>(v.size()),
                       std::vector<double>(v.data(), v.data() + v.size()));
  }

  static DenseTensor from_matrix(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("DenseTensor: matrix must be square");
    const int d = static_cast<int>(m.rows());
    DenseTensor t(2, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) t.values_[static_cast<std::size_t>(i) * d + j] = m(i, j);
    return t;
  }

  int order() const { return order_; }
  int dim() const { return dim_; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  std::size_t flat_index(std::span<const int> idx) const {
    if (static_cast<int>(idx.size()) != order_)
      throw std::invalid_argument("DenseTensor: index arity mismatch");
    std::size_t f = 0;
    for (int i : idx) {
      if (i < 0 || i >= dim_) throw std::out_of_range("DenseTensor: index out of range");
      f = f * dim_ + static_cast<std::size_t>(i);
    }
    return f;
  }

  void unflatten(std::size_t f, std::span<int> idx) const {
    for (int p = order_ - 1; p >= 0; --p) {
      idx[p] = static_cast<int>(f % dim_);
      f /= dim_;
    }
  }

  double operator()(std::initializer_list<int> idx) const {
    return values_[flat_index(std::span<const int>(idx.begin(), idx.size()))];
  }
  double& operator()(std::initializer_list<int> idx) {
    return values_[flat_index(std::span<const int>(idx.begin(), idx.size()))];
  }
  double at(std::span<const int> idx) const { return values_[flat_index(idx)]; }
  double& at(std::span<const int> idx) { return values_[flat_index(idx)]; }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
  }

  double as_scalar() const {
    if (order_ != 0) throw std::logic_error("DenseTensor: not a scalar");
    return values_[0];
  }

  Eigen::VectorXd as_vector() const {
    if (order_ != 1) throw std::logic_error("DenseTensor: not a vector");
    return Eigen::Map<const Eigen::VectorXd>(values_.data(), dim_);
  }

  Eigen::MatrixXd as_matrix() const {
    if (order_ != 2) throw std::logic_error("DenseTensor: not a matrix");
    Eigen::MatrixXd m(dim_, dim_);
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < dim_; ++j) m(i, j) = values_[static_cast<std::size_t>(i) * dim_ + j];
    return m;
  }

  DenseTensor& operator+=(const DenseTensor& o) {
    check_same_shape(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  DenseTensor& operator-=(const DenseTensor& o) {
    check_same_shape(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  DenseTensor& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }
  friend DenseTensor operator+(DenseTensor a, const DenseTensor& b) { return a += b; }
  friend DenseTensor operator-(DenseTensor a, const DenseTensor& b) { return a -= b; }
  friend DenseTensor operator*(double s, DenseTensor a) { return a *= s; }

  void check_same_shape(const DenseTensor& o) const {
    if (order_ != o.order_ || dim_ != o.dim_)
      throw std::invalid_argument("DenseTensor: shape mismatch");
  }

  static std::size_t ipow(int base, int exp) {
    std::size_t r = 1;
    for (int i = 0; i < exp; ++i) r *= static_cast<std::size_t>(base);
    return r;
  }

 private:
  int order_;
  int dim_;
  std::vector<double> values_;
};

inline double frobenius_inner(const DenseTensor& a, const DenseTensor& b) {
  a.check_same_shape(b);
  double s = 0.0;
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * vb[i];
  return s;
}

inline double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
  a.check_same_shape(b);
  double m = 0.0;
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) m = std::max(m, std::abs(va[i] - vb[i]));
  return m;
}

// Average over all k! permutations of the index positions.
inline DenseTensor sym(const DenseTensor& t) {
  const int k = t.order();
  if (k <= 1) return t;
  DenseTensor out(k, t.dim());
  std::vector<int> idx(k), permuted(k), perm(k);
  double nperm = 0.0;
  for (std::size_t f = 0; f < t.size(); ++f) {
    t.unflatten(f, idx);
    std::iota(perm.begin(), perm.end(), 0);
    double acc = 0.0;
    nperm = 0.0;
    do {
      for (int p = 0; p < k; ++p) permuted[p] = idx[perm[p]];
      acc += t.at(permuted);
      nperm += 1.0;
    } while (std::next_permutation(perm.begin(), perm.end()));
    out.values()[f] = acc / nperm;
  }
  return out;
}

inline bool is_symmetric(const DenseTensor& t, double tol) {
  return max_abs_diff(t, sym(t)) <= tol;
}

// Contracts the trailing B.order() indices of A against B.
inline DenseTensor tensor_action(const DenseTensor& a, const DenseTensor& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("tensor_action: dimension mismatch");
  if (b.order() > a.order()) throw std::invalid_argument("tensor_action: order of B exceeds A");
  DenseTensor out(a.order() - b.order(), a.dim());
  const std::size_t inner = b.size();
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t o = 0; o < out.size(); ++o) {
    double s = 0.0;
    const double* row = va.data() + o * inner;
    for (std::size_t j = 0; j < inner; ++j) s += row[j] * vb[j];
    out.values()[o] = s;
  }
  return out;
}

// Applies M (d x r) along every mode of an order-k tensor over R^r.
inline DenseTensor map_action(const Eigen::MatrixXd& m, const DenseTensor& t) {
  if (m.cols() != t.dim()) throw std::invalid_argument("map_action: dimension mismatch");
  const int k = t.order();
  const int d = static_cast<int>(m.rows());
  const int r = t.dim();
  if (k == 0) return DenseTensor::scalar(t.as_scalar(), d);

  // Mode-by-mode products; shape has the first p modes already mapped to d.
  std::vector<double> cur(t.values().begin(), t.values().end());
  std::vector<int> shape(k, r);
  for (int mode = 0; mode < k; ++mode) {
    std::size_t outer = 1, inner = 1;
    for (int p = 0; p < mode; ++p) outer *= shape[p];
    for (int p = mode + 1; p < k; ++p) inner *= shape[p];
    std::vector<double> next(outer * d * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < r; ++j) {
          const double mij = m(i, j);
          if (mij == 0.0) continue;
          const double* src = cur.data() + (o * r + j) * inner;
          double* dst = next.data() + (o * d + i) * inner;
          for (std::size_t q = 0; q < inner; ++q) dst[q] += mij * src[q];
        }
    cur.swap(next);
    shape[mode] = d;
  }
  return DenseTensor(k, d, std::move(cur));
}

inline DenseTensor outer_power(const Eigen::VectorXd& v, int k) {
  if (k < 0) throw std::invalid_argument("outer_power: negative order");
  const int d = static_cast<int>(v.size());
  DenseTensor out(k, d);
  std::vector<int> idx(k);
  for (std::size_t f = 0; f < out.size(); ++f) {
    out.unflatten(f, idx);
    double p = 1.0;
    for (int i : idx) p *= v(i);
    out.values()[f] = p;
  }
  return out;
}

}  // namespace distilab
