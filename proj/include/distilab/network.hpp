#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

#include "distilab/random.hpp"
#include "distilab/task_model.hpp"

namespace distilab {

struct NetworkParams {
  Eigen::VectorXd a;  // L
  Eigen::MatrixXd W;  // d x L, column i is w_i
  Eigen::VectorXd b;  // L

  Eigen::Index width() const { return a.size(); }
  Eigen::Index dim() const { return W.rows(); }

  void validate() const {
    if (W.cols() != a.size() || b.size() != a.size())
      throw std::invalid_argument("NetworkParams: inconsistent widths");
  }
};

inline double relu(double z) { return z > 0.0 ? z : 0.0; }
inline double relu_prime(double z) { return z > 0.0 ? 1.0 : 0.0; }

// Neuron i and L-1-i share w and have opposite a; b = 0, so the network output vanishes.
inline NetworkParams init_symmetric(int d, int L, std::uint64_t seed) {
  if (L < 2 || L % 2 != 0) throw std::invalid_argument("init_symmetric: L must be even and positive");
  Rng rng = make_rng(seed, 0x696e6974ULL);
  NetworkParams p;
  p.a.resize(L);
  p.W.resize(d, L);
  p.b = Eigen::VectorXd::Zero(L);
  for (int i = 0; i < L / 2; ++i) {
    const Eigen::VectorXd w = uniform_sphere(rng, d);
    const double s = random_sign(rng);
    p.W.col(i) = w;
    p.W.col(L - 1 - i) = w;
    p.a(i) = s;
    p.a(L - 1 - i) = -s;
  }
  return p;
}

// K_{in} = relu(<w_i, x_n> + b_i), L x N.
inline Eigen::MatrixXd kernel(const NetworkParams& p, const Eigen::MatrixXd& X) {
  if (X.cols() != p.dim()) throw std::invalid_argument("kernel: input width mismatch");
  Eigen::MatrixXd pre = p.W.transpose() * X.transpose();
  pre.colwise() += p.b;
  return pre.cwiseMax(0.0);
}

inline double forward(const NetworkParams& p, const Eigen::VectorXd& x) {
  if (x.size() != p.dim()) throw std::invalid_argument("forward: input length mismatch");
  const Eigen::VectorXd pre = p.W.transpose() * x + p.b;
  return p.a.dot(pre.cwiseMax(0.0));
}

inline Eigen::VectorXd forward_batch(const NetworkParams& p, const Eigen::MatrixXd& X) {
  return kernel(p, X).transpose() * p.a;
}

inline Eigen::VectorXd forward_batch(const NetworkParams& p, const LabeledSet& D) { return forward_batch(p, D.X); }

// L = (1/2N) sum (f(x_n) - y_n)^2
inline double loss(const NetworkParams& p, const LabeledSet& D) {
  const Eigen::VectorXd r = forward_batch(p, D.X) - D.y;
  return 0.5 * r.squaredNorm() / static_cast<double>(D.y.size());
}

// Column i: (1/N) sum_n (f(x_n) - y_n) a_i x_n relu'(<w_i, x_n> + b_i).
inline Eigen::MatrixXd grad_w(const NetworkParams& p, const LabeledSet& D) {
  if (D.y.size() == 0) throw std::invalid_argument("grad_w: empty dataset");
  if (D.X.cols() != p.dim()) throw std::invalid_argument("grad_w: input width mismatch");
  Eigen::MatrixXd pre = D.X * p.W;  // N x L
  pre.rowwise() += p.b.transpose();
  const Eigen::VectorXd resid = pre.cwiseMax(0.0) * p.a - D.y;
  Eigen::MatrixXd gate = (pre.array() > 0.0).cast<double>().matrix();
  gate = gate.array().colwise() * resid.array();
  Eigen::MatrixXd g = D.X.transpose() * gate / static_cast<double>(D.y.size());
  return g * p.a.asDiagonal();
}

// (1/N) K (K^T a - y) + lambda a
inline Eigen::VectorXd grad_a(const NetworkParams& p, const LabeledSet& D, double lambda) {
  if (D.y.size() == 0) throw std::invalid_argument("grad_a: empty dataset");
  const Eigen::MatrixXd K = kernel(p, D.X);
  return K * (K.transpose() * p.a - D.y) / static_cast<double>(D.y.size()) + lambda * p.a;
}

inline NetworkParams reinit_bias(NetworkParams p, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x62696173ULL);
  p.b = gaussian_vector(rng, p.width());
  return p;
}

enum class SurrogateKind { relu, softplus };

struct Surrogate {
  SurrogateKind kind = SurrogateKind::softplus;
  double gamma_s = 8.0;
};

struct SurrogateValue {
  double h = 0.0;
  double d1 = 0.0;
  std::optional<double> d2;  // empty for relu: the second derivative is undefined
};

inline double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline SurrogateValue surrogate_eval(const Surrogate& h, double t) {
  if (h.kind == SurrogateKind::relu) return {relu(t), relu_prime(t), std::nullopt};
  if (!(h.gamma_s > 0)) throw std::invalid_argument("surrogate_eval: softplus needs gamma_s > 0");
  const double z = h.gamma_s * t;
  const double sp = (z > 0 ? z : 0.0) + std::log1p(std::exp(-std::abs(z)));
  const double s = logistic(z);
  return {sp / h.gamma_s, s, h.gamma_s * s * (1.0 - s)};
}

inline double surrogate_d1(const Surrogate& h, double t) { return surrogate_eval(h, t).d1; }

inline double surrogate_d2(const Surrogate& h, double t) {
  const auto v = surrogate_eval(h, t);
  if (!v.d2) throw std::domain_error("surrogate: second derivative undefined for relu");
  return *v.d2;
}

// Network evaluated with the surrogate activation in place of relu.
inline double forward_surrogate(const NetworkParams& p, const Eigen::VectorXd& x, const Surrogate& h) {
  const Eigen::VectorXd pre = p.W.transpose() * x + p.b;
  double s = 0.0;
  for (Eigen::Index i = 0; i < pre.size(); ++i) s += p.a(i) * surrogate_eval(h, pre(i)).h;
  return s;
}

inline double loss_surrogate(const NetworkParams& p, const LabeledSet& D, const Surrogate& h) {
  double s = 0.0;
  for (Eigen::Index n = 0; n < D.X.rows(); ++n) {
    const double r = forward_surrogate(p, D.X.row(n).transpose(), h) - D.y(n);
    s += r * r;
  }
  return 0.5 * s / static_cast<double>(D.y.size());
}

// grad_w of the surrogate-activation loss.
inline Eigen::MatrixXd grad_w_surrogate(const NetworkParams& p, const LabeledSet& D, const Surrogate& h) {
  if (D.y.size() == 0) throw std::invalid_argument("grad_w: empty dataset");
  const Eigen::Index L = p.width();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(p.dim(), L);
  for (Eigen::Index n = 0; n < D.X.rows(); ++n) {
    const Eigen::VectorXd x = D.X.row(n).transpose();
    const Eigen::VectorXd pre = p.W.transpose() * x + p.b;
    double f = 0.0;
    Eigen::VectorXd d1(L);
    for (Eigen::Index i = 0; i < L; ++i) {
      const auto v = surrogate_eval(h, pre(i));
      f += p.a(i) * v.h;
      d1(i) = v.d1;
    }
    const double r = f - D.y(n);
    for (Eigen::Index i = 0; i < L; ++i) g.col(i) += r * p.a(i) * d1(i) * x;
  }
  return g / static_cast<double>(D.y.size());
}

}  // namespace distilab
