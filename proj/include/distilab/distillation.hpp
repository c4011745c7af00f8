#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "distilab/construction.hpp"
#include "distilab/network.hpp"
#include "distilab/random.hpp"
#include "distilab/training.hpp"

namespace distilab {

struct DistilledSet {
  Eigen::MatrixXd X;  // M x d
  Eigen::VectorXd y;
  int phase = 1;

  Eigen::Index size() const { return X.rows(); }
  LabeledSet as_labeled() const { return LabeledSet{X, y, std::nullopt}; }
};

struct LabelMode {
  enum class Kind { constant, chi } kind = Kind::constant;
  double value = 1.0;  // label for constant mode

  static LabelMode constant(double c) { return {Kind::constant, c}; }
  static LabelMode chi() { return {Kind::chi, 0.0}; }
};

// Points uniform on the sphere; labels constant, or with y^2 ~ chi(d) and a random sign.
inline DistilledSet init_D1(int M1, int d, LabelMode mode, std::uint64_t seed) {
  if (M1 < 1) throw std::invalid_argument("init_D1: M1 must be positive");
  Rng rng = make_rng(seed, 0x64317831ULL);
  DistilledSet s;
  s.phase = 1;
  s.X.resize(M1, d);
  s.y.resize(M1);
  std::chi_squared_distribution<double> chi2(d);
  for (int m = 0; m < M1; ++m) {
    s.X.row(m) = uniform_sphere(rng, d).transpose();
    if (mode.kind == LabelMode::Kind::constant) {
      s.y(m) = mode.value;
    } else {
      const double chi = std::sqrt(chi2(rng));
      s.y(m) = random_sign(rng) * std::sqrt(chi);
    }
  }
  return s;
}

namespace detail {

inline void require_zero_output(const std::vector<NetworkParams>& inits) {
  for (const auto& p : inits)
    if (!is_symmetric_zero_output(p))
      throw std::invalid_argument("gm_t1: closed form needs symmetric zero-output initialisations");
}

}  // namespace detail

// One step of gradient matching at t = 1 with lambda = 1/eta, for students whose activation has
// derivatives (d1, d2). For every distilled point
//   x^(1) = -(eta y / (M L J)) sum_{i,j} a_ij [d1(u) g_ij + d2(u) <g_ij, x> w_ij],  u = <w_ij, x> + b_ij,
// where g_ij is the recorded teacher gradient of neuron i in initialisation j.
template <class D1, class D2>
DistilledSet gm_t1_closed_form(const DistilledSet& D0, const std::vector<NetworkParams>& inits,
                               const std::vector<Eigen::MatrixXd>& teacher_grads, D1&& d1, D2&& d2, double eta) {
  if (inits.size() != teacher_grads.size() || inits.empty())
    throw std::invalid_argument("gm_t1: one teacher gradient per initialisation required");
  detail::require_zero_output(inits);
  const Eigen::Index M = D0.size();
  const Eigen::Index d = D0.X.cols();
  double count = 0.0;
  for (const auto& p : inits) count += static_cast<double>(p.width());
  DistilledSet out = D0;
  for (Eigen::Index m = 0; m < M; ++m) {
    const Eigen::VectorXd x = D0.X.row(m).transpose();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
    for (std::size_t j = 0; j < inits.size(); ++j) {
      const NetworkParams& p = inits[j];
      const Eigen::MatrixXd& g = teacher_grads[j];
      const Eigen::VectorXd u = p.W.transpose() * x + p.b;
      const Eigen::VectorXd gx = g.transpose() * x;
      for (Eigen::Index i = 0; i < p.width(); ++i) {
        const double s1 = p.a(i) * d1(u(i));
        const double s2 = p.a(i) * d2(u(i)) * gx(i);
        if (s1 != 0.0) acc.noalias() += s1 * g.col(i);
        if (s2 != 0.0) acc.noalias() += s2 * p.W.col(i);
      }
    }
    out.X.row(m) = (-eta * D0.y(m) / (static_cast<double>(M) * count)) * acc.transpose();
  }
  return out;
}

inline DistilledSet gm_t1(const DistilledSet& D0, const std::vector<NetworkParams>& inits,
                          const std::vector<Eigen::MatrixXd>& teacher_grads, const Surrogate& h, double eta,
                          double lambda) {
  if (h.kind == SurrogateKind::relu)
    throw std::domain_error("gm_t1: second derivative undefined for relu, use gm_t1_relu");
  if (std::abs(eta * lambda - 1.0) > 1e-12) throw std::invalid_argument("gm_t1: contract requires lambda = 1/eta");
  return gm_t1_closed_form(
      D0, inits, teacher_grads, [&](double t) { return surrogate_eval(h, t).d1; },
      [&](double t) { return *surrogate_eval(h, t).d2; }, eta);
}

// Relu variant: only the first-derivative term survives.
inline DistilledSet gm_t1_relu(const DistilledSet& D0, const std::vector<NetworkParams>& inits,
                               const std::vector<Eigen::MatrixXd>& teacher_grads, double eta) {
  return gm_t1_closed_form(
      D0, inits, teacher_grads, [](double t) { return relu_prime(t); }, [](double) { return 0.0; }, eta);
}

// m = (1/J) sum_j (1 - (1/L) sum_i <g^S_ij, g^Tr_ij>), student gradients taken with activation h.
inline double matching_loss(const DistilledSet& S, const std::vector<NetworkParams>& inits,
                            const std::vector<Eigen::MatrixXd>& teacher_grads, const Surrogate& h) {
  const LabeledSet D = S.as_labeled();
  double m = 0.0;
  for (std::size_t j = 0; j < inits.size(); ++j) {
    const Eigen::MatrixXd gs = grad_w_surrogate(inits[j], D, h);
    m += 1.0 - (gs.array() * teacher_grads[j].array()).sum() / static_cast<double>(inits[j].width());
  }
  return m / static_cast<double>(inits.size());
}

// Central-difference gradient of the matching loss with respect to the distilled points.
inline Eigen::MatrixXd matching_loss_fd_grad(const DistilledSet& S, const std::vector<NetworkParams>& inits,
                                             const std::vector<Eigen::MatrixXd>& teacher_grads, const Surrogate& h,
                                             double step = 1e-5) {
  Eigen::MatrixXd g(S.X.rows(), S.X.cols());
  DistilledSet probe = S;
  for (Eigen::Index m = 0; m < S.X.rows(); ++m)
    for (Eigen::Index k = 0; k < S.X.cols(); ++k) {
      const double x0 = S.X(m, k);
      probe.X(m, k) = x0 + step;
      const double up = matching_loss(probe, inits, teacher_grads, h);
      probe.X(m, k) = x0 - step;
      const double dn = matching_loss(probe, inits, teacher_grads, h);
      probe.X(m, k) = x0;
      g(m, k) = (up - dn) / (2.0 * step);
    }
  return g;
}

// Optional cross-check: max relative gap between the closed form and -eta * (finite-difference gradient).
inline double gm_t1_fd_gap(const DistilledSet& D0, const DistilledSet& D1, const std::vector<NetworkParams>& inits,
                           const std::vector<Eigen::MatrixXd>& teacher_grads, const Surrogate& h, double eta) {
  const Eigen::MatrixXd fd = -eta * matching_loss_fd_grad(D0, inits, teacher_grads, h);
  const double scale = std::max(fd.cwiseAbs().maxCoeff(), 1e-300);
  return (fd - D1.X).cwiseAbs().maxCoeff() / scale;
}

// Retraining at t = 1: one phase-1 step on the distilled set.
inline NetworkParams retrain_t1(const NetworkParams& reference, const DistilledSet& D1, double eta) {
  return phase1_step(reference, D1.as_labeled(), eta, 1.0 / eta).params;
}

enum class ConstructionStrategy { per_point, compact };

struct D2Init {
  DistilledSet set;
  std::vector<Eigen::VectorXd> directions;  // one ray per point group
  std::vector<std::vector<double>> scalars;
};

inline D2Init init_D2(const Eigen::MatrixXd& W1, const Eigen::VectorXd& b, ConstructionStrategy strategy,
                      const DistilledSet& D1) {
  D2Init out;
  if (strategy == ConstructionStrategy::compact) {
    out.directions.push_back(D1.X.colwise().mean().transpose());
  } else {
    for (Eigen::Index m = 0; m < D1.size(); ++m) out.directions.push_back(D1.X.row(m).transpose());
  }
  std::vector<Eigen::MatrixXd> blocks;
  Eigen::Index total = 0;
  for (const auto& v : out.directions) {
    auto C = scalar_set(make_hinge_profile(W1, b, v));
    blocks.push_back(build_points(v, C));
    total += blocks.back().rows();
    out.scalars.push_back(std::move(C));
  }
  out.set.phase = 2;
  out.set.X.resize(total, W1.rows());
  Eigen::Index r = 0;
  for (const auto& B : blocks) {
    out.set.X.middleRows(r, B.rows()) = B;
    r += B.rows();
  }
  out.set.y = Eigen::VectorXd::Zero(total);
  return out;
}

// y_hat = (1/J) sum_j f_{theta_j}(x_hat) for networks sharing (W, b) with second layers in the columns of A.
inline Eigen::VectorXd label_D2_init(const NetworkParams& shared, const Eigen::MatrixXd& A, const Eigen::MatrixXd& Xhat) {
  if (A.cols() == 0) throw std::invalid_argument("label_D2_init: empty batch");
  const Eigen::MatrixXd Kt = kernel(shared, Xhat);
  return Kt.transpose() * A.rowwise().mean();
}

// One step of gradient matching on the labels at t = 2:
//   y^(1) = y^(0) - eta_D (1/J) sum_j grad_y (1 - <S_j, g^S_j(y)>)
// with S_j the teacher gradient sum and g^S_j = (1/M) Kt (Kt^T a_j^(0) - y) the student gradient.
inline DistilledSet gm_t2(const DistilledSet& D2, const Eigen::MatrixXd& A0, const Eigen::MatrixXd& grad_sums,
                          const Eigen::MatrixXd& Kt, double eta_D) {
  if (A0.cols() != grad_sums.cols() || A0.cols() == 0) throw std::invalid_argument("gm_t2: batch mismatch");
  const double M = static_cast<double>(D2.size());
  // grad_y (1 - <S, g^S>) = (1/M) Kt^T S, so the step subtracts (eta_D / M) Kt^T mean_j S_j.
  const Eigen::VectorXd Sbar = grad_sums.rowwise().mean();
  DistilledSet out = D2;
  out.y = D2.y - eta_D * (Kt.transpose() * Sbar) / M;
  return out;
}

struct GdRetrainOptions {
  std::optional<double> eta;
  std::optional<long long> xi;
  double xi_const = 20.0;
  RidgeOptions ridge;
};

struct GdRetrainResult {
  Eigen::VectorXd a;
  double eta = 0.0;
  long long xi = 0;
  double sigma_min = 0.0;
  std::vector<Eigen::VectorXd> iterates;
};

// Smallest eigenvalue of a PSD matrix above 1e-10 of the largest.
inline double smallest_positive_eigenvalue(const Eigen::MatrixXd& G) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  double best = top;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev(i) > 1e-10 * top) best = std::min(best, ev(i));
  return best;
}

// Plain GD from a = 0 on (1/2M)||Kt^T a - y||^2; converges to (Kt^T)^+ y.
inline GdRetrainResult retrain_t2_gd(const NetworkParams& theta1, const DistilledSet& D2, const GdRetrainOptions& opt = {}) {
  const Eigen::MatrixXd Kt = kernel(theta1, D2.X);
  RidgeProblem rp = RidgeProblem::from_kernel(Kt, D2.y);
  GdRetrainResult out;
  out.sigma_min = smallest_positive_eigenvalue(rp.gram);
  // 1/top keeps every mode contracting monotonically, so xi counts e-folds of the slowest one.
  out.eta = opt.eta ? *opt.eta : 1.0 / top_gram_eigenvalue(rp.gram);
  out.xi = opt.xi ? *opt.xi : static_cast<long long>(std::ceil(opt.xi_const / (out.eta * out.sigma_min)));
  RidgeSolver solver(std::move(rp), out.eta, 0.0);
  RidgeRun run = solver.run(Eigen::VectorXd::Zero(theta1.width()), out.xi, opt.ridge);
  out.a = std::move(run.a);
  out.iterates = std::move(run.iterates);
  return out;
}

// Single step from a = 0: a = (eta / M) Kt y.
inline Eigen::VectorXd retrain_t2_onestep(const NetworkParams& theta1, const DistilledSet& D2, double eta) {
  const Eigen::MatrixXd Kt = kernel(theta1, D2.X);
  return eta / static_cast<double>(D2.size()) * (Kt * D2.y);
}

struct PmOptions {
  double eta_S = 0.0;                  // retraining step used inside the objective
  std::optional<double> eta_D;         // default: stable step for the label objective
  std::optional<double> lambda_D;      // default: 1e-10 of the top curvature
  std::optional<long long> xi_D;       // default: ceil(xi_const / (eta_D lambda_D))
  double xi_const = 20.0;
  RidgeOptions ridge;
};

struct PmResult {
  DistilledSet set;
  double eta_D = 0.0;
  double lambda_D = 0.0;
  long long xi_D = 0;
  RidgeProblem problem;  // quadratic in y_hat, for oracles
};

// GD on y_hat of (1/N)||K^T (eta_S/M) Kt y_hat - y||^2 + (lambda_D/2)||y_hat||^2; points stay fixed.
inline PmResult pm_t2(const DistilledSet& D2, const LabeledSet& Dtr, const NetworkParams& theta1, const PmOptions& opt) {
  if (!(opt.eta_S > 0)) throw std::invalid_argument("pm_t2: eta_S must be positive");
  const Eigen::MatrixXd K = kernel(theta1, Dtr.X);
  const Eigen::MatrixXd Kt = kernel(theta1, D2.X);
  const double N = static_cast<double>(Dtr.y.size());
  const double M = static_cast<double>(D2.size());
  const Eigen::MatrixXd Q = K.transpose() * ((opt.eta_S / M) * Kt);  // N x M
  PmResult out;
  out.problem.gram = (2.0 / N) * Q.transpose() * Q;
  out.problem.rhs = (2.0 / N) * Q.transpose() * Dtr.y;
  out.problem.y_sq = 2.0 * Dtr.y.squaredNorm() / N;
  const double top = top_gram_eigenvalue(out.problem.gram);
  out.lambda_D = opt.lambda_D ? *opt.lambda_D : 1e-10 * top;
  out.eta_D = opt.eta_D ? *opt.eta_D : stable_step(out.problem.gram, out.lambda_D);
  out.xi_D = opt.xi_D ? *opt.xi_D : ridge_iterations(opt.xi_const, out.eta_D, out.lambda_D);
  RidgeSolver solver(out.problem, out.eta_D, out.lambda_D);
  out.set = D2;
  out.set.y = solver.run(D2.y, out.xi_D, opt.ridge).a;
  return out;
}

}  // namespace distilab
