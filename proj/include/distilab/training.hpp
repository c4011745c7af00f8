#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "distilab/network.hpp"
#include "distilab/random.hpp"
#include "distilab/task_model.hpp"

namespace distilab {

enum class Role { teacher = 0, student = 1, distill = 2, retrain = 3 };
enum class TaskMode { single, multi };

// Unset fields are resolved from data at run time.
struct RoleHyper {
  std::optional<double> eta;
  std::optional<double> lambda;
  std::optional<long long> xi;
};

struct PhasePlan {
  std::array<std::array<RoleHyper, 4>, 2> roles{};
  int J = 1;
  int M1 = 1;
  std::optional<int> M2;
  double xi_const = 5.0;          // xi_2^Tr = ceil(xi_const / (eta lambda))
  double retrain_xi_const = 20.0;  // xi_2^R = ceil(retrain_xi_const / (eta sigma_min))
  std::vector<double> lambda_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0};

  RoleHyper& at(int t, Role r) { return roles.at(t - 1).at(static_cast<int>(r)); }
  const RoleHyper& at(int t, Role r) const { return roles.at(t - 1).at(static_cast<int>(r)); }
};

inline PhasePlan default_plan(int d, int r, TaskMode mode) {
  PhasePlan p;
  const double sd = std::sqrt(static_cast<double>(d));
  const double eta_r = mode == TaskMode::single ? static_cast<double>(d) : sd / r;
  const std::array<double, 4> eta1{sd, sd, sd, eta_r};
  for (int role = 0; role < 4; ++role) {
    auto& h = p.roles[0][role];
    h.eta = eta1[role];
    h.lambda = 1.0 / eta1[role];
    h.xi = 1;
  }
  p.at(2, Role::student).lambda = 0.0;
  p.at(2, Role::student).xi = 1;
  p.at(2, Role::distill).lambda = 0.0;
  p.at(2, Role::distill).xi = 1;
  p.at(2, Role::retrain).lambda = 0.0;
  p.M1 = mode == TaskMode::single ? 1 : static_cast<int>(std::ceil(r * r * std::log(static_cast<double>(d))));
  return p;
}

struct TrainRecord {
  NetworkParams params;
  std::vector<Eigen::MatrixXd> w_grads;  // phase 1: one gradient
  std::vector<Eigen::VectorXd> a_grads;  // phase 2: per-iteration gradients, when recorded
  Eigen::VectorXd a_grad_sum;            // phase 2: sum of all gradients
  long long iterations = 0;
};

// W <- W - eta (grad + lambda W); with lambda = 1/eta the W term cancels exactly.
inline TrainRecord phase1_step(const NetworkParams& p, const LabeledSet& D, double eta, double lambda) {
  if (!(eta > 0)) throw std::invalid_argument("phase1_step: eta must be positive");
  if (std::abs(eta * lambda - 1.0) > 1e-12)
    throw std::invalid_argument("phase1_step: contract requires lambda = 1/eta");
  TrainRecord rec;
  rec.params = p;
  Eigen::MatrixXd g = grad_w(p, D);
  rec.params.W = -eta * g;
  rec.w_grads.push_back(std::move(g));
  rec.iterations = 1;
  return rec;
}

// Quadratic a -> (1/2N)||K^T a - y||^2 + (lambda/2)||a||^2 via gram = K K^T / N, rhs = K y / N.
struct RidgeProblem {
  Eigen::MatrixXd gram;
  Eigen::VectorXd rhs;
  double y_sq = 0.0;  // ||y||^2 / N

  static RidgeProblem from_kernel(const Eigen::MatrixXd& K, const Eigen::VectorXd& y) {
    if (K.cols() != y.size()) throw std::invalid_argument("RidgeProblem: kernel/label mismatch");
    const double N = static_cast<double>(y.size());
    RidgeProblem rp;
    rp.gram = Eigen::MatrixXd(K.rows(), K.rows());
    rp.gram.setZero();
    rp.gram.selfadjointView<Eigen::Lower>().rankUpdate(K, 1.0 / N);
    rp.gram = rp.gram.selfadjointView<Eigen::Lower>();
    rp.rhs = K * y / N;
    rp.y_sq = y.squaredNorm() / N;
    return rp;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& a, double lambda) const { return gram * a - rhs + lambda * a; }

  double objective(const Eigen::VectorXd& a, double lambda) const {
    return 0.5 * a.dot(gram * a) - a.dot(rhs) + 0.5 * y_sq + 0.5 * lambda * a.squaredNorm();
  }
};

struct RidgeRun {
  Eigen::VectorXd a;
  Eigen::VectorXd grad_sum;
  std::vector<Eigen::VectorXd> grads;
  std::vector<Eigen::VectorXd> iterates;
  long long iterations = 0;
};

struct RidgeOptions {
  bool record = false;           // keep every gradient and iterate (literal path only)
  long long max_literal = 20000;  // beyond this the exact spectral recurrence is used
};

// Gradient descent on a RidgeProblem. Long runs are evaluated through the eigen-decomposition of
// the gram matrix: each eigencomponent follows c_T = c* + (1 - eta nu)^T (c_0 - c*).
class RidgeSolver {
 public:
  RidgeSolver(RidgeProblem problem, double eta, double lambda)
      : prob_(std::move(problem)), eta_(eta), lambda_(lambda) {
    if (!(eta > 0)) throw std::invalid_argument("ridge: eta must be positive");
    if (lambda < 0) throw std::invalid_argument("ridge: lambda must be nonnegative");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(prob_.gram);
    evals_ = es.eigenvalues().cwiseMax(0.0);
    evecs_ = es.eigenvectors();
    q_ = evecs_.transpose() * prob_.rhs;
    const double top = evals_.size() ? evals_.maxCoeff() : 0.0;
    if (!(eta_ * (lambda_ + top) < 2.0))
      throw std::invalid_argument("ridge: step size violates eta (lambda + ||K||^2/N) < 2");
  }

  const RidgeProblem& problem() const { return prob_; }
  const Eigen::VectorXd& eigenvalues() const { return evals_; }
  const Eigen::MatrixXd& eigenvectors() const { return evecs_; }

  RidgeRun run(const Eigen::VectorXd& a0, long long xi, const RidgeOptions& opt = {}) const {
    if (xi < 0) throw std::invalid_argument("ridge: negative iteration count");
    if (a0.size() != prob_.rhs.size()) throw std::invalid_argument("ridge: a0 has wrong length");
    if (opt.record || xi <= opt.max_literal) return literal(a0, xi, opt.record);
    return spectral(a0, xi);
  }

  // Batched spectral evaluation, one column of A0 per initialisation.
  Eigen::MatrixXd run_batch(const Eigen::MatrixXd& A0, long long xi, Eigen::MatrixXd* grad_sums = nullptr) const {
    Eigen::MatrixXd C = evecs_.transpose() * A0;
    for (Eigen::Index k = 0; k < evals_.size(); ++k) {
      const auto [decay, drift, fixed] = component(k, xi);
      if (fixed) {
        C.row(k).array() += drift;
      } else {
        C.row(k).array() = drift + decay * (C.row(k).array() - drift);
      }
    }
    Eigen::MatrixXd A = evecs_ * C;
    if (grad_sums) *grad_sums = (A0 - A) / eta_;
    return A;
  }

  // a* = (gram + lambda I)^+ rhs restricted to the nonzero spectrum.
  Eigen::VectorXd fixed_point() const {
    Eigen::VectorXd c(evals_.size());
    const double tol = null_tolerance();
    for (Eigen::Index k = 0; k < evals_.size(); ++k) {
      const double nu = evals_(k) + lambda_;
      c(k) = nu > tol ? q_(k) / nu : 0.0;
    }
    return evecs_ * c;
  }

 private:
  double null_tolerance() const {
    const double top = evals_.size() ? evals_.maxCoeff() + lambda_ : 0.0;
    return 1e-14 * std::max(top, 1e-300);
  }

  // For component k returns (decay, target, null): c_T = target + decay (c_0 - target), or
  // c_T = c_0 + target for a null direction.
  std::tuple<double, double, bool> component(Eigen::Index k, long long xi) const {
    const double nu = evals_(k) + lambda_;
    if (nu <= null_tolerance()) return {1.0, 0.0, true};
    const double decay = std::pow(1.0 - eta_ * nu, static_cast<double>(xi));
    return {decay, q_(k) / nu, false};
  }

  RidgeRun literal(const Eigen::VectorXd& a0, long long xi, bool record) const {
    RidgeRun out;
    out.a = a0;
    out.grad_sum = Eigen::VectorXd::Zero(a0.size());
    if (record) {
      out.grads.reserve(static_cast<std::size_t>(xi));
      out.iterates.reserve(static_cast<std::size_t>(xi) + 1);
      out.iterates.push_back(a0);
    }
    for (long long t = 0; t < xi; ++t) {
      const Eigen::VectorXd g = prob_.gradient(out.a, lambda_);
      out.a -= eta_ * g;
      out.grad_sum += g;
      if (record) {
        out.grads.push_back(g);
        out.iterates.push_back(out.a);
      }
    }
    out.iterations = xi;
    return out;
  }

  RidgeRun spectral(const Eigen::VectorXd& a0, long long xi) const {
    RidgeRun out;
    Eigen::MatrixXd gs;
    out.a = run_batch(a0, xi, &gs);
    out.grad_sum = gs.col(0);
    out.iterations = xi;
    return out;
  }

  RidgeProblem prob_;
  double eta_;
  double lambda_;
  Eigen::VectorXd evals_;
  Eigen::MatrixXd evecs_;
  Eigen::VectorXd q_;
};

inline double top_gram_eigenvalue(const Eigen::MatrixXd& gram) {
  if (gram.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram, Eigen::EigenvaluesOnly);
  return std::max(0.0, es.eigenvalues().maxCoeff());
}

// 0.9 of the stability limit 2 / (lambda + ||K||^2 / N).
inline double stable_step(const Eigen::MatrixXd& gram, double lambda) {
  return 0.9 * 2.0 / (lambda + top_gram_eigenvalue(gram));
}

inline long long ridge_iterations(double xi_const, double eta, double lambda) {
  if (!(lambda > 0)) throw std::invalid_argument("ridge_iterations: lambda must be positive");
  return static_cast<long long>(std::ceil(xi_const / (eta * lambda)));
}

// a <- a - eta [(1/N) K (K^T a - y) + lambda a] for xi steps.
inline TrainRecord phase2_ridge(const NetworkParams& p, const LabeledSet& D, double eta, double lambda, long long xi,
                                const Eigen::VectorXd& a0, const RidgeOptions& opt = {}) {
  const Eigen::MatrixXd K = kernel(p, D.X);
  RidgeSolver solver(RidgeProblem::from_kernel(K, D.y), eta, lambda);
  RidgeRun run = solver.run(a0, xi, opt);
  TrainRecord rec;
  rec.params = p;
  rec.params.a = run.a;
  rec.a_grads = std::move(run.grads);
  rec.a_grad_sum = std::move(run.grad_sum);
  rec.iterations = xi;
  return rec;
}

// Ridge parameter minimising held-out MSE on an 80/20 split of (K, y).
inline double select_ridge_lambda(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, const std::vector<double>& grid,
                                  std::uint64_t seed) {
  if (grid.empty()) throw std::invalid_argument("select_ridge_lambda: empty grid");
  const Eigen::Index N = y.size();
  if (N < 5) return grid.back();
  std::vector<Eigen::Index> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(seed, 0x76616c69ULL);
  std::shuffle(perm.begin(), perm.end(), rng);
  const Eigen::Index ntr = (N * 4) / 5;
  Eigen::MatrixXd Ktr(K.rows(), ntr), Kva(K.rows(), N - ntr);
  Eigen::VectorXd ytr(ntr), yva(N - ntr);
  for (Eigen::Index i = 0; i < N; ++i) {
    if (i < ntr) {
      Ktr.col(i) = K.col(perm[i]);
      ytr(i) = y(perm[i]);
    } else {
      Kva.col(i - ntr) = K.col(perm[i]);
      yva(i - ntr) = y(perm[i]);
    }
  }
  const RidgeProblem rp = RidgeProblem::from_kernel(Ktr, ytr);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(rp.gram);
  const Eigen::VectorXd q = es.eigenvectors().transpose() * rp.rhs;
  double best = grid.front(), best_err = std::numeric_limits<double>::infinity();
  for (double lam : grid) {
    const Eigen::VectorXd c = q.array() / (es.eigenvalues().array().cwiseMax(0.0) + lam);
    const Eigen::VectorXd a = es.eigenvectors() * c;
    const double err = (Kva.transpose() * a - yva).squaredNorm();
    if (err < best_err) {
      best_err = err;
      best = lam;
    }
  }
  return best;
}

namespace detail {

inline bool is_symmetric_zero_output(const NetworkParams& p) {
  const Eigen::Index L = p.width();
  if (L % 2 != 0 || !p.b.isZero(0.0)) return false;
  for (Eigen::Index i = 0; i < L / 2; ++i) {
    if (p.a(i) != -p.a(L - 1 - i)) return false;
    if (p.W.col(i) != p.W.col(L - 1 - i)) return false;
  }
  return true;
}

// U = (1/N) X^T (y .* 1[X W > 0]), computed in cache-sized blocks.
inline Eigen::MatrixXd gated_moments(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::MatrixXd& W) {
  const Eigen::Index N = X.rows(), d = X.cols(), M = W.cols();
  const Eigen::MatrixXd Xy = X.array().colwise() * y.array();
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(d, M);
  constexpr Eigen::Index kRows = 2048, kCols = 256;
  Eigen::MatrixXd Z, mask;
  for (Eigen::Index c0 = 0; c0 < M; c0 += kCols) {
    const Eigen::Index nc = std::min(kCols, M - c0);
    for (Eigen::Index r0 = 0; r0 < N; r0 += kRows) {
      const Eigen::Index nr = std::min(kRows, N - r0);
      Z.noalias() = X.middleRows(r0, nr) * W.middleCols(c0, nc);
      mask = (Z.array() > 0.0).cast<double>();
      U.middleCols(c0, nc).noalias() += Xy.middleRows(r0, nr).transpose() * mask;
    }
  }
  return U / static_cast<double>(N);
}

}  // namespace detail

// Phase-1 teacher gradients for a batch of initialisations. Symmetric zero-output networks
// only need the gated moment of one neuron per pair.
inline std::vector<Eigen::MatrixXd> teacher_grads_t1(const std::vector<NetworkParams>& inits, const LabeledSet& D) {
  std::vector<Eigen::MatrixXd> out(inits.size());
  std::vector<std::size_t> fast;
  for (std::size_t j = 0; j < inits.size(); ++j) {
    if (detail::is_symmetric_zero_output(inits[j]))
      fast.push_back(j);
    else
      out[j] = grad_w(inits[j], D);
  }
  if (fast.empty()) return out;
  const Eigen::Index d = D.X.cols();
  Eigen::Index total = 0;
  for (std::size_t j : fast) total += inits[j].width() / 2;
  Eigen::MatrixXd Wu(d, total);
  Eigen::Index c = 0;
  for (std::size_t j : fast) {
    const Eigen::Index h = inits[j].width() / 2;
    Wu.middleCols(c, h) = inits[j].W.leftCols(h);
    c += h;
  }
  const Eigen::MatrixXd U = detail::gated_moments(D.X, D.y, Wu);
  c = 0;
  for (std::size_t j : fast) {
    const NetworkParams& p = inits[j];
    const Eigen::Index L = p.width(), h = L / 2;
    Eigen::MatrixXd g(d, L);
    for (Eigen::Index i = 0; i < h; ++i) {
      g.col(i) = -p.a(i) * U.col(c + i);
      g.col(L - 1 - i) = -p.a(L - 1 - i) * U.col(c + i);
    }
    out[j] = std::move(g);
    c += h;
  }
  return out;
}

struct RidgeSetting {
  double eta = 0.0;
  double lambda = 0.0;
  long long xi = 0;
};

// Resolves unset phase-2 teacher hyperparameters against the kernel of the training set.
inline RidgeSetting resolve_teacher_t2(const PhasePlan& plan, const Eigen::MatrixXd& K, const Eigen::VectorXd& y,
                                       const RidgeProblem& rp, std::uint64_t seed) {
  const RoleHyper& h = plan.at(2, Role::teacher);
  RidgeSetting s;
  s.lambda = h.lambda ? *h.lambda : select_ridge_lambda(K, y, plan.lambda_grid, seed);
  s.eta = h.eta ? *h.eta : stable_step(rp.gram, s.lambda);
  s.xi = h.xi ? *h.xi : ridge_iterations(plan.xi_const, s.eta, s.lambda);
  return s;
}

struct TeacherT2 {
  RidgeSetting setting;
  Eigen::MatrixXd A0;        // L x (J+1), column 0 is the zero initialisation
  Eigen::MatrixXd AT;        // final second layers
  Eigen::MatrixXd grad_sums;  // per-initialisation gradient sums
};

// Phase-2 teacher over J sign initialisations plus a_0 = 0, sharing W^(1) and b^(0).
inline TeacherT2 teacher_train_t2(const NetworkParams& theta1, const LabeledSet& D, const PhasePlan& plan, int J,
                                  std::uint64_t seed) {
  const Eigen::MatrixXd K = kernel(theta1, D.X);
  RidgeProblem rp = RidgeProblem::from_kernel(K, D.y);
  TeacherT2 out;
  out.setting = resolve_teacher_t2(plan, K, D.y, rp, seed);
  const Eigen::Index L = theta1.width();
  out.A0 = Eigen::MatrixXd::Zero(L, J + 1);
  Rng rng = make_rng(seed, 0x61696e69ULL);
  for (int j = 1; j <= J; ++j)
    for (Eigen::Index i = 0; i < L; ++i) out.A0(i, j) = random_sign(rng);
  RidgeSolver solver(std::move(rp), out.setting.eta, out.setting.lambda);
  out.AT = solver.run_batch(out.A0, out.setting.xi, &out.grad_sums);
  return out;
}

// Generic dispatcher: phase 1 for t = 1, ridge for t = 2.
inline std::vector<TrainRecord> teacher_train(const std::vector<NetworkParams>& batch, const LabeledSet& D,
                                              const PhasePlan& plan, int t, std::uint64_t seed = 0) {
  std::vector<TrainRecord> out;
  out.reserve(batch.size());
  if (t == 1) {
    const RoleHyper& h = plan.at(1, Role::teacher);
    const double eta = h.eta.value();
    const double lambda = h.lambda.value_or(1.0 / eta);
    if (std::abs(eta * lambda - 1.0) > 1e-12)
      throw std::invalid_argument("teacher_train: phase-1 contract requires lambda = 1/eta");
    auto grads = teacher_grads_t1(batch, D);
    for (std::size_t j = 0; j < batch.size(); ++j) {
      TrainRecord rec;
      rec.params = batch[j];
      rec.params.W = -eta * grads[j];
      rec.w_grads.push_back(std::move(grads[j]));
      rec.iterations = 1;
      out.push_back(std::move(rec));
    }
    return out;
  }
  if (t != 2) throw std::invalid_argument("teacher_train: t must be 1 or 2");
  if (batch.empty()) return out;
  for (const auto& p : batch)
    if (p.W != batch.front().W || p.b != batch.front().b)
      throw std::invalid_argument("teacher_train: t=2 batch must share W and b");
  const Eigen::MatrixXd K = kernel(batch.front(), D.X);
  RidgeProblem rp = RidgeProblem::from_kernel(K, D.y);
  const RidgeSetting s = resolve_teacher_t2(plan, K, D.y, rp, seed);
  RidgeSolver solver(std::move(rp), s.eta, s.lambda);
  for (const auto& p : batch) {
    RidgeRun run = solver.run(p.a, s.xi);
    TrainRecord rec;
    rec.params = p;
    rec.params.a = run.a;
    rec.a_grads = std::move(run.grads);
    rec.a_grad_sum = std::move(run.grad_sum);
    rec.iterations = s.xi;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace distilab
