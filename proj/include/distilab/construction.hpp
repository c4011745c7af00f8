#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace distilab {

struct HingeProfile {
  Eigen::VectorXd alpha;         // <w_i^(1), v>
  Eigen::VectorXd b;
  std::vector<Eigen::Index> D;   // active neurons
  std::vector<double> hinges;    // sorted, pairwise distinct
  double tauBar = 1.0;

  Eigen::Index Lstar() const { return static_cast<Eigen::Index>(D.size()); }
};

inline HingeProfile make_hinge_profile(const Eigen::MatrixXd& W1, const Eigen::VectorXd& b, const Eigen::VectorXd& v) {
  if (W1.rows() != v.size() || W1.cols() != b.size())
    throw std::invalid_argument("make_hinge_profile: shape mismatch");
  HingeProfile hp;
  hp.alpha = W1.transpose() * v;
  hp.b = b;
  const double amax = hp.alpha.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < hp.alpha.size(); ++i)
    if (amax > 0 && std::abs(hp.alpha(i)) >= 1e-12 * amax) hp.D.push_back(i);
  double tmax = 0.0;
  for (Eigen::Index i : hp.D) {
    const double t = -b(i) / hp.alpha(i);
    hp.hinges.push_back(t);
    tmax = std::max(tmax, std::abs(t));
  }
  std::sort(hp.hinges.begin(), hp.hinges.end());
  const double jitter = 1e-9 * (1.0 + tmax);
  for (std::size_t k = 1; k < hp.hinges.size(); ++k)
    if (hp.hinges[k] <= hp.hinges[k - 1]) hp.hinges[k] = hp.hinges[k - 1] + jitter;
  tmax = 0.0;
  for (double t : hp.hinges) tmax = std::max(tmax, std::abs(t));
  hp.tauBar = 1.0 + tmax;
  return hp;
}

// Two points inside every interior hinge interval, two beyond each end, mirrored through 0.
inline std::vector<double> scalar_set(const HingeProfile& hp) {
  if (hp.hinges.empty()) throw std::invalid_argument("scalar_set: no active neurons");
  const auto& tau = hp.hinges;
  const double tb = hp.tauBar;
  std::vector<double> cp;
  for (std::size_t k = 0; k + 1 < tau.size(); ++k) {
    cp.push_back((3.0 * tau[k] + tau[k + 1]) / 4.0);
    cp.push_back((tau[k] + 3.0 * tau[k + 1]) / 4.0);
  }
  cp.push_back(tau.front() - tb);
  cp.push_back(tau.front() - 2.0 * tb);
  cp.push_back(tau.back() + tb);
  cp.push_back(tau.back() + 2.0 * tb);
  std::vector<double> c = cp;
  for (double s : cp) c.push_back(-s);
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

// Rows are s * v for each scalar s.
inline Eigen::MatrixXd build_points(const Eigen::VectorXd& v, const std::vector<double>& C) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(C.size()), v.size());
  for (std::size_t m = 0; m < C.size(); ++m) X.row(static_cast<Eigen::Index>(m)) = C[m] * v.transpose();
  return X;
}

inline Eigen::Index max_attainable_rank(const Eigen::MatrixXd& W1, const Eigen::VectorXd& b) {
  Eigen::Index active = 0;
  bool positive_inactive = false;
  for (Eigen::Index i = 0; i < W1.cols(); ++i) {
    if (W1.col(i).norm() > 1e-12)
      ++active;
    else if (b(i) > 0)
      positive_inactive = true;
  }
  return active + (positive_inactive ? 1 : 0);
}

inline Eigen::Index numeric_rank(const Eigen::MatrixXd& M, double rel_tol = 1e-10) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const Eigen::VectorXd s = svd.singularValues();
  if (s.size() == 0 || s(0) <= 0) return 0;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * s(0)) ++r;
  return r;
}

struct RegularityResult {
  bool ok = false;
  Eigen::Index rank = 0;
  Eigen::Index max_rank = 0;
};

inline RegularityResult check_regularity(const Eigen::MatrixXd& Ktilde, const Eigen::MatrixXd& W1,
                                         const Eigen::VectorXd& b) {
  RegularityResult r;
  r.rank = numeric_rank(Ktilde);
  r.max_rank = max_attainable_rank(W1, b);
  r.ok = r.rank > 0 && r.rank == r.max_rank;
  return r;
}

}  // namespace distilab
