#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "distilab/hermite.hpp"
#include "distilab/network.hpp"
#include "distilab/quadrature.hpp"
#include "distilab/random.hpp"
#include "distilab/task_model.hpp"

namespace distilab {

// Derivatives of a student activation, as used inside the population gradient.
struct Activation {
  std::function<double(double)> d1;
  std::function<double(double)> d2;

  static Activation from(const Surrogate& h) {
    if (h.kind == SurrogateKind::relu) throw std::domain_error("oracle: surrogate must be twice differentiable");
    return {[h](double t) { return surrogate_eval(h, t).d1; }, [h](double t) { return *surrogate_eval(h, t).d2; }};
  }
  // h(t) = t^2 / 2
  static Activation quadratic() {
    return {[](double t) { return t; }, [](double) { return 1.0; }};
  }
};

// Coefficients of E_w[w <b,w>^k phi(<w,x>)] and E_w[<b,w>^k phi(<w,x>)] for unit b, x with
// s = <b,x>, q = |b - s x|, w uniform on the sphere.
struct SphereProjection {
  double along_x = 0.0;     // coefficient of x
  double along_perp = 0.0;  // coefficient of b_perp = b - s x
};

inline double binomial(int n, int k) { return std::exp(log_factorial(n) - log_factorial(k) - log_factorial(n - k)); }

template <class Phi>
double sphere_scalar_moment(int k, double s, double q, Phi&& phi, const QuadratureRule& rule) {
  double acc = 0.0;
  for (int i = 0; i <= k; i += 2)
    acc += binomial(k, i) * std::pow(s, k - i) * std::pow(q, i) * sphere_moment(i / 2, rule.d) *
           weighted_integral(phi, k - i, i / 2, rule);
  return acc;
}

template <class Phi>
SphereProjection sphere_vector_moment(int k, double s, double q, Phi&& phi, const QuadratureRule& rule) {
  SphereProjection out;
  for (int i = 0; i <= k; i += 2)
    out.along_x += binomial(k, i) * std::pow(s, k - i) * std::pow(q, i) * sphere_moment(i / 2, rule.d) *
                   weighted_integral(phi, k - i + 1, i / 2, rule);
  for (int i = 1; i <= k; i += 2)
    out.along_perp += binomial(k, i) * std::pow(s, k - i) * std::pow(q, i - 1) * sphere_moment((i + 1) / 2, rule.d) *
                      weighted_integral(phi, k - i, (i + 1) / 2, rule);
  return out;
}

// A_k..H_k and D_k for k = 0..kmax.
struct SingleIndexCoefficients {
  std::vector<double> A, B, D, E, F, G, H;
};

inline SingleIndexCoefficients single_index_coefficients(int kmax, double s, double q, const Activation& h,
                                                         const QuadratureRule& rule) {
  SingleIndexCoefficients c;
  auto th2 = [&](double t) { return t * h.d2(t); };
  for (int k = 0; k <= kmax; ++k) {
    const auto ab = sphere_vector_moment(k, s, q, h.d1, rule);
    const auto ef = sphere_vector_moment(k, s, q, h.d2, rule);
    const auto gh = sphere_vector_moment(k, s, q, th2, rule);
    c.A.push_back(ab.along_x);
    c.B.push_back(ab.along_perp);
    c.D.push_back(sphere_scalar_moment(k, s, q, h.d1, rule));
    c.E.push_back(ef.along_x);
    c.F.push_back(ef.along_perp);
    c.G.push_back(gh.along_x);
    c.H.push_back(gh.along_perp);
  }
  return c;
}

// Population matching gradient for a single-index target with preprocessing removing C_0, C_1:
//   G = b sum_{k>=1} c_{k+1} C_{k+1}/k! D_k + sum_{k>=2} c_{k+2} C_k/k! (A_k x + B_k b_perp)
//     + s sum_{k>=1} c_{k+1} C_{k+1}/k! (E_k x + F_k b_perp) + sum_{k>=2} c_{k+2} C_k/k! (G_k x + H_k b_perp)
inline Eigen::VectorXd popgrad_single_closed(const MultiIndexTask& task, const Eigen::VectorXd& xt, const Activation& h,
                                             const QuadratureRule& rule) {
  if (task.r != 1) throw std::invalid_argument("popgrad_single_closed: r must be 1");
  if (rule.d != task.d) throw std::invalid_argument("popgrad_single_closed: quadrature built for another d");
  const TaskSpectra sp = task_spectra(task);
  const int p = static_cast<int>(sp.C.size()) - 1;
  const Eigen::VectorXd beta = task.B.col(0);
  const double s = beta.dot(xt);
  const Eigen::VectorXd bperp = beta - s * xt;
  const double q = bperp.norm();
  const auto co = single_index_coefficients(p, s, q, h, rule);
  auto Ck = [&](int k) { return k <= p ? sp.C[k].values()[0] : 0.0; };
  double cb = 0.0, cx = 0.0, cp = 0.0;
  for (int k = 1; k + 1 <= p; ++k) {
    const double w = relu_hermite_coeff(k + 1) * Ck(k + 1) / factorial(k);
    cb += w * co.D[k];
    cx += s * w * co.E[k];
    cp += s * w * co.F[k];
  }
  for (int k = 2; k <= p; ++k) {
    const double w = relu_hermite_coeff(k + 2) * Ck(k) / factorial(k);
    cx += w * (co.A[k] + co.G[k]);
    cp += w * (co.B[k] + co.H[k]);
  }
  return cb * beta + cx * xt + cp * bperp;
}

// c_d = (1/d) E_{f_{d+2}}[h''] + (1/(d-1)) E_{f_d}[(1 - t^2) h''].
inline double leading_coefficient(int d, const Activation& h, int nodes = 400) {
  const QuadratureRule rd = sphere_rule(d, nodes);
  const QuadratureRule rd2 = sphere_rule(d + 2, nodes);
  return weighted_integral(h.d2, 0, 0, rd2) / d + weighted_integral(h.d2, 0, 1, rd) / (d - 1.0);
}

struct DominantTerm {
  Eigen::VectorXd value;  // c_d H x
  double c_d = 0.0;
  double residual_scale = 0.0;  // r / d^2
};

// Dominant multi-index term c_d H x. The relu coefficient c_2 multiplying it in the full
// gradient is not included.
inline DominantTerm popgrad_multi_dominant(const MultiIndexTask& task, const Eigen::VectorXd& xt, const Activation& h,
                                           int nodes = 400) {
  const TaskSpectra sp = task_spectra(task);
  DominantTerm out;
  out.c_d = leading_coefficient(task.d, h, nodes);
  out.value = out.c_d * (sp.H * xt);
  out.residual_scale = static_cast<double>(task.r) / (static_cast<double>(task.d) * task.d);
  return out;
}

struct McEstimate {
  Eigen::VectorXd mean;
  Eigen::VectorXd se;
};

// Monte-Carlo estimate of E_w[E_x[f(x) x relu'(<w,x>)] h'(<w,x~>) + w h''(<w,x~>) <E_x[f(x) x relu'(<w,x>)], x~>]
// with f the population-preprocessed target. Each of nW antithetic pairs (w, -w) shares nX inputs.
// The integrand sees x only through B^T x and <w,x>, and is otherwise linear in x, so every input is
// replaced by its conditional mean given those projections: x = Q z with Q an orthonormal basis of
// span{B, w} and z ~ N(0, I). This is unbiased and drops the noise of the remaining d - r - 1 coordinates.
inline McEstimate popgrad_mc(const MultiIndexTask& task, const Eigen::VectorXd& xt, const Activation& h, long long nW,
                             long long nX, std::uint64_t seed) {
  if (nW < 2 || nX < 1) throw std::invalid_argument("popgrad_mc: need nW >= 2 and nX >= 1");
  const Preprocessing pre = population_preprocessing(task);
  const int d = task.d, r = task.r;
  if (r + 1 > d) throw std::invalid_argument("popgrad_mc: need r < d");
  Rng rng = make_rng(seed, 0x6d636f72ULL);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d), sumsq = Eigen::VectorXd::Zero(d);
  constexpr Eigen::Index kBlock = 4096;
  Eigen::MatrixXd basis(d, r + 1);
  basis.leftCols(r) = task.B;
  Eigen::VectorXd z(r);
  for (long long g = 0; g < nW; ++g) {
    const Eigen::VectorXd w = uniform_sphere(rng, d);
    basis.col(r) = w;
    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(basis).householderQ() *
                              Eigen::MatrixXd::Identity(d, r + 1);
    // Coordinates of B, w and x~ in the basis Q.
    const Eigen::MatrixXd QB = Q.transpose() * task.B;
    const Eigen::VectorXd Qw = Q.transpose() * w, Qx = Q.transpose() * xt, Qg = Q.transpose() * pre.gamma;
    const double t = w.dot(xt);
    const double h1p = h.d1(t), h2p = h.d2(t), h1m = h.d1(-t), h2m = h.d2(-t);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(r + 1);
    double accw = 0.0;
    for (long long x0 = 0; x0 < nX; x0 += kBlock) {
      const Eigen::Index nb = static_cast<Eigen::Index>(std::min<long long>(kBlock, nX - x0));
      const Eigen::MatrixXd Z = gaussian_matrix(rng, r + 1, nb);  // columns are projected inputs
      const Eigen::MatrixXd U = QB.transpose() * Z;               // B^T x
      const Eigen::VectorXd wx = Z.transpose() * Qw;
      const Eigen::VectorXd xx = Z.transpose() * Qx;
      const Eigen::VectorXd gx = Z.transpose() * Qg;
      Eigen::VectorXd cx(nb);
      double cw = 0.0;
      for (Eigen::Index n = 0; n < nb; ++n) {
        z = U.col(n);
        const double f = task.link(z) - pre.alpha - gx(n);
        // +w contributes where <w,x> > 0, -w where <w,x> < 0.
        if (wx(n) > 0) {
          cx(n) = f * h1p;
          cw += f * h2p * xx(n);
        } else if (wx(n) < 0) {
          cx(n) = f * h1m;
          cw -= f * h2m * xx(n);
        } else {
          cx(n) = 0.0;
        }
      }
      acc += Z * cx;
      accw += cw;
    }
    const Eigen::VectorXd v = (Q * acc + w * accw) / (2.0 * static_cast<double>(nX));
    sum += v;
    sumsq += v.cwiseProduct(v);
  }
  const double n = static_cast<double>(nW);
  McEstimate out;
  out.mean = sum / n;
  const Eigen::VectorXd var = (sumsq / n - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0) * (n / (n - 1.0));
  out.se = (var / n).cwiseSqrt();
  return out;
}

struct PopGradReport {
  Eigen::VectorXd closedForm;
  Eigen::VectorXd mc;
  Eigen::VectorXd mcSe;
  double cosToTarget = 0.0;  // cos(mc, H x~)
  double c_d = 0.0;
};

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

struct IbpRow {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;
};

// Integration-by-parts and moment identities of the sphere-slice density, both sides by quadrature.
inline std::vector<IbpRow> ibp_suite(const Activation& h, int d, int nodes = 400) {
  const QuadratureRule rd = sphere_rule(d, nodes);
  const QuadratureRule rd2 = sphere_rule(d + 2, nodes);
  std::vector<IbpRow> rows;
  auto add = [&](std::string name, double l, double r) { rows.push_back({std::move(name), l, r, std::abs(l - r)}); };
  auto one = [](double) { return 1.0; };
  add("E[t h'(t)] = E_{d+2}[h'']/d", weighted_integral(h.d1, 1, 0, rd), weighted_integral(h.d2, 0, 0, rd2) / d);
  add("E[t^2] = 1/d", weighted_integral(one, 2, 0, rd), 1.0 / d);
  add("E[1-t^2] = norm_d/norm_{d+2}", weighted_integral(one, 0, 1, rd),
      std::exp(log_sphere_density_norm(d) - log_sphere_density_norm(d + 2)));
  add("E[1] = 1", weighted_integral(one, 0, 0, rd), 1.0);
  return rows;
}

}  // namespace distilab
