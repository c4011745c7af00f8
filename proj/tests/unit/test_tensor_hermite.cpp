#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "distilab/hermite.hpp"
#include "distilab/quadrature.hpp"
#include "distilab/random.hpp"
#include "distilab/tensor.hpp"

using namespace distilab;

namespace {

DenseTensor random_tensor(int order, int dim, std::uint64_t seed) {
  Rng rng = make_rng(seed, 7);
  std::normal_distribution<double> g;
  DenseTensor t(order, dim);
  for (double& v : t.values()) v = g(rng);
  return t;
}

// Brute-force symmetrisation by enumerating every permutation of every index tuple.
DenseTensor sym_bruteforce(const DenseTensor& t) {
  const int k = t.order();
  DenseTensor out(k, t.dim());
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<int>> perms;
  do perms.push_back(perm);
  while (std::next_permutation(perm.begin(), perm.end()));
  std::vector<int> idx(k), p(k);
  for (std::size_t f = 0; f < out.size(); ++f) {
    out.unflatten(f, idx);
    double s = 0.0;
    for (const auto& q : perms) {
      for (int i = 0; i < k; ++i) p[i] = idx[q[i]];
      s += t.at(p);
    }
    out.values()[f] = s / static_cast<double>(perms.size());
  }
  return out;
}

Eigen::MatrixXd orthonormal(int d, int r, std::uint64_t seed) {
  Rng rng = make_rng(seed, 3);
  const Eigen::MatrixXd G = gaussian_matrix(rng, d, r);
  return Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ() * Eigen::MatrixXd::Identity(d, r);
}

}  // namespace

TEST(Hermite, KnownValues) {
  EXPECT_DOUBLE_EQ(hermite1d(2, 0.0), -1.0);
  EXPECT_DOUBLE_EQ(hermite1d(0, 7.3), 1.0);
  EXPECT_DOUBLE_EQ(hermite1d(3, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(hermite1d(4, 0.0), 3.0);
}

TEST(Hermite, Recurrence) {
  for (double x : {-2.5, -0.3, 0.0, 1.1, 3.7})
    for (int k = 1; k < 12; ++k)
      EXPECT_NEAR(hermite1d(k + 1, x), x * hermite1d(k, x) - k * hermite1d(k - 1, x),
                  1e-9 * (1.0 + std::abs(hermite1d(k + 1, x))));
  const auto all = hermite_all(8, 1.3);
  for (int k = 0; k <= 8; ++k) EXPECT_DOUBLE_EQ(all[k], hermite1d(k, 1.3));
}

TEST(Hermite, MonteCarloOrthogonality) {
  const int n = 1000000, K = 6;
  Rng rng = make_rng(11, 0);
  std::normal_distribution<double> g;
  std::vector<double> sum((K + 1) * (K + 1), 0.0), sumsq((K + 1) * (K + 1), 0.0);
  for (int s = 0; s < n; ++s) {
    const auto h = hermite_all(K, g(rng));
    for (int j = 0; j <= K; ++j)
      for (int k = 0; k <= K; ++k) {
        const double v = h[j] * h[k];
        sum[j * (K + 1) + k] += v;
        sumsq[j * (K + 1) + k] += v * v;
      }
  }
  for (int j = 0; j <= K; ++j)
    for (int k = 0; k <= K; ++k) {
      const double mean = sum[j * (K + 1) + k] / n;
      const double var = sumsq[j * (K + 1) + k] / n - mean * mean;
      const double se = std::sqrt(var / n);
      const double expected = j == k ? factorial(k) : 0.0;
      EXPECT_LE(std::abs(mean - expected), 5.0 * se) << "j=" << j << " k=" << k;
    }
}

TEST(ReluHermite, Coefficients) {
  const double s = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  EXPECT_DOUBLE_EQ(relu_hermite_coeff(0), s);
  EXPECT_DOUBLE_EQ(relu_hermite_coeff(1), 0.5);
  EXPECT_DOUBLE_EQ(relu_hermite_coeff(2), s);
  EXPECT_DOUBLE_EQ(relu_hermite_coeff(3), 0.0);
  EXPECT_NEAR(relu_hermite_coeff(4), -0.3989422804, 1e-9);
  const auto c = relu_hermite_coeffs(15);
  EXPECT_EQ(c.maxOrder, 15);
  for (int k = 3; k <= 15; k += 2) EXPECT_EQ(c.c[k], 0.0);
  // Against the unsimplified series (2m)! / (m! 2^m (2m-1)).
  for (int m = 1; m <= 6; ++m) {
    const double raw = factorial(2 * m) / (factorial(m) * std::pow(2.0, m) * (2 * m - 1)) * s;
    EXPECT_NEAR(relu_hermite_coeff(2 * m), (m % 2 ? 1.0 : -1.0) * raw, 1e-9 * raw);
  }
}

TEST(ReluHermite, PartialSumsConverge) {
  // L2 error of the truncated expansion, estimated on a fixed Gaussian sample.
  Rng rng = make_rng(5, 0);
  std::normal_distribution<double> g;
  std::vector<double> xs(200000);
  for (double& x : xs) x = g(rng);
  const auto c = relu_hermite_coeffs(16);
  double prev = std::numeric_limits<double>::infinity();
  for (int K : {2, 4, 8, 16}) {
    double err = 0.0;
    for (double x : xs) {
      const auto h = hermite_all(K, x);
      double s = 0.0;
      for (int k = 0; k <= K; ++k) s += c.c[k] / factorial(k) * h[k];
      err += std::pow(s - std::max(0.0, x), 2);
    }
    err /= static_cast<double>(xs.size());
    EXPECT_LT(err, prev) << "K=" << K;
    prev = err;
  }
}

TEST(Tensor, ShapeAndAccess) {
  DenseTensor t(3, 2);
  EXPECT_EQ(t.size(), 8u);
  EXPECT_THROW(DenseTensor(2, 3, std::vector<double>(5)), std::invalid_argument);
  const DenseTensor s = DenseTensor::scalar(4.5);
  EXPECT_EQ(s.order(), 0);
  EXPECT_DOUBLE_EQ(s.as_scalar(), 4.5);
  DenseTensor m = DenseTensor::from_matrix((Eigen::Matrix2d() << 1, 2, 3, 4).finished());
  EXPECT_DOUBLE_EQ(m({0, 1}), 2.0);
  EXPECT_DOUBLE_EQ(m({1, 0}), 3.0);
}

TEST(Tensor, SymExamples) {
  DenseTensor t(2, 2, {0, 1, 0, 0});
  const DenseTensor s = sym(t);
  EXPECT_DOUBLE_EQ(s({0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(s({1, 0}), 0.5);
  EXPECT_DOUBLE_EQ(s({0, 0}), 0.0);
  const DenseTensor v = outer_power(Eigen::Vector3d(1, -2, 0.5), 3);
  EXPECT_LE(max_abs_diff(sym(v), v), 1e-15);
}

TEST(Tensor, SymMatchesBruteForceAndIsIdempotent) {
  for (int k = 2; k <= 4; ++k)
    for (int d = 2; d <= 4; ++d) {
      const DenseTensor t = random_tensor(k, d, 100 * k + d);
      const DenseTensor s = sym(t);
      EXPECT_LE(max_abs_diff(s, sym_bruteforce(t)), 1e-12);
      EXPECT_LE(max_abs_diff(sym(s), s), 1e-12);
      EXPECT_LE(s.frobenius_norm(), t.frobenius_norm() + 1e-12);
      EXPECT_TRUE(is_symmetric(s, 1e-12));
    }
}

TEST(Tensor, ActionExamples) {
  Eigen::Matrix3d M;
  M << 1, 2, 3, 4, 5, 6, 7, 8, 10;
  const Eigen::Vector3d v(0.5, -1, 2);
  const DenseTensor Mv = tensor_action(DenseTensor::from_matrix(M), DenseTensor::from_vector(v));
  EXPECT_LE((Mv.as_vector() - M * v).cwiseAbs().maxCoeff(), 1e-14);
  const DenseTensor T = random_tensor(3, 3, 9);
  EXPECT_NEAR(tensor_action(T, T).as_scalar(), std::pow(T.frobenius_norm(), 2), 1e-12);
  EXPECT_THROW(tensor_action(DenseTensor(1, 3), DenseTensor(2, 3)), std::invalid_argument);
  EXPECT_THROW(tensor_action(DenseTensor(2, 3), DenseTensor(1, 2)), std::invalid_argument);
}

TEST(Tensor, SymmetricActionIgnoresAsymmetricPart) {
  const DenseTensor C = sym(random_tensor(3, 2, 21));
  const DenseTensor B = random_tensor(2, 2, 22);
  EXPECT_LE(max_abs_diff(tensor_action(C, B), tensor_action(C, sym(B))), 1e-12);
}

TEST(Tensor, MapAction) {
  const DenseTensor T = random_tensor(3, 3, 31);
  EXPECT_LE(max_abs_diff(map_action(Eigen::MatrixXd::Identity(3, 3), T), T), 1e-15);
  for (int k = 1; k <= 4; ++k) {
    const Eigen::MatrixXd Q = orthonormal(4, 2, 40 + k);
    const DenseTensor R = random_tensor(k, 2, 50 + k);
    EXPECT_NEAR(map_action(Q, R).frobenius_norm(), R.frobenius_norm(), 1e-10);
  }
  const Eigen::MatrixXd M = orthonormal(5, 3, 60) * 2.0;
  const Eigen::Vector3d v(1, 2, 3);
  EXPECT_LE((map_action(M, DenseTensor::from_vector(v)).as_vector() - M * v).cwiseAbs().maxCoeff(), 1e-13);
  // Order 2 reduces to M T M^T.
  const DenseTensor S = random_tensor(2, 3, 61);
  EXPECT_LE((map_action(M, S).as_matrix() - M * S.as_matrix() * M.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(map_action(M, DenseTensor(2, 4)), std::invalid_argument);
}

TEST(Tensor, OuterPower) {
  const DenseTensor e = outer_power(Eigen::Vector3d(1, 0, 0), 2);
  EXPECT_DOUBLE_EQ(e({0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(e.frobenius_norm(), 1.0);
  const Eigen::Vector2d v(1, 2);
  EXPECT_DOUBLE_EQ(outer_power(v, 3)({1, 1, 0}), 4.0);
  EXPECT_LE((outer_power(v, 1).as_vector() - v).norm(), 0.0);
  EXPECT_DOUBLE_EQ(outer_power(v, 0).as_scalar(), 1.0);
}

TEST(Sphere, Moments) {
  EXPECT_NEAR(sphere_moment(1, 10), 1.0 / 9.0, 1e-15);
  EXPECT_DOUBLE_EQ(sphere_moment(0, 7), 1.0);
  EXPECT_NEAR(sphere_moment(2, 10), 1.0 / 33.0, 1e-15);
  EXPECT_THROW(sphere_moment(1, 2), std::invalid_argument);
}

TEST(Sphere, MomentsAgreeWithMonteCarlo) {
  for (int d : {5, 10, 50}) {
    Rng rng = make_rng(d, 1);
    const int n = 200000;
    std::vector<double> s(4, 0.0), s2(4, 0.0);
    for (int i = 0; i < n; ++i) {
      const double z = uniform_sphere(rng, d - 1)(0);
      for (int k = 1; k <= 3; ++k) {
        const double v = std::pow(z, 2 * k);
        s[k] += v;
        s2[k] += v * v;
      }
    }
    for (int k = 1; k <= 3; ++k) {
      const double mean = s[k] / n;
      const double se = std::sqrt((s2[k] / n - mean * mean) / n);
      EXPECT_LE(std::abs(mean - sphere_moment(k, d)), 5 * se) << "d=" << d << " k=" << k;
    }
  }
}

TEST(Quadrature, RuleIsNormalisedAndOrdered) {
  for (int d : {3, 5, 10, 100, 1000}) {
    const QuadratureRule r = sphere_rule(d);
    double total = 0.0;
    // At very large d the outermost weights underflow to zero, which is the exact density there.
    for (double w : r.weights) {
      if (d <= 100)
        EXPECT_GT(w, 0.0);
      else
        EXPECT_GE(w, 0.0);
      total += w;
    }
    EXPECT_NEAR(total, 1.0, 1e-10) << "d=" << d;
    EXPECT_TRUE(std::is_sorted(r.nodes.begin(), r.nodes.end()));
    EXPECT_EQ(std::adjacent_find(r.nodes.begin(), r.nodes.end()), r.nodes.end());
  }
  EXPECT_THROW(sphere_rule(2), std::invalid_argument);
}

TEST(Quadrature, WeightedIntegralExamples) {
  auto one = [](double) { return 1.0; };
  for (int d : {5, 10, 100}) {
    const QuadratureRule r = sphere_rule(d);
    EXPECT_NEAR(weighted_integral(one, 0, 0, r), 1.0, 1e-12);
    EXPECT_NEAR(weighted_integral(one, 2, 0, r), 1.0 / d, 1e-14);
    EXPECT_NEAR(weighted_integral(one, 0, 1, r), 1.0 - 1.0 / d, 1e-13);
  }
}

TEST(Quadrature, PolynomialExactness) {
  // E[t^{2k}] under f_d equals the sphere moment of S^{d-1}: (2k-1)!! / (d (d+2) ... (d+2k-2)).
  const QuadratureRule r = sphere_rule(12, 200);
  for (int k = 0; k <= 10; ++k) {
    double expect = 1.0;
    for (int j = 0; j < k; ++j) expect *= (2.0 * j + 1.0) / (12.0 + 2.0 * j);
    EXPECT_NEAR(weighted_integral([](double) { return 1.0; }, 2 * k, 0, r), expect, 1e-8);
    EXPECT_NEAR(weighted_integral([](double) { return 1.0; }, 2 * k + 1, 0, r), 0.0, 1e-12);
  }
}

TEST(Quadrature, DensityHasNoOverflowAtLargeD) {
  const double v = sphere_density(2000, 0.0);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(v, 0.0);
  // Approximately Gaussian with variance 1/d near the centre.
  EXPECT_NEAR(v, std::sqrt(2000.0 / (2 * std::numbers::pi)), 0.05);
}
