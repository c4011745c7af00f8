#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace distilab {

// Probabilists' Hermite polynomial He_k(x).
inline double hermite1d(int k, double x) {
  if (k < 0) throw std::invalid_argument("hermite1d: negative degree");
  if (k == 0) return 1.0;
  double prev = 1.0, cur = x;
  for (int n = 1; n < k; ++n) {
    const double next = x * cur - n * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

// He_0..He_kmax at x in one recurrence pass.
inline std::vector<double> hermite_all(int kmax, double x) {
  std::vector<double> h(static_cast<std::size_t>(kmax) + 1);
  h[0] = 1.0;
  if (kmax >= 1) h[1] = x;
  for (int n = 1; n < kmax; ++n) h[n + 1] = x * h[n] - n * h[n - 1];
  return h;
}

inline double log_factorial(int n) { return std::lgamma(n + 1.0); }

inline double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

inline double double_factorial(int n) {
  double f = 1.0;
  for (int i = n; i > 1; i -= 2) f *= i;
  return f;
}

// Coefficient c_k in relu(x) = sum_k c_k / k! He_k(x).
inline double relu_hermite_coeff(int k) {
  if (k < 0) throw std::invalid_argument("relu_hermite_coeff: negative order");
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  if (k == 0) return inv_sqrt_2pi;
  if (k == 1) return 0.5;
  if (k % 2 == 1) return 0.0;
  const int m = k / 2;
  // (2m)! / (m! 2^m (2m-1)) = (2m-3)!!
  const double sign = (m % 2 == 1) ? 1.0 : -1.0;
  return sign * double_factorial(2 * m - 3) * inv_sqrt_2pi;
}

struct HermiteCoeffsRelu {
  int maxOrder = 0;
  std::vector<double> c;
};

inline HermiteCoeffsRelu relu_hermite_coeffs(int max_order) {
  HermiteCoeffsRelu out{max_order, {}};
  for (int k = 0; k <= max_order; ++k) out.c.push_back(relu_hermite_coeff(k));
  return out;
}

// E[z_1^{2k}] for z uniform on S^{d-2}: (2k-1)!! / ((d-1)(d+1)...(d+2k-3)).
inline double sphere_moment(int k, int d) {
  if (d < 3) throw std::invalid_argument("sphere_moment: requires d >= 3");
  if (k < 0) throw std::invalid_argument("sphere_moment: negative order");
  double v = 1.0;
  for (int j = 0; j < k; ++j) v *= (2.0 * j + 1.0) / (d - 1.0 + 2.0 * j);
  return v;
}

// log of the normaliser Gamma(d/2) / (sqrt(pi) Gamma((d-1)/2)) of f_d.
inline double log_sphere_density_norm(int d) {
  return std::lgamma(0.5 * d) - 0.5 * std::log(std::numbers::pi) - std::lgamma(0.5 * (d - 1));
}

// Density of <w, x> for w uniform on S^{d-1} and unit x.
inline double sphere_density(int d, double t) {
  if (d < 3) throw std::invalid_argument("sphere_density: requires d >= 3");
  if (t <= -1.0 || t >= 1.0) return 0.0;
  return std::exp(log_sphere_density_norm(d) + 0.5 * (d - 3) * std::log1p(-t * t));
}

}  // namespace distilab
