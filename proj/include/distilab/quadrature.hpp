#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "distilab/hermite.hpp"

namespace distilab {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int d = 0;  // ambient dimension whose f_d is folded into the weights; 0 = plain Legendre
};

// Plain Gauss-Legendre rule on (-1, 1), nodes ascending.
inline QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need at least one node");
  QuadratureRule rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    if (n == 1) p0 = 1.0;
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[n - 1 - i] = x;
    rule.weights[n - 1 - i] = w;
    rule.nodes[i] = -x;
    rule.weights[i] = w;
  }
  return rule;
}

// Gauss-Legendre with the sphere-slice density f_d folded into the weights.
inline QuadratureRule sphere_rule(int d, int n = 400) {
  if (d < 3) throw std::invalid_argument("sphere_rule: requires d >= 3");
  QuadratureRule rule = gauss_legendre(n);
  const double lognorm = log_sphere_density_norm(d);
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double t = rule.nodes[i];
    rule.weights[i] *= std::exp(lognorm + 0.5 * (d - 3) * std::log1p(-t * t));
  }
  rule.d = d;
  return rule;
}

// I_{p1,p2}[i] = int t^p1 (1 - t^2)^p2 i(t) f_d(t) dt.
template <class F>
double weighted_integral(F&& i, int p1, int p2, const QuadratureRule& rule) {
  double s = 0.0;
  for (std::size_t n = 0; n < rule.nodes.size(); ++n) {
    const double t = rule.nodes[n];
    s += rule.weights[n] * std::pow(t, p1) * std::pow(1.0 - t * t, p2) * i(t);
  }
  return s;
}

}  // namespace distilab
