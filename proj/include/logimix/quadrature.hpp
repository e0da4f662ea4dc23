#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "logimix/error.hpp"

namespace logimix {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [a, b]. Nodes are the roots of P_n,
/// located by Newton iteration from the Chebyshev-like initial guess.
inline QuadratureRule gauss_legendre(std::size_t n, double a = -1.0, double b = 1.0) {
  detail::require(n >= 1, "gauss_legendre: at least one node is required");
  QuadratureRule rule{std::vector<double>(n), std::vector<double>(n)};
  const double half_width = 0.5 * (b - a);
  const double mid = 0.5 * (b + a);
  const auto nd = static_cast<double>(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (nd + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const auto kd = static_cast<double>(k);
        const double p2 = ((2.0 * kd - 1.0) * x * p1 - (kd - 1.0) * p0) / kd;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = nd * (x * p1 - p0) / (x * x - 1.0);
      const double step = p1 / dp;
      x -= step;
      if (std::abs(step) < 1e-16) break;
    }
    // Recompute the derivative at the converged root for the weight.
    {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const auto kd = static_cast<double>(k);
        const double p2 = ((2.0 * kd - 1.0) * x * p1 - (kd - 1.0) * p0) / kd;
        p0 = p1;
        p1 = p2;
      }
      dp = n == 1 ? 1.0 : nd * (x * p1 - p0) / (x * x - 1.0);
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = mid - half_width * x;
    rule.nodes[n - 1 - i] = mid + half_width * x;
    rule.weights[i] = half_width * w;
    rule.weights[n - 1 - i] = half_width * w;
  }
  return rule;
}

}  // namespace logimix
