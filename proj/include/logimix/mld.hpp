#pragma once

// Multivariate logistic distribution,
//
//   F(x) = [1 + sum_k exp(-z_k)]^{-1},   z_k = (x_k - mu_k) / sigma_k,
//
// with density p! exp(-sum z) [1 + sum exp(-z)]^{-(p+1)} / prod sigma.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "logimix/dataset.hpp"
#include "logimix/detail/numeric.hpp"
#include "logimix/error.hpp"
#include "logimix/random.hpp"

namespace logimix {

/// An observation in R^p.
using Point = std::span<const double>;

/// Location and per-coordinate scale of one component.
class MldParams {
 public:
  MldParams(std::vector<double> mu, std::vector<double> sigma)
      : mu_(std::move(mu)), sigma_(std::move(sigma)) {
    detail::require(!mu_.empty(), "MldParams: dimension must be at least 1");
    detail::require(mu_.size() == sigma_.size(),
                    "MldParams: mu has length " + std::to_string(mu_.size()) +
                        " but sigma has length " + std::to_string(sigma_.size()));
    detail::require(detail::all_finite(mu_), "MldParams: mu must be finite");
    for (double s : sigma_) {
      detail::require(std::isfinite(s) && s > 0.0,
                      "MldParams: every sigma must be finite and > 0");
    }
  }

  /// Standard member: mu = 0, sigma = 1.
  static MldParams standard(std::size_t p) {
    return MldParams(std::vector<double>(p, 0.0), std::vector<double>(p, 1.0));
  }

  std::size_t dim() const { return mu_.size(); }
  const std::vector<double>& mu() const { return mu_; }
  const std::vector<double>& sigma() const { return sigma_; }

  double log_scale_sum() const {
    double acc = 0.0;
    for (double s : sigma_) acc += std::log(s);
    return acc;
  }

  friend bool operator==(const MldParams&, const MldParams&) = default;

 private:
  std::vector<double> mu_;
  std::vector<double> sigma_;
};

namespace detail {

inline void check_point(Point x) {
  require(!x.empty(), "point must have at least one coordinate");
  require(all_finite(x), "point coordinates must be finite");
}

inline void check_point(Point x, const MldParams& params) {
  if (x.size() != params.dim()) {
    throw ValidationError("dimension mismatch: point has " + std::to_string(x.size()) +
                          " coordinates, distribution has " + std::to_string(params.dim()));
  }
  require(all_finite(x), "point coordinates must be finite");
}

/// Standardized residuals written into `z`.
inline void standardize(Point x, const MldParams& params, std::span<double> z) {
  const auto& mu = params.mu();
  const auto& sigma = params.sigma();
  for (std::size_t k = 0; k < x.size(); ++k) z[k] = (x[k] - mu[k]) / sigma[k];
}

inline double clamp_probability(double v) { return std::min(1.0, std::max(0.0, v)); }

inline double standard_log_cdf_unchecked(std::span<const double> z) {
  return -log1p_sum_exp_neg(z);
}

inline double standard_log_pdf_unchecked(std::span<const double> z) {
  const auto p = static_cast<double>(z.size());
  double sum_z = 0.0;
  for (double zk : z) sum_z += zk;
  return std::lgamma(p + 1.0) - sum_z - (p + 1.0) * log1p_sum_exp_neg(z);
}

/// Small inline buffer for standardized residuals; avoids a heap
/// allocation for the common p <= 8.
class ResidualBuffer {
 public:
  explicit ResidualBuffer(std::size_t p) : size_(p) {
    if (p > kInline) heap_.resize(p);
  }
  std::span<double> span() {
    return size_ > kInline ? std::span<double>(heap_) : std::span<double>(inline_.data(), size_);
  }

 private:
  static constexpr std::size_t kInline = 8;
  std::size_t size_;
  std::array<double, kInline> inline_{};
  std::vector<double> heap_;
};

}  // namespace detail

/// [1 + sum_k exp(-x_k)]^{-1}.
inline double standard_cdf(Point x) {
  detail::check_point(x);
  return detail::clamp_probability(std::exp(detail::standard_log_cdf_unchecked(x)));
}

inline double standard_log_pdf(Point x) {
  detail::check_point(x);
  return detail::standard_log_pdf_unchecked(x);
}

/// p! exp(-sum x_k) [1 + sum exp(-x_k)]^{-(p+1)}, evaluated in log space.
inline double standard_pdf(Point x) { return std::exp(standard_log_pdf(x)); }

inline double mld_cdf(Point x, const MldParams& params) {
  detail::check_point(x, params);
  detail::ResidualBuffer buf(x.size());
  auto z = buf.span();
  detail::standardize(x, params, z);
  return detail::clamp_probability(std::exp(detail::standard_log_cdf_unchecked(z)));
}

inline double mld_log_pdf(Point x, const MldParams& params) {
  detail::check_point(x, params);
  detail::ResidualBuffer buf(x.size());
  auto z = buf.span();
  detail::standardize(x, params, z);
  return detail::standard_log_pdf_unchecked(z) - params.log_scale_sum();
}

inline double mld_pdf(Point x, const MldParams& params) { return std::exp(mld_log_pdf(x, params)); }

/// Univariate logistic cdf of coordinate k (0-based): the limit of the joint
/// cdf as every other coordinate tends to +infinity.
inline double marginal_cdf(double xk, const MldParams& params, std::size_t k) {
  if (k >= params.dim()) {
    throw ValidationError("marginal_cdf: coordinate index " + std::to_string(k) +
                          " out of range for dimension " + std::to_string(params.dim()));
  }
  detail::require(std::isfinite(xk), "marginal_cdf: coordinate must be finite");
  const double z = (xk - params.mu()[k]) / params.sigma()[k];
  return detail::clamp_probability(std::exp(-detail::log1p_sum_exp_neg(std::span(&z, 1))));
}

/// Inverts the conditional cdf (s / (s + b))^{j+1} of b = exp(-z_{j+1})
/// given the first j standardized coordinates, where
/// s = 1 + sum_{k<=j} exp(-z_k). Returns b.
inline double conditional_quantile(double u, double s_accum, std::size_t j) {
  detail::require(u > 0.0 && u < 1.0, "conditional_quantile: u must lie in (0, 1)");
  detail::require(std::isfinite(s_accum) && s_accum >= 1.0,
                  "conditional_quantile: accumulated sum must be finite and >= 1");
  const double exponent = -std::log(u) / static_cast<double>(j + 1);
  return s_accum * std::expm1(exponent);
}

/// Conditional cdf of standardized coordinate j given the previous ones,
/// i.e. (s / (s + exp(-z_j)))^{j+1}; the forward map of conditional_quantile.
inline double conditional_cdf(double z, double s_accum, std::size_t j) {
  const double log_ratio = std::log(s_accum) - detail::log_add_exp(std::log(s_accum), -z);
  return detail::clamp_probability(std::exp(static_cast<double>(j + 1) * log_ratio));
}

namespace detail {

/// Draws one exact variate into `out` by sequential conditional inversion
/// over coordinates 0..p-1.
inline void sample_into(const MldParams& params, CounterRng& rng, std::span<double> out) {
  const auto& mu = params.mu();
  const auto& sigma = params.sigma();
  double s_accum = 1.0;
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double b = conditional_quantile(rng.uniform(), s_accum, j);
    const double z = -std::log(b);
    out[j] = mu[j] + sigma[j] * z;
    s_accum += b;
  }
}

}  // namespace detail

/// n exact draws. Row i consumes stream i of `seed`, so the output does not
/// depend on how rows are partitioned across workers.
inline Dataset sample(const MldParams& params, std::size_t n, std::uint64_t seed) {
  detail::require(n >= 1, "sample: n must be at least 1");
  Dataset out(n, params.dim());
  const CounterRng root(seed);
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng = root.split(i);
    detail::sample_into(params, rng, out.row(i));
  }
  return out;
}

/// Rosenblatt transform: maps x to the vector of successive conditional cdf
/// values. Exact draws map to Uniform(0,1)^p.
inline std::vector<double> rosenblatt(Point x, const MldParams& params) {
  detail::check_point(x, params);
  std::vector<double> u(x.size());
  double s_accum = 1.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double z = (x[j] - params.mu()[j]) / params.sigma()[j];
    u[j] = conditional_cdf(z, s_accum, j);
    s_accum += std::exp(-z);
  }
  return u;
}

}  // namespace logimix
