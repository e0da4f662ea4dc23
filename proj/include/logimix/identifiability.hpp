#pragma once

// Numerical identifiability harness for logistic mixtures.
//
// A finite mixture family is identifiable exactly when its component cdfs
// are linearly independent. This header tests that property from several
// directions: Gram matrices of component cdfs, the tail limits and
// Vandermonde system that force the coefficients of a vanishing univariate
// combination to zero, the two-coordinate collapse that reduces a shared-
// scale problem in p dimensions to p - 1, and direct comparison of mixture
// cdfs on a grid.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "logimix/detail/numeric.hpp"
#include "logimix/error.hpp"
#include "logimix/mixture.hpp"
#include "logimix/mld.hpp"
#include "logimix/quadrature.hpp"
#include "logimix/random.hpp"

namespace logimix {

// ---------------------------------------------------------------------------
// Linear combinations of component cdfs
// ---------------------------------------------------------------------------

/// sum_i coeffs_i * L(x; component_i).
struct LinearCombination {
  std::vector<double> coeffs;
  std::vector<MldParams> components;

  void validate() const {
    detail::require(!components.empty(), "LinearCombination: at least one term is required");
    detail::require(coeffs.size() == components.size(),
                    "LinearCombination: coefficient count does not match component count");
    for (const auto& c : components) {
      detail::require(c.dim() == components.front().dim(),
                      "LinearCombination: components must share one dimension");
    }
    detail::require(detail::all_finite(coeffs), "LinearCombination: coefficients must be finite");
  }

  std::size_t dim() const { return components.front().dim(); }

  /// True when every component carries the same scale vector.
  bool shares_scale() const {
    return std::all_of(components.begin(), components.end(), [&](const MldParams& c) {
      return c.sigma() == components.front().sigma();
    });
  }

  double coefficient_sum() const { return std::accumulate(coeffs.begin(), coeffs.end(), 0.0); }

  double operator()(Point x) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < coeffs.size(); ++i) acc += coeffs[i] * mld_cdf(x, components[i]);
    return acc;
  }
  double operator()(double x) const { return (*this)(Point(&x, 1)); }
};

/// sum_i d_i [1 + exp(-(x - mu_i)/sigma_i)]^{-1} at a far-right probe. Every
/// term tends to d_i, so the value estimates sum_i d_i.
inline double tail_coefficient_sum(const LinearCombination& lc, double x_probe) {
  lc.validate();
  detail::require(lc.dim() == 1, "tail_coefficient_sum: components must be univariate");
  double reach = -std::numeric_limits<double>::infinity();
  for (const auto& c : lc.components) reach = std::max(reach, c.mu()[0] + 40.0 * c.sigma()[0]);
  detail::require(x_probe >= reach,
                  "tail_coefficient_sum: probe must lie at least 40 scales beyond every location");
  return lc(x_probe);
}

/// Evaluator of x -> sum_i d_i [1 + exp((x - mu_i)/sigma_i)]^{-1}, the
/// combination rewritten through 1 - F(z) = F(-z). When sum d_i = 0 it is
/// the pointwise negation of the original combination.
class ReflectedCombination {
 public:
  explicit ReflectedCombination(LinearCombination lc) : lc_(std::move(lc)) {}

  double operator()(double x) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < lc_.coeffs.size(); ++i) {
      const auto& c = lc_.components[i];
      const double z = (x - c.mu()[0]) / c.sigma()[0];
      // [1 + e^{z}]^{-1} = exp(-log(1 + e^{z}))
      const double neg_z = -z;
      acc += lc_.coeffs[i] * std::exp(-detail::log1p_sum_exp_neg(std::span(&neg_z, 1)));
    }
    return acc;
  }

  const LinearCombination& source() const { return lc_; }

 private:
  LinearCombination lc_;
};

inline constexpr double kCoefficientSumTol = 1e-12;

inline ReflectedCombination reflect_combination(const LinearCombination& lc) {
  lc.validate();
  detail::require(lc.dim() == 1, "reflect_combination: components must be univariate");
  const double total = lc.coefficient_sum();
  detail::require(std::abs(total) <= kCoefficientSumTol,
                  "reflect_combination: coefficients sum to " + detail::format_real(total) +
                      "; the reflection step requires a zero sum");
  return ReflectedCombination(lc);
}

// ---------------------------------------------------------------------------
// Gram matrix of component cdfs
// ---------------------------------------------------------------------------

struct GramOptions {
  std::size_t nodes_per_axis = 64;
  double support = 40.0;  // integrate standardized weight coordinates over [-support, support]
  bool convergence_check = true;
};

struct GramReport {
  Eigen::MatrixXd gram;
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  std::size_t numerical_rank = 0;
  double rank_tol = 0.0;
  std::size_t nodes_per_axis = 0;
  std::string quadrature_spec;
  bool converged = true;               // doubling the nodes moved the minimum eigenvalue < 10%
  double refined_min_eigenvalue = 0.0; // with 2 * nodes_per_axis, when checked

  double relative_min_eigenvalue() const {
    return max_eigenvalue > 0.0 ? min_eigenvalue / max_eigenvalue : 0.0;
  }
};

namespace detail {

inline void check_shared_dim(const std::vector<MldParams>& comps, const char* who) {
  require(!comps.empty(), std::string(who) + ": at least one component is required");
  for (const auto& c : comps) {
    require(c.dim() == comps.front().dim(), std::string(who) + ": components must share p");
  }
}

/// G_ij = int L_i(x) L_j(x) w(x) dx, w the product of standard logistic
/// densities. Substituting u_k = F(x_k) turns w(x) dx into du on the unit
/// cube, integrated by a tensor Gauss-Legendre rule.
inline Eigen::MatrixXd gram_matrix(const std::vector<MldParams>& comps, std::size_t nodes,
                                   double support) {
  const std::size_t s = comps.size();
  const std::size_t p = comps.front().dim();
  const double u_lo = 1.0 / (1.0 + std::exp(support));
  const double u_hi = 1.0 / (1.0 + std::exp(-support));
  const QuadratureRule rule = gauss_legendre(nodes, u_lo, u_hi);
  std::vector<double> axis_x(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    const double u = rule.nodes[i];
    axis_x[i] = std::log(u) - std::log1p(-u);
  }

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s),
                                               static_cast<Eigen::Index>(s));
  Eigen::VectorXd values(static_cast<Eigen::Index>(s));
  std::vector<std::size_t> index(p, 0);
  std::vector<double> x(p);
  std::size_t total = 1;
  for (std::size_t k = 0; k < p; ++k) total *= nodes;
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    double weight = 1.0;
    for (std::size_t k = 0; k < p; ++k) {
      index[k] = rem % nodes;
      rem /= nodes;
      x[k] = axis_x[index[k]];
      weight *= rule.weights[index[k]];
    }
    for (std::size_t i = 0; i < s; ++i) {
      values[static_cast<Eigen::Index>(i)] = mld_cdf(x, comps[i]);
    }
    gram.noalias() += weight * values * values.transpose();
  }
  return 0.5 * (gram + gram.transpose());
}

}  // namespace detail

inline GramReport gram_min_eigenvalue(const std::vector<MldParams>& comps,
                                      const GramOptions& opts = {}) {
  detail::check_shared_dim(comps, "gram_min_eigenvalue");
  const std::size_t p = comps.front().dim();
  detail::require(p <= 3, "gram_min_eigenvalue: dimension " + std::to_string(p) +
                              " is unsupported (tensor quadrature limited to p <= 3)");
  detail::require(opts.nodes_per_axis >= 2, "gram_min_eigenvalue: need at least 2 nodes per axis");

  GramReport report;
  report.nodes_per_axis = opts.nodes_per_axis;
  report.gram = detail::gram_matrix(comps, opts.nodes_per_axis, opts.support);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(report.gram, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  report.min_eigenvalue = ev.minCoeff();
  report.max_eigenvalue = ev.maxCoeff();
  report.rank_tol = 1e-8 * report.max_eigenvalue;
  report.numerical_rank =
      static_cast<std::size_t>((ev.array() > report.rank_tol).count());
  report.quadrature_spec = "tensor Gauss-Legendre, " + std::to_string(opts.nodes_per_axis) +
                           " nodes per axis on logistic-mapped [-" +
                           detail::format_real(opts.support) + ", " +
                           detail::format_real(opts.support) + "]^" + std::to_string(p);
  report.refined_min_eigenvalue = report.min_eigenvalue;
  if (opts.convergence_check) {
    const Eigen::MatrixXd refined =
        detail::gram_matrix(comps, 2 * opts.nodes_per_axis, opts.support);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig2(refined, Eigen::EigenvaluesOnly);
    report.refined_min_eigenvalue = eig2.eigenvalues().minCoeff();
    // Below the rank tolerance both values are rounding noise; compare
    // against the tolerance instead of the noise.
    const double reference = std::max(std::abs(report.refined_min_eigenvalue), report.rank_tol);
    report.converged =
        std::abs(report.refined_min_eigenvalue - report.min_eigenvalue) <= 0.1 * reference;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Vandermonde system
// ---------------------------------------------------------------------------

struct VandermondeReport {
  Eigen::MatrixXd matrix;  // exp(-log_scale) * [t_i^j], j = 1..k
  double log_scale = 0.0;
  double determinant = 0.0;  // of `matrix`
  bool determinant_sign_ok = false;
  double min_singular_value = 0.0;  // of the column-normalized matrix
  double max_singular_value = 0.0;
  bool invertible = false;
  std::optional<std::vector<double>> null_vector;
  bool dynamic_range_exceeded = false;
};

/// Builds V_{j,i} = t_i^j with nodes t_i = exp(mu_i / sigma_i), j = 1..k.
/// Entries are formed in log space. Singularity is judged on the matrix
/// with unit-norm columns, which has the same null space as V and does not
/// inherit the spread of node magnitudes.
inline VandermondeReport vandermonde_check(const std::vector<double>& mus,
                                           const std::vector<double>& sigmas) {
  detail::require(!mus.empty(), "vandermonde_check: at least one node is required");
  detail::require(mus.size() == sigmas.size(), "vandermonde_check: mus and sigmas differ in length");
  for (double s : sigmas) {
    detail::require(std::isfinite(s) && s > 0.0, "vandermonde_check: sigmas must be > 0");
  }
  detail::require(detail::all_finite(mus), "vandermonde_check: mus must be finite");
  const std::size_t k = mus.size();
  const auto K = static_cast<Eigen::Index>(k);

  std::vector<double> log_node(k);
  for (std::size_t i = 0; i < k; ++i) log_node[i] = mus[i] / sigmas[i];

  Eigen::MatrixXd log_v(K, K);
  for (Eigen::Index j = 0; j < K; ++j) {
    for (Eigen::Index i = 0; i < K; ++i) {
      log_v(j, i) = static_cast<double>(j + 1) * log_node[static_cast<std::size_t>(i)];
    }
  }
  VandermondeReport report;
  const double hi = log_v.maxCoeff();
  const double lo = log_v.minCoeff();
  report.dynamic_range_exceeded = hi - lo > 300.0 * std::log(10.0);
  report.log_scale = (hi > 700.0 || lo < -700.0) ? hi : 0.0;
  report.matrix = (log_v.array() - report.log_scale).exp().matrix();
  report.determinant = report.matrix.fullPivLu().determinant();

  // Sign of prod_i t_i * prod_{i<j} (t_j - t_i); every t_i > 0.
  int expected_sign = 1;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      if (log_node[j] == log_node[i]) expected_sign = 0;
      if (log_node[j] < log_node[i]) expected_sign = -expected_sign;
    }
  }
  const int actual_sign = (report.determinant > 0.0) - (report.determinant < 0.0);
  report.determinant_sign_ok = expected_sign != 0 && actual_sign == expected_sign;

  Eigen::VectorXd log_col_norm(K);
  Eigen::MatrixXd normalized(K, K);
  for (Eigen::Index i = 0; i < K; ++i) {
    std::vector<double> twice(k);
    for (std::size_t j = 0; j < k; ++j) twice[j] = 2.0 * log_v(static_cast<Eigen::Index>(j), i);
    log_col_norm[i] = 0.5 * detail::log_sum_exp(twice);
    normalized.col(i) = (log_v.col(i).array() - log_col_norm[i]).exp().matrix();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(normalized, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  report.max_singular_value = sv.maxCoeff();
  report.min_singular_value = sv.minCoeff();
  report.invertible = report.min_singular_value >= 1e-12 * report.max_singular_value;
  if (!report.invertible) {
    // v spans null(normalized) => d_i = v_i / ||col_i|| spans null(V).
    const Eigen::VectorXd v = svd.matrixV().col(K - 1);
    const double shift = log_col_norm.minCoeff();
    Eigen::VectorXd d(K);
    for (Eigen::Index i = 0; i < K; ++i) d[i] = v[i] * std::exp(shift - log_col_norm[i]);
    d.normalize();
    for (Eigen::Index i = 0; i < K; ++i) {
      if (std::abs(d[i]) > 1e-12) {
        if (d[i] < 0.0) d = -d;
        break;
      }
    }
    report.null_vector = std::vector<double>(d.data(), d.data() + K);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Two-coordinate collapse for shared scales
// ---------------------------------------------------------------------------

namespace detail {

inline bool same_scale(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (std::abs(a[k] - b[k]) > 1e-12 * std::max(std::abs(a[k]), std::abs(b[k]))) return false;
  }
  return true;
}

inline void require_shared_scale(const std::vector<MldParams>& comps, const char* who) {
  for (const auto& c : comps) {
    require(same_scale(c.sigma(), comps.front().sigma()),
            std::string(who) + ": all components must share one scale vector");
  }
}

inline void check_pair(std::size_t a, std::size_t b, std::size_t p, const char* who) {
  require(p >= 2, std::string(who) + ": dimension must be at least 2");
  require(a < p && b < p && a != b,
          std::string(who) + ": coordinates must be two distinct indices below p = " +
              std::to_string(p));
}

/// log(exp((y_a + mu_a)/sigma_a) + exp((y_b + mu_b)/sigma_b)).
inline double merged_log_location(const MldParams& c, std::size_t a, std::size_t b, double y_a,
                                  double y_b) {
  return log_add_exp((y_a + c.mu()[a]) / c.sigma()[a], (y_b + c.mu()[b]) / c.sigma()[b]);
}

}  // namespace detail

struct SeparatingOffsets {
  double y_a = 0.0;
  double y_b = 0.0;
  std::size_t trials = 0;  // candidate offsets examined, including the origin
};

inline constexpr std::size_t kOffsetSearchTrials = 1000;

/// Offsets (y_a, y_b) after which the merged values
/// m_i = exp((y_a + mu_i^a)/sigma^a) + exp((y_b + mu_i^b)/sigma^b) are
/// pairwise distinct (gap > 1e-9 max |m|) for every pair whose (a, b)
/// locations differ. Tries the origin first, then uniform draws from
/// [-5, 5]^2.
inline SeparatingOffsets find_separating_offsets(const std::vector<MldParams>& comps,
                                                 std::size_t a, std::size_t b,
                                                 std::uint64_t seed,
                                                 std::size_t max_trials = kOffsetSearchTrials) {
  detail::check_shared_dim(comps, "find_separating_offsets");
  detail::check_pair(a, b, comps.front().dim(), "find_separating_offsets");
  detail::require_shared_scale(comps, "find_separating_offsets");

  // Pairs whose (a, b) locations coincide are exempt.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    for (std::size_t j = i + 1; j < comps.size(); ++j) {
      if (comps[i].mu()[a] != comps[j].mu()[a] || comps[i].mu()[b] != comps[j].mu()[b]) {
        pairs.emplace_back(i, j);
      }
    }
  }

  std::pair<std::size_t, std::size_t> worst{0, 0};
  auto separates = [&](double y_a, double y_b) {
    // Compare in a common scale: m_i / max m.
    std::vector<double> log_m(comps.size());
    for (std::size_t i = 0; i < comps.size(); ++i) {
      log_m[i] = detail::merged_log_location(comps[i], a, b, y_a, y_b);
    }
    const double top = *std::max_element(log_m.begin(), log_m.end());
    for (const auto& [i, j] : pairs) {
      const double gap = std::abs(std::exp(log_m[i] - top) - std::exp(log_m[j] - top));
      if (!(gap > 1e-9)) {
        worst = {i, j};
        return false;
      }
    }
    return true;
  };

  CounterRng rng(seed, 0x0FF5E7u);
  for (std::size_t trial = 0; trial < max_trials; ++trial) {
    const double y_a = trial == 0 ? 0.0 : rng.uniform(-5.0, 5.0);
    const double y_b = trial == 0 ? 0.0 : rng.uniform(-5.0, 5.0);
    if (separates(y_a, y_b)) return {y_a, y_b, trial + 1};
  }
  throw NumericalError("find_separating_offsets: no separating offsets in " +
                       std::to_string(max_trials) + " trials; components " +
                       std::to_string(worst.first) + " and " + std::to_string(worst.second) +
                       " keep colliding");
}

/// Substitutes x_a = sigma^a x - y_a, x_b = sigma^b x - y_b. The two
/// coordinates become one coordinate with scale 1 and location
/// log(exp((y_a + mu^a)/sigma^a) + exp((y_b + mu^b)/sigma^b)), placed at
/// index min(a, b); the remaining coordinates keep their order.
inline MixtureModel collapse_pair(const MixtureModel& model, std::size_t a, std::size_t b,
                                  double y_a, double y_b) {
  detail::check_pair(a, b, model.dim(), "collapse_pair");
  detail::require_shared_scale(model.components(), "collapse_pair");
  detail::require(std::isfinite(y_a) && std::isfinite(y_b), "collapse_pair: offsets must be finite");
  const std::size_t keep = std::min(a, b);
  const std::size_t drop = std::max(a, b);
  std::vector<MldParams> comps;
  comps.reserve(model.size());
  for (const auto& c : model.components()) {
    std::vector<double> mu;
    std::vector<double> sigma;
    for (std::size_t k = 0; k < c.dim(); ++k) {
      if (k == drop) continue;
      if (k == keep) {
        mu.push_back(detail::merged_log_location(c, a, b, y_a, y_b));
        sigma.push_back(1.0);
      } else {
        mu.push_back(c.mu()[k]);
        sigma.push_back(c.sigma()[k]);
      }
    }
    comps.emplace_back(std::move(mu), std::move(sigma));
  }
  return MixtureModel(model.weights(), std::move(comps));
}

/// The point at which the original model is evaluated for collapsed point
/// `collapsed` (inverse of the coordinate merge in collapse_pair).
inline std::vector<double> expand_collapsed_point(Point collapsed, std::size_t p, std::size_t a,
                                                  std::size_t b, const std::vector<double>& sigma,
                                                  double y_a, double y_b) {
  detail::check_pair(a, b, p, "expand_collapsed_point");
  detail::require(collapsed.size() + 1 == p, "expand_collapsed_point: collapsed point has wrong size");
  const std::size_t keep = std::min(a, b);
  const std::size_t drop = std::max(a, b);
  const double x = collapsed[keep];
  std::vector<double> out(p);
  std::size_t src = 0;
  for (std::size_t k = 0; k < p; ++k) {
    if (k == a) {
      out[k] = sigma[a] * x - y_a;
    } else if (k == b) {
      out[k] = sigma[b] * x - y_b;
    } else {
      out[k] = collapsed[src];
    }
    if (k != drop) ++src;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distribution and parameter equality
// ---------------------------------------------------------------------------

/// Scale-aware distance between components: max over |d mu_k| and
/// |d log sigma_k|, plus the weight gap when weights are given.
inline double component_distance(const MldParams& x, const MldParams& y, double wx = 0.0,
                                 double wy = 0.0) {
  double d = std::abs(wx - wy);
  for (std::size_t k = 0; k < x.dim(); ++k) {
    d = std::max(d, std::abs(x.mu()[k] - y.mu()[k]));
    d = std::max(d, std::abs(std::log(x.sigma()[k]) - std::log(y.sigma()[k])));
  }
  return d;
}

struct Assignment {
  double bottleneck = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> permutation;  // row i -> column permutation[i]
};

namespace detail {

inline bool augment(std::size_t row, const std::vector<std::vector<bool>>& allowed,
                    std::vector<bool>& visited, std::vector<std::size_t>& col_owner) {
  constexpr auto kFree = std::numeric_limits<std::size_t>::max();
  for (std::size_t col = 0; col < allowed[row].size(); ++col) {
    if (!allowed[row][col] || visited[col]) continue;
    visited[col] = true;
    if (col_owner[col] == kFree || augment(col_owner[col], allowed, visited, col_owner)) {
      col_owner[col] = row;
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Square assignment minimizing the largest matched cost: binary search
/// over the sorted costs with an augmenting-path perfect-matching test.
inline Assignment bottleneck_assignment(const std::vector<std::vector<double>>& cost) {
  constexpr auto kFree = std::numeric_limits<std::size_t>::max();
  const std::size_t n = cost.size();
  std::vector<double> levels;
  for (const auto& row : cost) levels.insert(levels.end(), row.begin(), row.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

  auto match_at = [&](double level, std::vector<std::size_t>& owner) {
    std::vector<std::vector<bool>> allowed(n, std::vector<bool>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) allowed[i][j] = cost[i][j] <= level;
    owner.assign(n, kFree);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<bool> visited(n, false);
      if (!detail::augment(i, allowed, visited, owner)) return false;
    }
    return true;
  };

  std::size_t lo = 0;
  std::size_t hi = levels.size() - 1;
  std::vector<std::size_t> owner;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (match_at(levels[mid], owner)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  match_at(levels[lo], owner);
  Assignment out{levels[lo], std::vector<std::size_t>(n)};
  for (std::size_t col = 0; col < n; ++col) out.permutation[owner[col]] = col;
  return out;
}

/// Best component matching between two models of equal size under
/// component_distance (weights included); infinite when sizes differ.
inline Assignment match_components(const MixtureModel& m1, const MixtureModel& m2) {
  if (m1.size() != m2.size() || m1.dim() != m2.dim()) return {};
  std::vector<std::vector<double>> cost(m1.size(), std::vector<double>(m2.size()));
  for (std::size_t i = 0; i < m1.size(); ++i) {
    for (std::size_t j = 0; j < m2.size(); ++j) {
      cost[i][j] = component_distance(m1.component(i), m2.component(j), m1.weights()[i],
                                      m2.weights()[j]);
    }
  }
  return bottleneck_assignment(cost);
}

inline double parameter_distance(const MixtureModel& m1, const MixtureModel& m2) {
  return match_components(m1, m2).bottleneck;
}

struct EqualityOptions {
  std::size_t grid_points = 41;  // per axis
  double span = 10.0;            // in pooled standardized units beyond the locations
  double dist_tol = 1e-9;
  double param_tol = 1e-6;
  double distinct_threshold = 1e-3;  // gaps between dist_tol and this are inconclusive
};

struct EqualityReport {
  double sup_norm_cdf_gap = 0.0;
  bool equal_distribution = false;
  bool inconclusive = false;
  std::optional<std::vector<std::size_t>> matched_permutation;
  double max_param_gap = std::numeric_limits<double>::infinity();
  bool equal_parameters = false;
};

namespace detail {

/// Per-axis grid from min location - span * max scale to max location +
/// span * max scale, pooled over the components of both models.
inline std::vector<std::vector<double>> equality_grid(const MixtureModel& m1,
                                                      const MixtureModel& m2,
                                                      const EqualityOptions& opts) {
  const std::size_t p = m1.dim();
  std::vector<std::vector<double>> axes(p);
  for (std::size_t k = 0; k < p; ++k) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double scale = 0.0;
    for (const auto* m : {&m1, &m2}) {
      for (const auto& c : m->components()) {
        lo = std::min(lo, c.mu()[k]);
        hi = std::max(hi, c.mu()[k]);
        scale = std::max(scale, c.sigma()[k]);
      }
    }
    lo -= opts.span * scale;
    hi += opts.span * scale;
    axes[k].resize(opts.grid_points);
    for (std::size_t i = 0; i < opts.grid_points; ++i) {
      axes[k][i] = opts.grid_points == 1
                       ? 0.5 * (lo + hi)
                       : lo + (hi - lo) * static_cast<double>(i) /
                                  static_cast<double>(opts.grid_points - 1);
    }
  }
  return axes;
}

}  // namespace detail

/// Sup-norm distance between the two mixture cdfs on the pooled grid.
inline double sup_norm_cdf_gap(const MixtureModel& m1, const MixtureModel& m2,
                               const EqualityOptions& opts = {}) {
  detail::require(m1.dim() == m2.dim(), "mixture_equality_test: models differ in dimension");
  detail::require(opts.grid_points >= 1, "mixture_equality_test: grid needs at least one point");
  const auto axes = detail::equality_grid(m1, m2, opts);
  const std::size_t p = m1.dim();
  std::size_t total = 1;
  for (std::size_t k = 0; k < p; ++k) total *= opts.grid_points;
  std::vector<double> x(p);
  double gap = 0.0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t k = 0; k < p; ++k) {
      x[k] = axes[k][rem % opts.grid_points];
      rem /= opts.grid_points;
    }
    gap = std::max(gap, std::abs(mixture_cdf(x, m1) - mixture_cdf(x, m2)));
  }
  return gap;
}

inline EqualityReport mixture_equality_test(const MixtureModel& m1, const MixtureModel& m2,
                                            const EqualityOptions& opts = {}) {
  EqualityReport report;
  report.sup_norm_cdf_gap = sup_norm_cdf_gap(m1, m2, opts);
  report.equal_distribution = report.sup_norm_cdf_gap < opts.dist_tol;
  report.inconclusive = !report.equal_distribution &&
                        report.sup_norm_cdf_gap <= opts.distinct_threshold;
  const Assignment match = match_components(m1, m2);
  if (!match.permutation.empty()) {
    report.matched_permutation = match.permutation;
    report.max_param_gap = match.bottleneck;
    report.equal_parameters = match.bottleneck < opts.param_tol;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Randomized identifiability trials and the open-problem probe
// ---------------------------------------------------------------------------

struct ModelDraw {
  double mu_range = 3.0;      // locations uniform on [-mu_range, mu_range]
  double sigma_min = 0.5;     // scales log-uniform on [sigma_min, sigma_max]
  double sigma_max = 2.0;
  double min_separation = 0.1;
};

/// Random s-component model. Weights are proportional to Uniform[1, 3]
/// draws; components are redrawn until pairwise component_distance is at
/// least `min_separation`. With `shared_sigma`, every component uses it.
inline MixtureModel random_model(std::size_t p, std::size_t s, CounterRng& rng,
                                 const std::optional<std::vector<double>>& shared_sigma = {},
                                 const ModelDraw& draw = {}) {
  detail::require(p >= 1 && s >= 1, "random_model: p and s must be at least 1");
  auto random_sigma = [&] {
    std::vector<double> sigma(p);
    for (double& v : sigma) {
      v = std::exp(rng.uniform(std::log(draw.sigma_min), std::log(draw.sigma_max)));
    }
    return sigma;
  };
  std::vector<MldParams> comps;
  for (int attempt = 0; comps.size() < s; ++attempt) {
    detail::require(attempt < 10000, "random_model: cannot place separated components");
    std::vector<double> mu(p);
    for (double& v : mu) v = rng.uniform(-draw.mu_range, draw.mu_range);
    MldParams cand(std::move(mu), shared_sigma ? *shared_sigma : random_sigma());
    const bool separated = std::all_of(comps.begin(), comps.end(), [&](const MldParams& c) {
      return component_distance(c, cand) >= draw.min_separation;
    });
    if (separated) comps.push_back(std::move(cand));
  }
  std::vector<double> weights(s);
  double total = 0.0;
  for (double& w : weights) total += (w = rng.uniform(1.0, 3.0));
  for (double& w : weights) w /= total;
  return MixtureModel::normalized(std::move(weights), std::move(comps), 1e-12);
}

struct Scenario {
  std::size_t p = 1;
  std::size_t s = 2;
  bool shared_scale = true;

  /// Regimes with a proven identifiability guarantee: any univariate
  /// family, or p in {2, 3} with one scale vector shared by all components.
  bool covered() const { return p == 1 || (shared_scale && (p == 2 || p == 3)); }
};

struct ProbeReport {
  std::size_t p = 0;
  std::size_t s = 0;
  std::size_t n_trials = 0;
  std::uint64_t seed = 0;
  double near_tol = 1e-10;
  double smallest_gap = std::numeric_limits<double>::infinity();
  double witness_param_distance = 0.0;
  std::optional<std::pair<MixtureModel, MixtureModel>> witness_pair;
  bool candidate = false;  // smallest gap < near_tol at parameter distance > 0.1
  std::size_t evaluations = 0;
};

struct TrialSummary {
  Scenario scenario;
  std::uint64_t seed = 0;
  std::size_t n_trials = 0;
  std::size_t distinct_passes = 0;  // distinct parameters -> gap > distinct threshold
  std::size_t permuted_passes = 0;  // permuted copy -> equal distribution and parameters
  double min_distinct_gap = std::numeric_limits<double>::infinity();
  double max_permuted_gap = 0.0;
  std::vector<std::size_t> failed_trials;
  std::optional<ProbeReport> probe;  // set when the scenario was routed to the probe

  bool all_passed() const {
    return !probe && distinct_passes == n_trials && permuted_passes == n_trials;
  }
};

struct ProbeOptions {
  double near_tol = 1e-10;
  double min_param_distance = 0.1;
  std::size_t evaluations_per_trial = 200;
  EqualityOptions grid{};
};

namespace detail {

/// Unconstrained coordinates of a model: weight logits, then every mu,
/// then every log sigma.
inline std::vector<double> model_to_vector(const MixtureModel& m) {
  std::vector<double> v;
  for (double w : m.weights()) v.push_back(std::log(w));
  for (const auto& c : m.components()) v.insert(v.end(), c.mu().begin(), c.mu().end());
  for (const auto& c : m.components())
    for (double s : c.sigma()) v.push_back(std::log(s));
  return v;
}

inline std::optional<MixtureModel> vector_to_model(const std::vector<double>& v, std::size_t p,
                                                   std::size_t s) {
  std::vector<double> logits(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(s));
  const double norm = log_sum_exp(logits);
  std::vector<double> weights(s);
  for (std::size_t i = 0; i < s; ++i) {
    weights[i] = std::exp(logits[i] - norm);
    if (!(weights[i] >= kMinWeight)) return std::nullopt;
  }
  std::vector<MldParams> comps;
  for (std::size_t i = 0; i < s; ++i) {
    std::vector<double> mu(v.begin() + static_cast<std::ptrdiff_t>(s + i * p),
                           v.begin() + static_cast<std::ptrdiff_t>(s + (i + 1) * p));
    std::vector<double> sigma(p);
    for (std::size_t k = 0; k < p; ++k) {
      sigma[k] = std::exp(v[s + s * p + i * p + k]);
      if (!(sigma[k] > 0.0) || !std::isfinite(sigma[k])) return std::nullopt;
    }
    comps.emplace_back(std::move(mu), std::move(sigma));
  }
  return MixtureModel::normalized(std::move(weights), std::move(comps), 1e-9);
}

}  // namespace detail

/// Exploratory search for two mixtures with per-component scales whose
/// cdfs nearly coincide while their parameters stay at least
/// `min_param_distance` apart. Each trial draws a random pair and runs a
/// compass search on the second model. A result below near_tol is only a
/// candidate for closer study.
inline ProbeReport probe_open_problem(std::size_t p, std::size_t s, std::size_t n_trials,
                                      std::uint64_t seed, const ProbeOptions& opts = {}) {
  detail::require(p >= 1 && s >= 1, "probe_open_problem: p and s must be at least 1");
  ProbeReport report;
  report.p = p;
  report.s = s;
  report.n_trials = n_trials;
  report.seed = seed;
  report.near_tol = opts.near_tol;
  const CounterRng root(seed);

  for (std::size_t trial = 0; trial < n_trials; ++trial) {
    CounterRng rng = root.split(trial);
    const MixtureModel target = random_model(p, s, rng);
    MixtureModel start = random_model(p, s, rng);
    for (int redraw = 0; parameter_distance(target, start) < opts.min_param_distance; ++redraw) {
      detail::require(redraw < 1000, "probe_open_problem: cannot draw a distinct start");
      start = random_model(p, s, rng);
    }

    std::vector<double> theta = detail::model_to_vector(start);
    MixtureModel best = start;
    double best_gap = sup_norm_cdf_gap(target, best, opts.grid);
    std::size_t evals = 1;
    double step = 0.5;
    while (evals < opts.evaluations_per_trial && step > 1e-6) {
      bool improved = false;
      for (std::size_t coord = 0; coord < theta.size() && evals < opts.evaluations_per_trial;
           ++coord) {
        for (const double dir : {1.0, -1.0}) {
          std::vector<double> cand = theta;
          cand[coord] += dir * step;
          auto model = detail::vector_to_model(cand, p, s);
          if (!model || parameter_distance(target, *model) < opts.min_param_distance) continue;
          const double gap = sup_norm_cdf_gap(target, *model, opts.grid);
          ++evals;
          if (gap < best_gap) {
            best_gap = gap;
            best = std::move(*model);
            theta = std::move(cand);
            improved = true;
            break;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    report.evaluations += evals;

    if (best_gap < report.smallest_gap) {
      report.smallest_gap = best_gap;
      report.witness_param_distance = parameter_distance(target, best);
      report.witness_pair.emplace(target, best);
    }
  }
  report.candidate = report.smallest_gap < opts.near_tol &&
                     report.witness_param_distance > opts.min_param_distance;
  return report;
}

/// Per trial: draws two models that are at least `min_separation` apart in
/// parameters (sharing one scale vector when p > 1) and expects a cdf gap
/// above the distinct threshold; also expects a permuted copy of the first
/// model to compare equal in distribution and parameters. Scenarios
/// without a proven guarantee are handed to probe_open_problem.
inline TrialSummary identifiability_trial(const Scenario& scenario, std::uint64_t seed,
                                          std::size_t n_trials,
                                          const EqualityOptions& opts = {},
                                          const ModelDraw& draw = {}) {
  detail::require(scenario.p >= 1 && scenario.s >= 1, "identifiability_trial: p, s must be >= 1");
  TrialSummary summary;
  summary.scenario = scenario;
  summary.seed = seed;
  summary.n_trials = n_trials;
  if (!scenario.covered()) {
    summary.probe = probe_open_problem(scenario.p, scenario.s, n_trials, seed);
    return summary;
  }
  const CounterRng root(seed);
  for (std::size_t trial = 0; trial < n_trials; ++trial) {
    CounterRng rng = root.split(trial);
    std::optional<std::vector<double>> shared;
    if (scenario.p > 1) {
      std::vector<double> sigma(scenario.p);
      for (double& v : sigma) v = std::exp(rng.uniform(std::log(draw.sigma_min), std::log(draw.sigma_max)));
      shared = std::move(sigma);
    }
    const MixtureModel m1 = random_model(scenario.p, scenario.s, rng, shared, draw);
    MixtureModel m2 = random_model(scenario.p, scenario.s, rng, shared, draw);
    for (int redraw = 0; parameter_distance(m1, m2) < draw.min_separation; ++redraw) {
      detail::require(redraw < 1000, "identifiability_trial: cannot draw a distinct pair");
      m2 = random_model(scenario.p, scenario.s, rng, shared, draw);
    }

    const EqualityReport distinct = mixture_equality_test(m1, m2, opts);
    summary.min_distinct_gap = std::min(summary.min_distinct_gap, distinct.sup_norm_cdf_gap);
    const bool distinct_ok = !distinct.equal_distribution &&
                             distinct.sup_norm_cdf_gap > opts.distinct_threshold;

    std::vector<std::size_t> perm(scenario.s);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const EqualityReport same = mixture_equality_test(m1, m1.permuted(perm), opts);
    summary.max_permuted_gap = std::max(summary.max_permuted_gap, same.sup_norm_cdf_gap);
    const bool same_ok = same.equal_distribution && same.equal_parameters;

    summary.distinct_passes += distinct_ok ? 1 : 0;
    summary.permuted_passes += same_ok ? 1 : 0;
    if (!distinct_ok || !same_ok) summary.failed_trials.push_back(trial);
  }
  return summary;
}

// ---------------------------------------------------------------------------
// JSON reports
// ---------------------------------------------------------------------------

inline nlohmann::json model_json_value(const MixtureModel& m) {
  return nlohmann::json::parse(model_to_json(m));
}

inline nlohmann::json to_json(const GramReport& r) {
  return {{"min_eigenvalue", r.min_eigenvalue},
          {"max_eigenvalue", r.max_eigenvalue},
          {"numerical_rank", r.numerical_rank},
          {"rank_tol", r.rank_tol},
          {"nodes_per_axis", r.nodes_per_axis},
          {"quadrature", r.quadrature_spec},
          {"converged", r.converged},
          {"refined_min_eigenvalue", r.refined_min_eigenvalue}};
}

inline nlohmann::json to_json(const VandermondeReport& r) {
  nlohmann::json matrix = nlohmann::json::array();
  for (Eigen::Index j = 0; j < r.matrix.rows(); ++j) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index i = 0; i < r.matrix.cols(); ++i) row.push_back(r.matrix(j, i));
    matrix.push_back(row);
  }
  return {{"matrix", matrix},
          {"log_scale", r.log_scale},
          {"determinant", r.determinant},
          {"determinant_sign_ok", r.determinant_sign_ok},
          {"min_singular_value", r.min_singular_value},
          {"max_singular_value", r.max_singular_value},
          {"invertible", r.invertible},
          {"null_vector", r.null_vector ? nlohmann::json(*r.null_vector) : nlohmann::json(nullptr)},
          {"dynamic_range_exceeded", r.dynamic_range_exceeded}};
}

inline nlohmann::json to_json(const EqualityReport& r) {
  return {{"sup_norm_cdf_gap", r.sup_norm_cdf_gap},
          {"equal_distribution", r.equal_distribution},
          {"inconclusive", r.inconclusive},
          {"permutation",
           r.matched_permutation ? nlohmann::json(*r.matched_permutation) : nlohmann::json(nullptr)},
          {"max_param_gap", std::isfinite(r.max_param_gap) ? nlohmann::json(r.max_param_gap)
                                                           : nlohmann::json(nullptr)},
          {"equal_parameters", r.equal_parameters}};
}

inline nlohmann::json to_json(const ProbeReport& r) {
  nlohmann::json witness = nullptr;
  if (r.witness_pair) {
    witness = nlohmann::json::array(
        {model_json_value(r.witness_pair->first), model_json_value(r.witness_pair->second)});
  }
  return {{"smallest_gap", std::isfinite(r.smallest_gap) ? nlohmann::json(r.smallest_gap)
                                                         : nlohmann::json(nullptr)},
          {"witness_pair", witness},
          {"witness_param_distance", r.witness_param_distance},
          {"candidate", r.candidate},
          {"near_tol", r.near_tol},
          {"p", r.p},
          {"s", r.s},
          {"n_trials", r.n_trials},
          {"evaluations", r.evaluations},
          {"seed", r.seed}};
}

inline nlohmann::json to_json(const TrialSummary& t) {
  nlohmann::json out{{"p", t.scenario.p},
                     {"s", t.scenario.s},
                     {"shared_scale", t.scenario.shared_scale},
                     {"n_trials", t.n_trials},
                     {"seed", t.seed},
                     {"distinct_passes", t.distinct_passes},
                     {"permuted_passes", t.permuted_passes},
                     {"min_distinct_gap", std::isfinite(t.min_distinct_gap)
                                              ? nlohmann::json(t.min_distinct_gap)
                                              : nlohmann::json(nullptr)},
                     {"max_permuted_gap", t.max_permuted_gap},
                     {"failed_trials", t.failed_trials},
                     {"routed_to_probe", t.probe.has_value()}};
  if (t.probe) out["probe"] = to_json(*t.probe);
  return out;
}

}  // namespace logimix
