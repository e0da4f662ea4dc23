#pragma once

// Maximum-likelihood fitting by generalized EM. The E-step is exact; the
// M-step updates weights in closed form and improves each component's
// responsibility-weighted log-likelihood over (mu, log sigma) by gradient
// ascent with a halving line search, which keeps the likelihood monotone.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "logimix/dataset.hpp"
#include "logimix/detail/numeric.hpp"
#include "logimix/error.hpp"
#include "logimix/mixture.hpp"
#include "logimix/mld.hpp"
#include "logimix/random.hpp"

namespace logimix {

struct FitConfig {
  std::size_t s = 1;
  std::size_t max_iter = 500;
  double rel_tol = 1e-8;
  std::size_t n_restarts = 5;
  std::uint64_t seed = 0;
  std::size_t m_step_iters = 50;
  double m_step_tol = 1e-10;

  void validate() const {
    detail::require(s >= 1, "FitConfig: s must be at least 1");
    detail::require(n_restarts >= 1, "FitConfig: n_restarts must be at least 1");
    detail::require(max_iter >= 1, "FitConfig: max_iter must be at least 1");
    detail::require(rel_tol > 0.0 && m_step_tol > 0.0, "FitConfig: tolerances must be positive");
  }
};

struct FitResult {
  MixtureModel model;
  std::vector<double> loglik_trace;
  bool converged = false;
  std::size_t n_iter = 0;
  std::size_t best_of = 0;          // restarts that ran to completion
  std::size_t best_restart = 0;     // index of the winning restart
  std::size_t reinitializations = 0;  // degenerate-component re-draws, all restarts
  std::uint64_t seed = 0;

  double final_loglik() const { return loglik_trace.back(); }
};

struct Responsibilities {
  std::vector<double> values;
  bool underflow = false;  // every component density underflowed; values are uniform
};

inline Responsibilities responsibilities(Point x, const MixtureModel& model) {
  detail::check_dim(x, model);
  Responsibilities out{std::vector<double>(model.size()), false};
  detail::component_log_terms(x, model, out.values);
  const double total = detail::log_sum_exp(out.values);
  if (!std::isfinite(total)) {
    std::fill(out.values.begin(), out.values.end(), 1.0 / static_cast<double>(model.size()));
    out.underflow = true;
    return out;
  }
  for (double& v : out.values) v = std::exp(v - total);
  return out;
}

struct LogPdfGradient {
  std::vector<double> mu;
  std::vector<double> log_sigma;
};

/// Gradient of mld_log_pdf with respect to mu and log sigma. With
/// w_k = exp(-z_k) / (1 + sum_j exp(-z_j)):
///   d/dmu_k        = (1 - (p+1) w_k) / sigma_k
///   d/dlog sigma_k = z_k (1 - (p+1) w_k) - 1
inline LogPdfGradient component_log_pdf_grad(Point x, const MldParams& params) {
  detail::check_point(x, params);
  const std::size_t p = params.dim();
  std::vector<double> z(p);
  detail::standardize(x, params, z);
  const double lse = detail::log1p_sum_exp_neg(z);
  const double p1 = static_cast<double>(p + 1);
  LogPdfGradient g{std::vector<double>(p), std::vector<double>(p)};
  for (std::size_t k = 0; k < p; ++k) {
    const double w = std::exp(-z[k] - lse);
    const double common = 1.0 - p1 * w;
    g.mu[k] = common / params.sigma()[k];
    g.log_sigma[k] = z[k] * common - 1.0;
  }
  return g;
}

enum class InitStrategy { Quantile, RandomRows };

inline InitStrategy parse_init_strategy(const std::string& name) {
  if (name == "quantile") return InitStrategy::Quantile;
  if (name == "random-rows") return InitStrategy::RandomRows;
  throw ValidationError("unknown init strategy '" + name + "' (expected quantile or random-rows)");
}

namespace detail {

inline std::size_t count_distinct_rows(const Dataset& data, std::size_t enough) {
  std::vector<std::size_t> idx(data.rows());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  auto less = [&](std::size_t a, std::size_t b) {
    const auto ra = data.row(a);
    const auto rb = data.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  };
  std::sort(idx.begin(), idx.end(), less);
  std::size_t distinct = idx.empty() ? 0 : 1;
  for (std::size_t i = 1; i < idx.size() && distinct < enough; ++i) {
    if (less(idx[i - 1], idx[i])) ++distinct;
  }
  return distinct;
}

/// Linear interpolation between order statistics (R type 7).
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Logistic scale matching the column's standard deviation: sd * sqrt(3) / pi.
inline std::vector<double> moment_scales(const Dataset& data) {
  std::vector<double> out(data.cols());
  const auto n = static_cast<double>(data.rows());
  for (std::size_t k = 0; k < data.cols(); ++k) {
    const auto col = data.column(k);
    const double mean = pairwise_sum(col) / n;
    std::vector<double> sq(col.size());
    for (std::size_t i = 0; i < col.size(); ++i) sq[i] = (col[i] - mean) * (col[i] - mean);
    const double var = pairwise_sum(sq) / std::max(1.0, n - 1.0);
    const double sd = std::sqrt(var);
    require(sd > 0.0, "init_params: column " + std::to_string(k) + " is constant");
    out[k] = sd * std::numbers::sqrt3 / std::numbers::pi;
  }
  return out;
}

}  // namespace detail

inline MixtureModel init_params(const Dataset& data, std::size_t s, std::uint64_t seed,
                                InitStrategy strategy) {
  data.validate();
  detail::require(s >= 1, "init_params: s must be at least 1");
  detail::require(detail::count_distinct_rows(data, s) >= s,
                  "init_params: fewer than " + std::to_string(s) + " distinct rows");
  const std::size_t p = data.cols();
  const auto scales = detail::moment_scales(data);
  std::vector<std::vector<double>> means(s, std::vector<double>(p));

  if (strategy == InitStrategy::Quantile) {
    for (std::size_t k = 0; k < p; ++k) {
      auto col = data.column(k);
      std::sort(col.begin(), col.end());
      for (std::size_t i = 0; i < s; ++i) {
        const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(s);
        means[i][k] = detail::quantile_sorted(col, q);
      }
    }
  } else {
    // Partial Fisher-Yates over row indices, skipping rows equal to one
    // already chosen.
    CounterRng rng(seed, 0x1A17u);
    std::vector<std::size_t> idx(data.rows());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::size_t chosen = 0;
    for (std::size_t pos = 0; pos < idx.size() && chosen < s; ++pos) {
      const std::size_t pick = pos + rng.below(idx.size() - pos);
      std::swap(idx[pos], idx[pick]);
      const auto row = data.row(idx[pos]);
      const bool duplicate = std::any_of(means.begin(), means.begin() + chosen, [&](const auto& m) {
        return std::equal(m.begin(), m.end(), row.begin());
      });
      if (duplicate) continue;
      std::copy(row.begin(), row.end(), means[chosen].begin());
      ++chosen;
    }
  }

  std::vector<MldParams> comps;
  comps.reserve(s);
  for (auto& m : means) comps.emplace_back(std::move(m), scales);
  return MixtureModel::normalized(std::vector<double>(s, 1.0 / static_cast<double>(s)),
                                  std::move(comps), 1e-12);
}

namespace detail {

/// Component parameters in the unconstrained (mu, log sigma) coordinates.
struct ComponentState {
  std::vector<double> mu;
  std::vector<double> log_sigma;

  static ComponentState from(const MldParams& c) {
    ComponentState st{c.mu(), std::vector<double>(c.dim())};
    for (std::size_t k = 0; k < c.dim(); ++k) st.log_sigma[k] = std::log(c.sigma()[k]);
    return st;
  }
  MldParams params() const {
    std::vector<double> sigma(log_sigma.size());
    for (std::size_t k = 0; k < sigma.size(); ++k) sigma[k] = std::exp(log_sigma[k]);
    return MldParams(mu, std::move(sigma));
  }
  bool valid() const {
    for (std::size_t k = 0; k < mu.size(); ++k) {
      if (!std::isfinite(mu[k]) || !std::isfinite(log_sigma[k])) return false;
      const double s = std::exp(log_sigma[k]);
      if (!(s > 0.0) || !std::isfinite(s)) return false;
    }
    return true;
  }
};

/// Responsibility-weighted mean log-density of one component, optionally
/// with its gradient in (mu, log sigma) and the weighted mean of squared
/// per-row scores (a diagonal estimate of the Fisher information).
class WeightedObjective {
 public:
  WeightedObjective(const Dataset& data, std::span<const double> weights)
      : data_(data), weights_(weights) {
    mass_ = pairwise_sum(weights_);
    const auto p = static_cast<double>(data.cols());
    log_fact_ = std::lgamma(p + 1.0);
  }

  double mass() const { return mass_; }

  double value(const ComponentState& st, std::vector<double>* grad = nullptr,
               std::vector<double>* score_sq = nullptr) const {
    const std::size_t p = data_.cols();
    const auto pd = static_cast<double>(p);
    std::vector<double> inv_sigma(p);
    double log_scale = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
      inv_sigma[k] = std::exp(-st.log_sigma[k]);
      log_scale += st.log_sigma[k];
    }
    std::vector<double> z(p);
    if (grad) grad->assign(2 * p, 0.0);
    if (score_sq) score_sq->assign(2 * p, 0.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < data_.rows(); ++i) {
      const double r = weights_[i];
      if (r == 0.0) continue;
      const auto x = data_.row(i);
      double sum_z = 0.0;
      for (std::size_t k = 0; k < p; ++k) {
        z[k] = (x[k] - st.mu[k]) * inv_sigma[k];
        sum_z += z[k];
      }
      const double lse = log1p_sum_exp_neg(z);
      acc += r * (log_fact_ - sum_z - (pd + 1.0) * lse - log_scale);
      if (grad) {
        for (std::size_t k = 0; k < p; ++k) {
          const double common = 1.0 - (pd + 1.0) * std::exp(-z[k] - lse);
          const double g_mu = common * inv_sigma[k];
          const double g_ls = z[k] * common - 1.0;
          (*grad)[k] += r * g_mu;
          (*grad)[p + k] += r * g_ls;
          if (score_sq) {
            (*score_sq)[k] += r * g_mu * g_mu;
            (*score_sq)[p + k] += r * g_ls * g_ls;
          }
        }
      }
    }
    if (grad) {
      for (double& g : *grad) g /= mass_;
    }
    if (score_sq) {
      for (double& g : *score_sq) g /= mass_;
    }
    return acc / mass_;
  }

 private:
  const Dataset& data_;
  std::span<const double> weights_;
  double mass_ = 0.0;
  double log_fact_ = 0.0;
};

/// Gradient ascent with a halving line search starting at step 1. The
/// gradient is scaled coordinate-wise by the inverse mean squared score,
/// which keeps it an ascent direction and makes step 1 close to a Newton
/// step. Stops on the unscaled gradient norm. Returns that norm.
inline double improve_component(const WeightedObjective& objective, ComponentState& st,
                                 std::size_t max_iters, double grad_tol) {
  const std::size_t p = st.mu.size();
  std::vector<double> grad;
  std::vector<double> score_sq;
  double current = objective.value(st, &grad, &score_sq);
  double norm = 0.0;
  for (std::size_t iter = 0;; ++iter) {
    norm = 0.0;
    for (double g : grad) norm += g * g;
    norm = std::sqrt(norm);
    if (norm < grad_tol || iter >= max_iters) break;
    std::vector<double> direction(2 * p);
    for (std::size_t k = 0; k < 2 * p; ++k) {
      direction[k] = grad[k] / std::max(score_sq[k], 1e-12);
    }
    double slope = 0.0;
    for (std::size_t k = 0; k < 2 * p; ++k) slope += grad[k] * direction[k];
    bool accepted = false;
    double step = 1.0;
    std::vector<double> trial_grad;
    std::vector<double> trial_sq;
    for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
      // A gain this small cannot be told apart from rounding in `current`.
      if (step * slope < 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(current))) {
        break;
      }
      ComponentState trial = st;
      for (std::size_t k = 0; k < p; ++k) {
        trial.mu[k] += step * direction[k];
        trial.log_sigma[k] += step * direction[p + k];
      }
      if (!trial.valid()) continue;
      const double value = objective.value(trial, &trial_grad, &trial_sq);
      if (std::isfinite(value) && value > current) {
        st = std::move(trial);
        current = value;
        grad.swap(trial_grad);
        score_sq.swap(trial_sq);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return norm;
}

struct EStep {
  double loglik = 0.0;
  std::vector<std::vector<double>> resp;  // [component][row]
};

/// Per-component constants for evaluating many rows.
struct ComponentKernel {
  std::vector<double> mu;
  std::vector<double> inv_sigma;
  double log_norm = 0.0;  // log weight + log p! - sum log sigma

  ComponentKernel(const MldParams& c, double weight) : mu(c.mu()), inv_sigma(c.dim()) {
    for (std::size_t k = 0; k < c.dim(); ++k) inv_sigma[k] = 1.0 / c.sigma()[k];
    log_norm = std::log(weight) + std::lgamma(static_cast<double>(c.dim()) + 1.0) -
               c.log_scale_sum();
  }

  double log_term(std::span<const double> x, std::span<double> z) const {
    double sum_z = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      z[k] = (x[k] - mu[k]) * inv_sigma[k];
      sum_z += z[k];
    }
    return log_norm - sum_z - static_cast<double>(x.size() + 1) * log1p_sum_exp_neg(z);
  }
};

inline EStep e_step(const Dataset& data, const MixtureModel& model) {
  const std::size_t s = model.size();
  EStep out{0.0, std::vector<std::vector<double>>(s, std::vector<double>(data.rows()))};
  std::vector<ComponentKernel> kernels;
  kernels.reserve(s);
  for (std::size_t c = 0; c < s; ++c) kernels.emplace_back(model.component(c), model.weights()[c]);
  std::vector<double> terms(s);
  std::vector<double> z(data.cols());
  std::vector<double> per_row(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto x = data.row(i);
    for (std::size_t c = 0; c < s; ++c) terms[c] = kernels[c].log_term(x, z);
    const double total = log_sum_exp(terms);
    per_row[i] = total;
    for (std::size_t c = 0; c < s; ++c) {
      out.resp[c][i] = std::isfinite(total) ? std::exp(terms[c] - total)
                                            : 1.0 / static_cast<double>(s);
    }
  }
  out.loglik = pairwise_sum(per_row);
  return out;
}

struct RestartOutcome {
  std::optional<MixtureModel> model;
  std::vector<double> trace;
  bool converged = false;
  std::size_t n_iter = 0;
  bool degenerate = false;
};

inline constexpr double kMinComponentMass = 1e-8;

inline RestartOutcome run_em(const Dataset& data, MixtureModel model, const FitConfig& cfg) {
  RestartOutcome out;
  const std::size_t s = model.size();
  const auto n = static_cast<double>(data.rows());
  double previous = -std::numeric_limits<double>::infinity();
  for (std::size_t iter = 0;; ++iter) {
    EStep e = e_step(data, model);
    out.trace.push_back(e.loglik);
    if (iter > 0 && (e.loglik - previous) / std::abs(previous) < cfg.rel_tol) {
      out.converged = true;
      break;
    }
    if (iter >= cfg.max_iter) break;
    previous = e.loglik;

    std::vector<double> mass(s);
    for (std::size_t c = 0; c < s; ++c) {
      mass[c] = pairwise_sum(e.resp[c]);
      if (mass[c] < kMinComponentMass) {
        out.degenerate = true;
        return out;
      }
    }
    std::vector<double> weights(s);
    double total = 0.0;
    for (std::size_t c = 0; c < s; ++c) {
      weights[c] = std::max(kMinWeight, mass[c] / n);
      total += weights[c];
    }
    for (double& w : weights) w /= total;

    std::vector<MldParams> comps;
    comps.reserve(s);
    for (std::size_t c = 0; c < s; ++c) {
      WeightedObjective objective(data, e.resp[c]);
      ComponentState st = ComponentState::from(model.component(c));
      improve_component(objective, st, cfg.m_step_iters, cfg.m_step_tol);
      comps.push_back(st.params());
    }
    model = MixtureModel(std::move(weights), std::move(comps));
    out.n_iter = iter + 1;
  }
  out.model = std::move(model);
  return out;
}

}  // namespace detail

inline constexpr std::size_t kMaxReinitializations = 3;

/// Runs `n_restarts` EM initializations and keeps the best final
/// log-likelihood (ties within 1e-12 go to the lower restart index).
/// Restart 0 starts from the quantile initialization, the others from
/// random rows; a restart whose component loses all responsibility mass is
/// re-drawn from fresh random rows up to three times.
inline FitResult em_fit(const Dataset& data, const FitConfig& cfg) {
  cfg.validate();
  data.validate();
  detail::require(data.rows() >= cfg.s, "em_fit: need at least s = " + std::to_string(cfg.s) +
                                            " rows, got " + std::to_string(data.rows()));
  const CounterRng root(cfg.seed);
  std::optional<FitResult> best;
  std::size_t completed = 0;
  std::size_t reinits = 0;
  for (std::size_t r = 0; r < cfg.n_restarts; ++r) {
    const CounterRng restart_rng = root.split(r);
    for (std::size_t attempt = 0; attempt <= kMaxReinitializations; ++attempt) {
      const bool quantile = r == 0 && attempt == 0;
      const std::uint64_t init_seed = restart_rng.split(attempt).stream();
      MixtureModel init = init_params(data, cfg.s, init_seed,
                                      quantile ? InitStrategy::Quantile : InitStrategy::RandomRows);
      auto outcome = detail::run_em(data, std::move(init), cfg);
      if (outcome.degenerate) {
        if (attempt < kMaxReinitializations) ++reinits;
        continue;
      }
      ++completed;
      const double ll = outcome.trace.back();
      if (!best || ll > best->final_loglik() + 1e-12) {
        best = FitResult{std::move(*outcome.model), std::move(outcome.trace), outcome.converged,
                         outcome.n_iter, 0, r, 0, cfg.seed};
      }
      break;
    }
  }
  if (!best) {
    throw NumericalError("em_fit: every restart collapsed a component to zero responsibility");
  }
  best->best_of = completed;
  best->reinitializations = reinits;
  return *best;
}

/// Fit report: {"loglik_trace", "converged", "n_iter", "seed", ...}.
inline nlohmann::json fit_report_json(const FitResult& fit) {
  return nlohmann::json{{"loglik_trace", fit.loglik_trace},
                        {"converged", fit.converged},
                        {"n_iter", fit.n_iter},
                        {"seed", fit.seed},
                        {"best_of", fit.best_of},
                        {"best_restart", fit.best_restart},
                        {"final_loglik", fit.final_loglik()}};
}

}  // namespace logimix
