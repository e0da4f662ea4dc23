#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "logimix/dataset.hpp"
#include "logimix/detail/io.hpp"
#include "logimix/detail/numeric.hpp"
#include "logimix/error.hpp"
#include "logimix/mld.hpp"
#include "logimix/random.hpp"

namespace logimix {

inline constexpr double kMinWeight = 1e-12;
inline constexpr double kSimplexTol = 1e-12;
inline constexpr double kLoadSimplexTol = 1e-9;
inline constexpr const char* kModelFormat = "logimix-model-v1";

/// Finite mixture sum_i weight_i * MLD(mu_i, sigma_i), all components of
/// the same dimension.
class MixtureModel {
 public:
  MixtureModel(std::vector<double> weights, std::vector<MldParams> components)
      : weights_(std::move(weights)), components_(std::move(components)) {
    detail::require(!components_.empty(), "MixtureModel: at least one component is required");
    detail::require(weights_.size() == components_.size(),
                    "MixtureModel: " + std::to_string(weights_.size()) + " weights for " +
                        std::to_string(components_.size()) + " components");
    const std::size_t p = components_.front().dim();
    for (const auto& c : components_) {
      detail::require(c.dim() == p, "MixtureModel: components must share one dimension");
    }
    double total = 0.0;
    for (double w : weights_) {
      detail::require(std::isfinite(w) && w >= kMinWeight && w <= 1.0,
                      "MixtureModel: every weight must lie in [1e-12, 1]");
      total += w;
    }
    detail::require(std::abs(total - 1.0) <= kSimplexTol,
                    "MixtureModel: weights must sum to 1 (sum is " + detail::format_real(total) + ")");
  }

  /// Single component with weight 1.
  explicit MixtureModel(MldParams component)
      : MixtureModel(std::vector<double>{1.0}, std::vector<MldParams>{std::move(component)}) {}

  /// Renormalizes weights lying within `tol` of the simplex; rejects the rest.
  static MixtureModel normalized(std::vector<double> weights, std::vector<MldParams> components,
                                 double tol = kLoadSimplexTol) {
    double total = 0.0;
    for (double w : weights) {
      detail::require(std::isfinite(w) && w > 0.0, "MixtureModel: weights must be positive");
      total += w;
    }
    detail::require(std::abs(total - 1.0) <= tol,
                    "MixtureModel: weights sum to " + detail::format_real(total) +
                        ", which is not within " + detail::format_real(tol) + " of 1");
    for (double& w : weights) w /= total;
    return MixtureModel(std::move(weights), std::move(components));
  }

  std::size_t size() const { return components_.size(); }
  std::size_t dim() const { return components_.front().dim(); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<MldParams>& components() const { return components_; }
  const MldParams& component(std::size_t i) const { return components_[i]; }

  /// Model whose component i is this model's component perm[i].
  MixtureModel permuted(const std::vector<std::size_t>& perm) const {
    detail::require(perm.size() == size(), "permuted: permutation length mismatch");
    std::vector<double> w;
    std::vector<MldParams> c;
    std::vector<bool> seen(size(), false);
    for (std::size_t idx : perm) {
      detail::require(idx < size() && !seen[idx], "permuted: not a permutation");
      seen[idx] = true;
      w.push_back(weights_[idx]);
      c.push_back(components_[idx]);
    }
    return MixtureModel(std::move(w), std::move(c));
  }

  friend bool operator==(const MixtureModel&, const MixtureModel&) = default;

 private:
  std::vector<double> weights_;
  std::vector<MldParams> components_;
};

namespace detail {

inline void check_dim(Point x, const MixtureModel& model) {
  if (x.size() != model.dim()) {
    throw ValidationError("dimension mismatch: point has " + std::to_string(x.size()) +
                          " coordinates, model has " + std::to_string(model.dim()));
  }
}

/// log(weight_i) + log pdf_i(x) for every component.
inline void component_log_terms(Point x, const MixtureModel& model, std::span<double> out) {
  for (std::size_t i = 0; i < model.size(); ++i) {
    out[i] = std::log(model.weights()[i]) + mld_log_pdf(x, model.component(i));
  }
}

}  // namespace detail

inline double mixture_cdf(Point x, const MixtureModel& model) {
  detail::check_dim(x, model);
  double acc = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    acc += model.weights()[i] * mld_cdf(x, model.component(i));
  }
  return detail::clamp_probability(acc);
}

inline double mixture_log_pdf(Point x, const MixtureModel& model) {
  detail::check_dim(x, model);
  std::vector<double> terms(model.size());
  detail::component_log_terms(x, model, terms);
  return detail::log_sum_exp(terms);
}

inline double mixture_pdf(Point x, const MixtureModel& model) {
  return std::exp(mixture_log_pdf(x, model));
}

/// Sum of per-row mixture log-densities, reduced pairwise in a fixed order.
inline double log_likelihood(const Dataset& data, const MixtureModel& model) {
  detail::require(data.cols() == model.dim(),
                  "log_likelihood: data has " + std::to_string(data.cols()) +
                      " columns, model has dimension " + std::to_string(model.dim()));
  std::vector<double> per_row(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) per_row[i] = mixture_log_pdf(data.row(i), model);
  return detail::pairwise_sum(per_row);
}

struct LabeledSample {
  Dataset data;
  std::vector<std::size_t> labels;
};

/// Row i uses stream i: one uniform chooses the component, the next p
/// uniforms drive the exact component sampler.
inline LabeledSample sample_mixture(const MixtureModel& model, std::size_t n, std::uint64_t seed) {
  detail::require(n >= 1, "sample_mixture: n must be at least 1");
  LabeledSample out{Dataset(n, model.dim()), std::vector<std::size_t>(n, 0)};
  std::vector<double> cumulative(model.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    acc += model.weights()[i];
    cumulative[i] = acc;
  }
  const CounterRng root(seed);
  for (std::size_t r = 0; r < n; ++r) {
    CounterRng rng = root.split(r);
    const double u = rng.uniform() * acc;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const std::size_t label =
        std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), model.size() - 1);
    out.labels[r] = label;
    detail::sample_into(model.component(label), rng, out.data.row(r));
  }
  return out;
}

// Persistence. Reals are written with 17 significant digits so a
// save/load round trip is exact.

inline std::string model_to_json(const MixtureModel& model) {
  auto list = [](const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ", ";
      s += detail::format_real(v[i]);
    }
    return s + "]";
  };
  std::ostringstream out;
  out << "{\n";
  out << "  \"format\": \"" << kModelFormat << "\",\n";
  out << "  \"p\": " << model.dim() << ",\n";
  out << "  \"s\": " << model.size() << ",\n";
  out << "  \"weights\": " << list(model.weights()) << ",\n";
  out << "  \"components\": [\n";
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto& c = model.component(i);
    out << "    {\"mu\": " << list(c.mu()) << ", \"sigma\": " << list(c.sigma()) << "}";
    out << (i + 1 < model.size() ? ",\n" : "\n");
  }
  out << "  ]\n}\n";
  return out.str();
}

namespace detail {

inline std::vector<double> real_array(const nlohmann::json& node, const std::string& what) {
  require(node.is_array(), "model file: '" + what + "' must be an array");
  std::vector<double> out;
  for (const auto& v : node) {
    require(v.is_number(), "model file: '" + what + "' must contain only numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail

inline MixtureModel model_from_json(const nlohmann::json& doc) {
  using detail::require;
  require(doc.is_object(), "model file: top level must be a JSON object");
  require(doc.contains("format") && doc["format"] == kModelFormat,
          std::string("model file: 'format' must be \"") + kModelFormat + "\"");
  for (const char* key : {"p", "s", "weights", "components"}) {
    require(doc.contains(key), std::string("model file: missing field '") + key + "'");
  }
  require(doc["p"].is_number_integer() && doc["s"].is_number_integer(),
          "model file: 'p' and 's' must be integers");
  const auto p = doc["p"].get<long long>();
  const auto s = doc["s"].get<long long>();
  require(p >= 1 && s >= 1, "model file: 'p' and 's' must be at least 1");
  auto weights = detail::real_array(doc["weights"], "weights");
  require(static_cast<long long>(weights.size()) == s,
          "model file: 'weights' has " + std::to_string(weights.size()) + " entries, expected " +
              std::to_string(s));
  const auto& comps = doc["components"];
  require(comps.is_array() && static_cast<long long>(comps.size()) == s,
          "model file: 'components' must be an array of s entries");
  std::vector<MldParams> components;
  for (const auto& c : comps) {
    require(c.is_object() && c.contains("mu") && c.contains("sigma"),
            "model file: every component needs 'mu' and 'sigma'");
    auto mu = detail::real_array(c["mu"], "mu");
    auto sigma = detail::real_array(c["sigma"], "sigma");
    require(static_cast<long long>(mu.size()) == p && static_cast<long long>(sigma.size()) == p,
            "model file: component vectors must have length p = " + std::to_string(p));
    components.emplace_back(std::move(mu), std::move(sigma));
  }
  for (double w : weights) {
    require(w >= kMinWeight, "model file: every weight must be at least 1e-12");
  }
  return MixtureModel::normalized(std::move(weights), std::move(components));
}

inline MixtureModel parse_model(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("model file: malformed JSON: ") + e.what());
  }
  return model_from_json(doc);
}

inline void save_model(const MixtureModel& model, const std::string& path) {
  detail::write_file_atomic(path, model_to_json(model));
}

inline MixtureModel load_model(const std::string& path) {
  return parse_model(detail::read_file(path));
}

}  // namespace logimix
