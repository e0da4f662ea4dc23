#pragma once

// Command-line front end. Exit codes: 0 success, 1 invalid input,
// 2 numerical failure (non-convergence, unresolved quadrature, failed
// identifiability trial).

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "logimix/logimix.hpp"

namespace logimix::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNumerical = 2;

namespace detail {

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    logimix::detail::write_file_atomic(path, text);
  }
}

inline std::vector<double> parse_reals(const std::string& list, const char* what) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(logimix::detail::parse_real(item, 1));
  logimix::detail::require(!out.empty(), std::string(what) + ": expected a comma-separated list");
  return out;
}

struct Options {
  std::uint64_t seed = 0;
  std::string model;
  std::string model2;
  std::string data;
  std::string out;
  std::string labels;
  std::string report;
  std::string plot;
  std::size_t n = 0;
  FitConfig fit;
  std::string mode;
  std::size_t nodes = 64;
  std::string mus;
  std::string sigmas;
  std::size_t p = 1;
  std::size_t s = 2;
  bool per_component_scale = false;
  std::size_t trials = 100;
  EqualityOptions equality;
  std::string coords;
  std::string offsets;
  ProbeOptions probe;
};

inline int cmd_sample(const Options& o, std::ostream& out) {
  const MixtureModel model = load_model(o.model);
  const auto draw = sample_mixture(model, o.n, o.seed);
  emit(o.out, to_csv(draw.data, "sample seed=" + std::to_string(o.seed)), out);
  if (!o.labels.empty()) {
    std::string text = "# label\n";
    for (std::size_t label : draw.labels) text += std::to_string(label) + "\n";
    logimix::detail::write_file_atomic(o.labels, text);
  }
  return kExitOk;
}

inline int cmd_eval(const Options& o, std::ostream& out) {
  const MixtureModel model = load_model(o.model);
  const Dataset data = read_csv(o.data);
  logimix::detail::require(data.cols() == model.dim(),
                           "eval: data has " + std::to_string(data.cols()) +
                               " columns, model has dimension " + std::to_string(model.dim()));
  std::vector<double> per_row(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) per_row[i] = mixture_log_pdf(data.row(i), model);
  const double total = logimix::detail::pairwise_sum(per_row);
  nlohmann::json report{{"log_densities", per_row},
                        {"total_log_likelihood", total},
                        {"mean_log_density", total / static_cast<double>(data.rows())},
                        {"n", data.rows()},
                        {"seed", o.seed}};
  emit(o.out, dump(report), out);

  if (!o.plot.empty()) {
    logimix::detail::require(model.dim() == 1, "eval: --emit-plot-data needs a univariate model");
    double lo = model.component(0).mu()[0];
    double hi = lo;
    double scale = 0.0;
    for (const auto& c : model.components()) {
      lo = std::min(lo, c.mu()[0]);
      hi = std::max(hi, c.mu()[0]);
      scale = std::max(scale, c.sigma()[0]);
    }
    lo -= 10.0 * scale;
    hi += 10.0 * scale;
    constexpr int kPoints = 401;
    std::string text = "# x,pdf,cdf\n";
    for (int i = 0; i < kPoints; ++i) {
      const double x = lo + (hi - lo) * i / (kPoints - 1);
      const Point pt(&x, 1);
      text += logimix::detail::format_real(x) + "," +
              logimix::detail::format_real(mixture_pdf(pt, model)) + "," +
              logimix::detail::format_real(mixture_cdf(pt, model)) + "\n";
    }
    logimix::detail::write_file_atomic(o.plot, text);
  }
  return kExitOk;
}

inline int cmd_fit(const Options& o, std::ostream& out, std::ostream& err) {
  const Dataset data = read_csv(o.data);
  FitConfig cfg = o.fit;
  cfg.seed = o.seed;
  const FitResult fit = em_fit(data, cfg);
  emit(o.out, model_to_json(fit.model), out);
  if (!o.report.empty()) logimix::detail::write_file_atomic(o.report, dump(fit_report_json(fit)));
  if (!fit.converged) {
    err << "fit: EM did not converge within " << cfg.max_iter << " iterations\n";
    return kExitNumerical;
  }
  return kExitOk;
}

inline int cmd_check_id(const Options& o, std::ostream& out) {
  if (o.mode == "gram") {
    const MixtureModel model = load_model(o.model);
    GramOptions g;
    g.nodes_per_axis = o.nodes;
    const GramReport report = gram_min_eigenvalue(model.components(), g);
    auto j = to_json(report);
    j["relative_min_eigenvalue"] = report.relative_min_eigenvalue();
    j["seed"] = o.seed;
    emit(o.out, dump(j), out);
    return report.converged ? kExitOk : kExitNumerical;
  }
  if (o.mode == "vandermonde") {
    const auto report = vandermonde_check(parse_reals(o.mus, "--mus"), parse_reals(o.sigmas, "--sigmas"));
    auto j = to_json(report);
    j["seed"] = o.seed;
    emit(o.out, dump(j), out);
    return kExitOk;
  }
  if (o.mode == "equality") {
    const MixtureModel m1 = load_model(o.model);
    const MixtureModel m2 = load_model(o.model2);
    auto j = to_json(mixture_equality_test(m1, m2, o.equality));
    j["seed"] = o.seed;
    emit(o.out, dump(j), out);
    return kExitOk;
  }
  if (o.mode == "trial") {
    const Scenario scenario{o.p, o.s, !o.per_component_scale};
    const TrialSummary summary = identifiability_trial(scenario, o.seed, o.trials, o.equality);
    emit(o.out, dump(to_json(summary)), out);
    if (summary.probe) return kExitOk;
    return summary.all_passed() ? kExitOk : kExitNumerical;
  }
  throw ValidationError("check-id: unknown mode '" + o.mode + "'");
}

inline int cmd_collapse(const Options& o, std::ostream& out) {
  const MixtureModel model = load_model(o.model);
  std::vector<double> coords = parse_reals(o.coords, "--coords");
  logimix::detail::require(coords.size() == 2, "--coords: expected two indices a,b");
  for (double c : coords) {
    logimix::detail::require(c >= 0.0 && c == std::floor(c), "--coords: indices must be integers >= 0");
  }
  const auto a = static_cast<std::size_t>(coords[0]);
  const auto b = static_cast<std::size_t>(coords[1]);
  double y_a = 0.0;
  double y_b = 0.0;
  if (o.offsets.empty()) {
    const auto found = find_separating_offsets(model.components(), a, b, o.seed);
    y_a = found.y_a;
    y_b = found.y_b;
  } else {
    const auto y = parse_reals(o.offsets, "--offsets");
    logimix::detail::require(y.size() == 2, "--offsets: expected two values ya,yb");
    y_a = y[0];
    y_b = y[1];
  }
  emit(o.out, model_to_json(collapse_pair(model, a, b, y_a, y_b)), out);
  return kExitOk;
}

inline int cmd_probe(const Options& o, std::ostream& out) {
  const ProbeReport report = probe_open_problem(o.p, o.s, o.trials, o.seed, o.probe);
  emit(o.out, dump(to_json(report)), out);
  return kExitOk;
}

}  // namespace detail

/// Parses `args` (program name first) and runs the selected subcommand.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  detail::Options o;
  CLI::App app{"Finite mixtures of multivariate logistic distributions"};
  app.require_subcommand(1);

  auto* sample = app.add_subcommand("sample", "Draw observations from a model");
  sample->add_option("--model", o.model, "Model JSON")->required()->check(CLI::ExistingFile);
  sample->add_option("--n", o.n, "Number of draws")->required()->check(CLI::PositiveNumber);
  sample->add_option("--seed", o.seed, "Random seed");
  sample->add_option("--out", o.out, "Output CSV")->required();
  sample->add_option("--labels", o.labels, "Optional CSV of component labels");

  auto* eval = app.add_subcommand("eval", "Per-row log-densities and total log-likelihood");
  eval->add_option("--model", o.model, "Model JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", o.data, "Data CSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", o.out, "Output JSON")->required();
  eval->add_option("--emit-plot-data", o.plot, "CSV grid of (x, pdf, cdf) for p = 1 models");
  eval->add_option("--seed", o.seed, "Seed echoed into the report");

  auto* fit = app.add_subcommand("fit", "Maximum-likelihood fit by EM");
  fit->add_option("--data", o.data, "Data CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--s", o.fit.s, "Number of components")->required()->check(CLI::PositiveNumber);
  fit->add_option("--seed", o.seed, "Random seed");
  fit->add_option("--out", o.out, "Fitted model JSON")->required();
  fit->add_option("--report", o.report, "Fit report JSON");
  fit->add_option("--max-iter", o.fit.max_iter, "EM iteration cap");
  fit->add_option("--rel-tol", o.fit.rel_tol, "Relative log-likelihood improvement tolerance");
  fit->add_option("--restarts", o.fit.n_restarts, "Independent initializations");
  fit->add_option("--m-step-iters", o.fit.m_step_iters, "Gradient steps per M-step");
  fit->add_option("--m-step-tol", o.fit.m_step_tol, "M-step gradient-norm tolerance");

  auto* check = app.add_subcommand("check-id", "Identifiability checks");
  check->add_option("--mode", o.mode, "gram | vandermonde | equality | trial")
      ->required()
      ->check(CLI::IsMember({"gram", "vandermonde", "equality", "trial"}));
  check->add_option("--model", o.model, "Model JSON (gram, equality)")->check(CLI::ExistingFile);
  check->add_option("--model2", o.model2, "Second model JSON (equality)")->check(CLI::ExistingFile);
  check->add_option("--nodes", o.nodes, "Gauss-Legendre nodes per axis (gram)");
  check->add_option("--mus", o.mus, "Comma-separated locations (vandermonde)");
  check->add_option("--sigmas", o.sigmas, "Comma-separated scales (vandermonde)");
  check->add_option("--p", o.p, "Dimension (trial)");
  check->add_option("--s", o.s, "Components per model (trial)");
  check->add_flag("--per-component-scale", o.per_component_scale,
                  "Let every component carry its own scale (trial)");
  check->add_option("--trials", o.trials, "Number of trials (trial)");
  check->add_option("--seed", o.seed, "Random seed");
  check->add_option("--dist-tol", o.equality.dist_tol, "Distribution-equality tolerance");
  check->add_option("--param-tol", o.equality.param_tol, "Parameter-equality tolerance");
  check->add_option("--grid-points", o.equality.grid_points, "Grid points per axis");
  check->add_option("--out", o.out, "Output JSON (default: stdout)");

  auto* collapse = app.add_subcommand("collapse", "Merge two coordinates of a shared-scale model");
  collapse->add_option("--model", o.model, "Model JSON")->required()->check(CLI::ExistingFile);
  collapse->add_option("--coords", o.coords, "Zero-based coordinate pair a,b")->required();
  collapse->add_option("--offsets", o.offsets, "Offsets ya,yb (searched for when omitted)");
  collapse->add_option("--seed", o.seed, "Seed for the offset search");
  collapse->add_option("--out", o.out, "Collapsed model JSON")->required();

  auto* probe = app.add_subcommand("probe-open", "Search for near-coincident per-component-scale mixtures");
  probe->add_option("--p", o.p, "Dimension")->required();
  probe->add_option("--s", o.s, "Components per model")->required();
  probe->add_option("--trials", o.trials, "Number of random starts")->required();
  probe->add_option("--seed", o.seed, "Random seed");
  probe->add_option("--near-tol", o.probe.near_tol, "Gap below which a pair is flagged");
  probe->add_option("--evals", o.probe.evaluations_per_trial, "Gap evaluations per trial");
  probe->add_option("--grid-points", o.probe.grid.grid_points, "Grid points per axis");
  probe->add_option("--out", o.out, "Output JSON")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*sample) return detail::cmd_sample(o, out);
    if (*eval) return detail::cmd_eval(o, out);
    if (*fit) return detail::cmd_fit(o, out, err);
    if (*check) return detail::cmd_check_id(o, out);
    if (*collapse) return detail::cmd_collapse(o, out);
    if (*probe) return detail::cmd_probe(o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}

}  // namespace logimix::cli
