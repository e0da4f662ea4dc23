// Draws from a two-component univariate mixture, refits it by EM and
// prints the recovered parameters next to the truth.

#include <cstdio>

#include "logimix/logimix.hpp"

int main() {
  using namespace logimix;
  const MixtureModel truth({0.3, 0.7}, {MldParams({-2.0}, {1.0}), MldParams({2.0}, {0.5})});
  const auto draw = sample_mixture(truth, 50000, 42);

  FitConfig cfg;
  cfg.s = 2;
  cfg.seed = 7;
  const FitResult fit = em_fit(draw.data, cfg);

  const Assignment match = match_components(truth, fit.model);
  std::printf("converged=%d iterations=%zu loglik=%.6f\n", fit.converged, fit.n_iter,
              fit.final_loglik());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::size_t j = match.permutation[i];
    std::printf("component %zu: weight %.4f (true %.2f)  mu %.4f (true %.2f)  sigma %.4f (true %.2f)\n",
                i, fit.model.weights()[j], truth.weights()[i], fit.model.component(j).mu()[0],
                truth.component(i).mu()[0], fit.model.component(j).sigma()[0],
                truth.component(i).sigma()[0]);
  }
  return 0;
}
