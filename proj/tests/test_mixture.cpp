#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "logimix/mixture.hpp"
#include "oracles.hpp"

using namespace logimix;

namespace {

MixtureModel reference_model() {
  return MixtureModel({0.3, 0.7}, {MldParams({-2.0}, {1.0}), MldParams({2.0}, {0.5})});
}

MixtureModel random_mixture(std::size_t p, std::size_t s, CounterRng& rng) {
  std::vector<double> w(s);
  std::vector<MldParams> comps;
  for (auto& v : w) v = rng.uniform(0.5, 2.0);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= total;
  for (std::size_t i = 0; i < s; ++i) comps.push_back(oracle::random_params(p, rng));
  return MixtureModel::normalized(w, comps, 1e-12);
}

std::string model_text(const std::string& weights, const std::string& sigma) {
  return R"({"format": "logimix-model-v1", "p": 1, "s": 2, "weights": )" + weights +
         R"(, "components": [{"mu": [0], "sigma": [1]}, {"mu": [1], "sigma": )" + sigma + "}]}";
}

}  // namespace

TEST(MixtureModel, ValidatesInvariants) {
  const MldParams c = MldParams::standard(1);
  EXPECT_THROW(MixtureModel({0.5, 0.6}, {c, c}), ValidationError);
  EXPECT_THROW(MixtureModel({1.0, 0.0}, {c, c}), ValidationError);
  EXPECT_THROW(MixtureModel({1.0}, {c, c}), ValidationError);
  EXPECT_THROW(MixtureModel({0.5, 0.5}, {c, MldParams::standard(2)}), ValidationError);
  EXPECT_NO_THROW(MixtureModel({0.25, 0.75}, {c, c}));
}

TEST(MixtureCdf, Examples) {
  const MldParams c({0.4, -1.0}, {2.0, 0.5});
  const std::vector<double> x{1.0, -0.7};
  EXPECT_EQ(mixture_cdf(x, MixtureModel(c)), mld_cdf(x, c));
  EXPECT_NEAR(mixture_cdf(x, MixtureModel({0.5, 0.5}, {c, c})), mld_cdf(x, c), 1e-16);

  const double zero = 0.0;
  const double expected = 0.3 / (1.0 + std::exp(-2.0)) + 0.7 / (1.0 + std::exp(4.0));
  EXPECT_NEAR(mixture_cdf(std::span(&zero, 1), reference_model()), expected, 1e-15);
}

TEST(MixturePdf, Examples) {
  const MldParams c({0.4}, {2.0});
  const double x = 0.3;
  EXPECT_EQ(mixture_pdf(std::span(&x, 1), MixtureModel(c)), mld_pdf(std::span(&x, 1), c));

  const MixtureModel sym({0.5, 0.5}, {MldParams({-1.3}, {1.0}), MldParams({1.3}, {1.0})});
  for (double v : {0.5, 1.0, 2.0}) {
    const double neg = -v;
    EXPECT_NEAR(mixture_pdf(std::span(&v, 1), sym), mixture_pdf(std::span(&neg, 1), sym), 1e-12);
  }

  // Term-by-term long-double evaluation of the reference model at 0.
  const double zero = 0.0;
  const double expected = 0.3 * oracle::pdf({0.0}, {-2.0}, {1.0}) + 0.7 * oracle::pdf({0.0}, {2.0}, {0.5});
  EXPECT_LT(oracle::relative_error(mixture_pdf(std::span(&zero, 1), reference_model()), expected), 1e-13);
}

TEST(MixturePdf, LogFormAgreesAndIntegratesToOne) {
  CounterRng rng(3);
  for (int i = 0; i < 100; ++i) {
    const MixtureModel m = random_mixture(1 + i % 3, 1 + i % 4, rng);
    std::vector<double> x(m.dim());
    for (auto& v : x) v = rng.uniform(-30, 30);
    const double pdf = mixture_pdf(x, m);
    EXPECT_GE(pdf, 0.0);
    if (pdf > 1e-300) EXPECT_LT(oracle::relative_error(std::exp(mixture_log_pdf(x, m)), pdf), 1e-12);
  }
  const MixtureModel m1 = random_mixture(1, 3, rng);
  EXPECT_NEAR(oracle::integrate_line([&](double x) { return mixture_pdf(std::span(&x, 1), m1); }), 1.0,
              1e-6);
  const MixtureModel m2 = random_mixture(2, 2, rng);
  EXPECT_NEAR(oracle::integrate_plane([&](double x, double y) {
                const double pt[2] = {x, y};
                return mixture_pdf(pt, m2);
              }),
              1.0, 1e-6);
}

TEST(MixtureCdf, IsConvexCombinationAndPermutationInvariant) {
  CounterRng rng(4);
  for (int i = 0; i < 200; ++i) {
    const std::size_t s = 2 + i % 3;
    const MixtureModel m = random_mixture(1 + i % 3, s, rng);
    std::vector<double> x(m.dim());
    for (auto& v : x) v = rng.uniform(-6, 6);
    const double f = mixture_cdf(x, m);
    double lo = 1.0;
    double hi = 0.0;
    for (const auto& c : m.components()) {
      lo = std::min(lo, mld_cdf(x, c));
      hi = std::max(hi, mld_cdf(x, c));
    }
    EXPECT_GE(f, lo - 1e-15);
    EXPECT_LE(f, hi + 1e-15);

    std::vector<std::size_t> perm(s);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::reverse(perm.begin(), perm.end());
    const MixtureModel q = m.permuted(perm);
    EXPECT_NEAR(mixture_cdf(x, q), f, 1e-12);
    EXPECT_LT(oracle::relative_error(mixture_pdf(x, q), mixture_pdf(x, m)), 1e-12);
  }
}

TEST(LogLikelihood, Examples) {
  const MldParams c({1.0, 2.0}, {0.5, 3.0});
  const Dataset one(1, 2, {1.0, 2.0});
  EXPECT_EQ(log_likelihood(one, MixtureModel(c)), mld_log_pdf(one.row(0), c));

  const LabeledSample draws = sample_mixture(reference_model(), 777, 5);
  const double single = log_likelihood(draws.data, reference_model());
  const double twice = log_likelihood(draws.data.repeated(2), reference_model());
  EXPECT_LT(oracle::relative_error(twice, 2.0 * single), 1e-9);

  EXPECT_THROW(log_likelihood(one, reference_model()), ValidationError);
}

TEST(LogLikelihood, MatchesMonteCarloEntropy) {
  const MixtureModel m({0.4, 0.6}, {MldParams({0.0, 1.0}, {1.0, 1.0}), MldParams({2.0, -1.0}, {0.5, 2.0})});
  // Independent large sample estimates E[log f].
  const LabeledSample big = sample_mixture(m, 200000, 100);
  double mean_big = 0.0;
  for (std::size_t i = 0; i < big.data.rows(); ++i) mean_big += mixture_log_pdf(big.data.row(i), m);
  mean_big /= static_cast<double>(big.data.rows());

  const LabeledSample small = sample_mixture(m, 1000, 200);
  std::vector<double> per_row(small.data.rows());
  for (std::size_t i = 0; i < per_row.size(); ++i) per_row[i] = mixture_log_pdf(small.data.row(i), m);
  const double mean = std::accumulate(per_row.begin(), per_row.end(), 0.0) / 1000.0;
  double var = 0.0;
  for (double v : per_row) var += (v - mean) * (v - mean);
  const double se = std::sqrt(var / 999.0 / 1000.0);
  EXPECT_NEAR(log_likelihood(small.data, m) / 1000.0, mean_big, 3.0 * se);
}

TEST(SampleMixture, Examples) {
  const LabeledSample one = sample_mixture(MixtureModel(MldParams::standard(2)), 1000, 1);
  EXPECT_TRUE(std::all_of(one.labels.begin(), one.labels.end(), [](std::size_t l) { return l == 0; }));

  const LabeledSample draws = sample_mixture(reference_model(), 100000, 42);
  const auto zeros = std::count(draws.labels.begin(), draws.labels.end(), std::size_t{0});
  EXPECT_NEAR(static_cast<double>(zeros) / 1e5, 0.3, 0.005);

  const LabeledSample again = sample_mixture(reference_model(), 100000, 42);
  EXPECT_EQ(draws.data, again.data);
  EXPECT_EQ(draws.labels, again.labels);
}

TEST(SampleMixture, ComponentDrawsFollowTheirLaw) {
  const MixtureModel model = reference_model();
  const LabeledSample draws = sample_mixture(model, 100000, 8);
  for (std::size_t label : {0u, 1u}) {
    std::vector<double> xs;
    for (std::size_t i = 0; i < draws.labels.size(); ++i) {
      if (draws.labels[i] == label) xs.push_back(draws.data(i, 0));
    }
    const MldParams& c = model.component(label);
    const double ks = oracle::ks_statistic(xs, [&](double x) { return marginal_cdf(x, c, 0); });
    // 1.95 / sqrt(n) is the 0.001 critical value
    EXPECT_LT(ks, 1.95 / std::sqrt(static_cast<double>(xs.size())));
  }
}

TEST(Persistence, RoundTripIsExact) {
  CounterRng rng(6);
  const MixtureModel m = random_mixture(3, 4, rng);
  EXPECT_EQ(parse_model(model_to_json(m)), m);

  const auto path = std::filesystem::temp_directory_path() / "logimix_roundtrip.json";
  save_model(m, path.string());
  EXPECT_EQ(load_model(path.string()), m);
  std::filesystem::remove(path);
}

TEST(Persistence, RejectsInvalidFiles) {
  EXPECT_NO_THROW(parse_model(model_text("[0.5, 0.5]", "[1]")));
  EXPECT_THROW(parse_model(model_text("[0.5, 0.6]", "[1]")), ValidationError);
  EXPECT_THROW(parse_model(model_text("[0.5, 0.5]", "[0]")), ValidationError);
  EXPECT_THROW(parse_model(model_text("[0.5, 0.5]", "[-1]")), ValidationError);
  EXPECT_THROW(parse_model(model_text("[0.5, 0.5]", "[1, 2]")), ValidationError);
  EXPECT_THROW(parse_model("{not json"), ValidationError);
  EXPECT_THROW(parse_model(R"({"format": "other"})"), ValidationError);
  EXPECT_THROW(load_model("/nonexistent/model.json"), ValidationError);
}

TEST(Persistence, RenormalizesDecimalNoise) {
  const MixtureModel m = parse_model(model_text("[0.3333333333, 0.6666666666]", "[1]"));
  EXPECT_NEAR(m.weights()[0] + m.weights()[1], 1.0, 1e-15);
}
