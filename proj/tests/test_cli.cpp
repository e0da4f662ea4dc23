#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"

namespace fs = std::filesystem;
using logimix::cli::run;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("logimix_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write("ref.json", R"({"format": "logimix-model-v1", "p": 1, "s": 2, "weights": [0.3, 0.7],
      "components": [{"mu": [-2], "sigma": [1]}, {"mu": [2], "sigma": [0.5]}]})");
    write("ref_swapped.json", R"({"format": "logimix-model-v1", "p": 1, "s": 2, "weights": [0.7, 0.3],
      "components": [{"mu": [2], "sigma": [0.5]}, {"mu": [-2], "sigma": [1]}]})");
    write("shared2.json", R"({"format": "logimix-model-v1", "p": 2, "s": 2, "weights": [0.5, 0.5],
      "components": [{"mu": [0, 1], "sigma": [1, 1]}, {"mu": [1, 0], "sigma": [1, 1]}]})");
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
  }

  std::string read(const std::string& name) const {
    std::ifstream in(path(name));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  int call(std::vector<std::string> args) {
    args.insert(args.begin(), "logimix");
    out_.str("");
    err_.str("");
    return run(args, out_, err_);
  }

  fs::path dir_;
  std::ostringstream out_;
  std::ostringstream err_;
};

}  // namespace

TEST_F(CliTest, SampleThenEvalIsReproducible) {
  ASSERT_EQ(call({"sample", "--model", path("ref.json"), "--n", "500", "--seed", "3", "--out", path("a.csv"),
                  "--labels", path("labels.csv")}),
            0);
  ASSERT_EQ(call({"sample", "--model", path("ref.json"), "--n", "500", "--seed", "3", "--out", path("b.csv")}), 0);
  EXPECT_EQ(read("a.csv"), read("b.csv"));
  EXPECT_EQ(logimix::read_csv(path("a.csv")).rows(), 500u);
  EXPECT_EQ(logimix::read_csv(path("labels.csv")).rows(), 500u);

  ASSERT_EQ(call({"eval", "--model", path("ref.json"), "--data", path("a.csv"), "--out", path("e1.json"),
                  "--emit-plot-data", path("plot.csv")}),
            0);
  ASSERT_EQ(call({"eval", "--model", path("ref.json"), "--data", path("a.csv"), "--out", path("e2.json")}), 0);
  EXPECT_EQ(read("e1.json"), read("e2.json"));
  const auto report = nlohmann::json::parse(read("e1.json"));
  EXPECT_TRUE(std::isfinite(report["mean_log_density"].get<double>()));
  EXPECT_EQ(report["log_densities"].size(), 500u);
  const auto plot = logimix::read_csv(path("plot.csv"));
  EXPECT_EQ(plot.rows(), 401u);
  EXPECT_EQ(plot.cols(), 3u);
}

TEST_F(CliTest, FitWritesModelAndReport) {
  ASSERT_EQ(call({"sample", "--model", path("ref.json"), "--n", "3000", "--seed", "1", "--out", path("d.csv")}), 0);
  ASSERT_EQ(call({"fit", "--data", path("d.csv"), "--s", "2", "--seed", "5", "--restarts", "2", "--out",
                  path("fit.json"), "--report", path("report.json")}),
            0)
      << err_.str();
  const auto model = logimix::load_model(path("fit.json"));
  EXPECT_EQ(model.size(), 2u);
  const auto report = nlohmann::json::parse(read("report.json"));
  EXPECT_EQ(report["seed"], 5);
  EXPECT_TRUE(report["converged"].get<bool>());
  EXPECT_EQ(report["loglik_trace"].size(), report["n_iter"].get<std::size_t>() + 1);
}

TEST_F(CliTest, FitReportsNonConvergenceWithExitTwo) {
  ASSERT_EQ(call({"sample", "--model", path("ref.json"), "--n", "500", "--seed", "1", "--out", path("d.csv")}), 0);
  EXPECT_EQ(call({"fit", "--data", path("d.csv"), "--s", "2", "--max-iter", "1", "--restarts", "1", "--out",
                  path("fit.json")}),
            2);
  EXPECT_NE(err_.str().find("did not converge"), std::string::npos);
}

TEST_F(CliTest, CheckIdEqualityOnPermutedCopy) {
  ASSERT_EQ(call({"check-id", "--mode", "equality", "--model", path("ref.json"), "--model2",
                  path("ref_swapped.json"), "--seed", "11"}),
            0);
  const auto report = nlohmann::json::parse(out_.str());
  EXPECT_TRUE(report["equal_distribution"].get<bool>());
  EXPECT_TRUE(report["equal_parameters"].get<bool>());
  EXPECT_EQ(report["permutation"], nlohmann::json({1, 0}));
  EXPECT_EQ(report["seed"], 11);
}

TEST_F(CliTest, CheckIdOtherModes) {
  ASSERT_EQ(call({"check-id", "--mode", "gram", "--model", path("ref.json"), "--out", path("g.json")}), 0);
  const auto gram = nlohmann::json::parse(read("g.json"));
  EXPECT_EQ(gram["numerical_rank"], 2);
  EXPECT_EQ(gram["nodes_per_axis"], 64);

  ASSERT_EQ(call({"check-id", "--mode", "vandermonde", "--mus", "0,0.6931471805599453", "--sigmas", "1,1"}), 0);
  const auto v = nlohmann::json::parse(out_.str());
  EXPECT_TRUE(v["invertible"].get<bool>());
  EXPECT_NEAR(v["determinant"].get<double>(), 2.0, 1e-12);

  ASSERT_EQ(call({"check-id", "--mode", "trial", "--p", "1", "--s", "2", "--trials", "5", "--seed", "2"}), 0);
  const auto t = nlohmann::json::parse(out_.str());
  EXPECT_EQ(t["distinct_passes"], 5);
  EXPECT_EQ(t["seed"], 2);
}

TEST_F(CliTest, CollapseWithAndWithoutOffsets) {
  ASSERT_EQ(call({"collapse", "--model", path("shared2.json"), "--coords", "0,1", "--offsets", "0,0", "--out",
                  path("c.json")}),
            0);
  const auto collapsed = logimix::load_model(path("c.json"));
  EXPECT_EQ(collapsed.dim(), 1u);
  // the documented collision: both merged locations equal log(1 + e)
  EXPECT_EQ(collapsed.component(0).mu(), collapsed.component(1).mu());

  ASSERT_EQ(call({"collapse", "--model", path("shared2.json"), "--coords", "0,1", "--seed", "4", "--out",
                  path("c2.json")}),
            0);
  const auto separated = logimix::load_model(path("c2.json"));
  EXPECT_NE(separated.component(0).mu(), separated.component(1).mu());
}

TEST_F(CliTest, ProbeOpenWritesReport) {
  ASSERT_EQ(call({"probe-open", "--p", "2", "--s", "2", "--trials", "2", "--evals", "20", "--seed", "8", "--out",
                  path("probe.json")}),
            0);
  const auto report = nlohmann::json::parse(read("probe.json"));
  EXPECT_EQ(report["seed"], 8);
  EXPECT_EQ(report["n_trials"], 2);
  EXPECT_EQ(report["witness_pair"].size(), 2u);
}

TEST_F(CliTest, ErrorsMapToExitCodes) {
  EXPECT_EQ(call({}), 1);
  EXPECT_EQ(call({"bogus"}), 1);
  EXPECT_EQ(call({"sample", "--model", path("missing.json"), "--n", "5", "--out", path("x.csv")}), 1);
  write("bad.json", R"({"format": "logimix-model-v1", "p": 1, "s": 2, "weights": [0.5, 0.6],
    "components": [{"mu": [0], "sigma": [1]}, {"mu": [1], "sigma": [1]}]})");
  EXPECT_EQ(call({"sample", "--model", path("bad.json"), "--n", "5", "--out", path("x.csv")}), 1);
  EXPECT_NE(err_.str().find("weights"), std::string::npos);
  write("ragged.csv", "1,2\n3\n");
  EXPECT_EQ(call({"eval", "--model", path("ref.json"), "--data", path("ragged.csv"), "--out", path("e.json")}), 1);
  write("two.csv", "1,2\n3,4\n");
  EXPECT_EQ(call({"eval", "--model", path("ref.json"), "--data", path("two.csv"), "--out", path("e.json")}), 1);
  EXPECT_EQ(call({"check-id", "--mode", "nope"}), 1);
  EXPECT_EQ(call({"collapse", "--model", path("ref.json"), "--coords", "0,1", "--out", path("c.json")}), 1);
  // a coordinate cannot be merged with itself
  EXPECT_EQ(call({"collapse", "--model", path("shared2.json"), "--coords", "0,0", "--out", path("c.json")}), 1);
  EXPECT_EQ(call({"--help"}), 0);
}

TEST_F(CliTest, ShippedReferenceSampleRegenerates) {
  const std::string root = LOGIMIX_SOURCE_DIR;
  ASSERT_EQ(call({"sample", "--model", root + "/data/reference_model.json", "--n", "50000", "--seed", "42", "--out",
                  path("ref.csv")}),
            0);
  std::ifstream shipped(root + "/data/reference_sample.csv");
  const std::string expected{std::istreambuf_iterator<char>(shipped), std::istreambuf_iterator<char>()};
  EXPECT_EQ(read("ref.csv"), expected);
}
