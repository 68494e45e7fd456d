#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cde/benchmark.hpp"
#include "cde/csv.hpp"
#include "cde/evaluation.hpp"
#include "cde/registry.hpp"

namespace cde {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cde_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  Result run(const std::string& args) const {
    const std::string err_path = path("stderr.txt");
    const std::string cmd = std::string(CDE_CLI_PATH) + " " + args + " 2> '" + err_path + "'";
    Result r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err_path);
    return r;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream out(path(name), std::ios::binary);
    out << text;
  }

  fs::path dir_;
};

CsvTable table_of(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

// strtod, unlike stod, accepts subnormals.
double num(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

std::size_t column_index(const CsvTable& t, const std::string& name) {
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i] == name) return i;
  }
  ADD_FAILURE() << "missing column " << name;
  return 0;
}

// -------------------------------------------------------------- simulate

TEST_F(Cli, SimulateIsDeterministic) {
  ASSERT_EQ(run("simulate --sim econ --n 100 --seed 0 --out " + path("a.csv")).code, 0);
  ASSERT_EQ(run("simulate --sim econ --n 100 --seed 0 --out " + path("b.csv")).code, 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  ASSERT_EQ(run("simulate --sim econ --n 100 --seed 1 --out " + path("c.csv")).code, 0);
  EXPECT_NE(slurp(path("a.csv")), slurp(path("c.csv")));
}

TEST_F(Cli, SimulateSchema) {
  const auto r = run("simulate --sim arma_jump --n 1000 --seed 3 --out " + path("a.csv"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("1000"), std::string::npos);
  const auto t = table_of(slurp(path("a.csv")));
  EXPECT_EQ(t.header, (std::vector<std::string>{"x_0", "y_0"}));
  EXPECT_EQ(t.rows.size(), 1000u);
}

TEST_F(Cli, UnknownSimulatorIsUsageError) {
  const auto r = run("simulate --sim foo --n 10 --out " + path("a.csv"));
  EXPECT_EQ(r.code, 2);
  for (const char* name : {"econ", "arma_jump", "skew_normal", "gmm"}) {
    EXPECT_NE(r.err.find(name), std::string::npos) << r.err;
  }
}

TEST_F(Cli, MissingArgumentsAreUsageErrors) {
  EXPECT_EQ(run("simulate --sim econ").code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("teleport").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

// ------------------------------------------------------------------- fit

TEST_F(Cli, FitMdnLogsAndRoundTripsThroughEval) {
  ASSERT_EQ(run("simulate --sim econ --n 200 --seed 0 --out " + path("d.csv")).code, 0);
  const std::string fit = "fit --estimator mdn --config '{\"epochs\": 200}' --seed 4 --data " + path("d.csv");
  const auto r = run(fit + " --model-out " + path("m1.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("epoch 100 loss"), std::string::npos);
  EXPECT_NE(r.err.find("epoch 200 loss"), std::string::npos);
  ASSERT_EQ(run(fit + " --model-out " + path("m2.json")).code, 0);
  EXPECT_EQ(slurp(path("m1.json")), slurp(path("m2.json")));

  const auto e1 = run("eval --model " + path("m1.json") + " --data " + path("d.csv"));
  const auto e2 = run("eval --model " + path("m1.json") + " --data " + path("d.csv"));
  ASSERT_EQ(e1.code, 0) << e1.err;
  EXPECT_EQ(e1.out, e2.out);
  const auto j = nlohmann::json::parse(e1.out);
  EXPECT_EQ(j.size(), 3u);
  for (const char* k : {"avg_log_likelihood", "rmse_mean", "rmse_std"}) EXPECT_TRUE(j.contains(k));
}

TEST_F(Cli, FitCkdeWithCrossValidation) {
  ASSERT_EQ(run("simulate --sim arma_jump --n 150 --seed 1 --out " + path("d.csv")).code, 0);
  const auto r = run("fit --estimator ckde --config '{\"mode\":\"loo-cv\"}' --data " + path("d.csv") +
                     " --model-out " + path("m.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(path("m.json")));
  EXPECT_EQ(j["mode"], "loo-cv");
  EXPECT_GT(j["bandwidth_x"][0].get<double>(), 0.0);
  EXPECT_GT(j["bandwidth_y"][0].get<double>(), 0.0);
}

TEST_F(Cli, FitChronologicalSplitUsesLeadingRows) {
  ASSERT_EQ(run("simulate --sim econ --n 100 --seed 2 --out " + path("d.csv")).code, 0);
  ASSERT_EQ(run("fit --estimator ckde --chronological-split --data " + path("d.csv") + " --model-out " + path("m.json"))
                .code,
            0);
  const auto j = nlohmann::json::parse(slurp(path("m.json")));
  EXPECT_EQ(j["data"]["x"].size(), 80u);
  const auto e = run("eval --model " + path("m.json") + " --chronological-split --data " + path("d.csv"));
  EXPECT_EQ(e.code, 0) << e.err;
}

TEST_F(Cli, MalformedCsvNamesTheLine) {
  write("bad.csv", "x_0,y_0\n0.1,0.2\n0.3,abc\n");
  const auto r = run("fit --estimator ckde --data " + path("bad.csv") + " --model-out " + path("m.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST_F(Cli, BadConfigIsUsageError) {
  ASSERT_EQ(run("simulate --sim econ --n 50 --out " + path("d.csv")).code, 0);
  EXPECT_EQ(run("fit --estimator mdn --config '{\"epochz\": 3}' --data " + path("d.csv") + " --model-out " +
                path("m.json"))
                .code,
            2);
  EXPECT_EQ(run("fit --estimator gp --data " + path("d.csv") + " --model-out " + path("m.json")).code, 2);
}

// ------------------------------------------------------------------ eval

TEST_F(Cli, OracleSelfEvaluation) {
  ASSERT_EQ(run("fit --estimator oracle --sim skew_normal --model-out " + path("o.json")).code, 0);
  const auto r = run("eval --model " + path("o.json") + " --sim skew_normal --n-test 500 --out " + path("m.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(path("m.json")));
  EXPECT_EQ(j.size(), 4u);
  EXPECT_LT(j["hellinger"].get<double>(), 1e-6);
}

TEST_F(Cli, EvalDimensionMismatchIsUsageError) {
  ASSERT_EQ(run("simulate --sim econ --n 60 --out " + path("d.csv")).code, 0);
  ASSERT_EQ(run("fit --estimator nkde --data " + path("d.csv") + " --model-out " + path("m.json")).code, 0);
  write("wide.csv", "x_0,x_1,y_0\n1,2,3\n4,5,6\n");
  EXPECT_EQ(run("eval --model " + path("m.json") + " --data " + path("wide.csv")).code, 2);
  const auto r = run("eval --model " + path("m.json") +
                     " --sim gmm --params '{\"n_components\": 2, \"x_dim\": 2, \"y_dim\": 1, \"param_seed\": 0}'");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("x_dim=2"), std::string::npos) << r.err;
}

// --------------------------------------------------------------- density

TEST_F(Cli, DensityExport) {
  ASSERT_EQ(run("simulate --sim skew_normal --n 200 --seed 5 --out " + path("d.csv")).code, 0);
  ASSERT_EQ(run("fit --estimator ckde --data " + path("d.csv") + " --model-out " + path("m.json")).code, 0);
  const auto r = run("density --model " + path("m.json") + " --x=-0.3,0.4 --grid=-0.5:0.5:4001 --out " + path("p.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = table_of(slurp(path("p.csv")));
  EXPECT_EQ(t.header, (std::vector<std::string>{"x_0", "y", "pdf"}));
  ASSERT_EQ(t.rows.size(), 8002u);

  const auto model = load_estimator(nlohmann::json::parse(slurp(path("m.json"))));
  std::map<std::string, std::vector<std::pair<double, double>>> curves;
  for (const auto& row : t.rows) curves[row[0]].emplace_back(num(row[1]), num(row[2]));
  ASSERT_EQ(curves.size(), 2u);
  for (const auto& [xs, pts] : curves) {
    EXPECT_EQ(pts.size(), 4001u);
    double trap = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      trap += 0.5 * (pts[i].second + pts[i - 1].second) * (pts[i].first - pts[i - 1].first);
    }
    EXPECT_NEAR(trap, 1.0, 1e-3) << "x = " << xs;
    const double x = num(xs);
    for (std::size_t i = 0; i < pts.size(); i += 200) {
      const double y = pts[i].first;
      const double direct = model->pdf(std::span<const double>(&x, 1), std::span<const double>(&y, 1));
      EXPECT_NEAR(pts[i].second, direct, 1e-15 * std::max(1.0, direct));
    }
  }
  EXPECT_EQ(run("density --model " + path("m.json") + " --x 0 --grid 0:1:1").code, 2);
}

// ------------------------------------------------------------- benchmark

std::string small_benchmark(const std::string& extra = "") {
  return R"({"schema_version": 1, "master_seed": 7,
             "simulators": ["econ"],
             "estimators": [{"name": "ckde"}, {"name": "lscde"}],
             "sample_sizes": [60, 120], "seeds": 2, "n_test": 200,
             "protocol": {"n_x_points": 3, "quadrature_points": 400})" +
         extra + "}";
}

// Rows with the wall-time column blanked.
std::vector<std::vector<std::string>> stable_rows(const CsvTable& t) {
  const auto wt = column_index(t, "wall_time_s");
  auto rows = t.rows;
  for (auto& r : rows) r[wt] = "";
  return rows;
}

TEST_F(Cli, BenchmarkCardinalityAndHeaders) {
  write("cfg.json", small_benchmark());
  const auto r = run("benchmark --config " + path("cfg.json") + " --out " + path("runs.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto runs = table_of(slurp(path("runs.csv")));
  EXPECT_EQ(runs.header, (std::vector<std::string>{"simulator", "estimator", "n_samples", "seed", "cell_seed", "eta_x",
                                                   "eta_y", "hellinger", "avg_log_likelihood", "rmse_mean",
                                                   "rmse_std", "wall_time_s", "config_hash", "error"}));
  EXPECT_EQ(runs.rows.size(), 8u);
  const auto agg = table_of(slurp(path("runs_aggregate.csv")));
  EXPECT_EQ(agg.header,
            (std::vector<std::string>{"simulator", "estimator", "n_samples", "eta_x", "eta_y", "runs", "failed",
                                      "hellinger_mean", "hellinger_std", "avg_log_likelihood_mean",
                                      "avg_log_likelihood_std", "rmse_mean_mean", "rmse_mean_std", "rmse_std_mean",
                                      "rmse_std_std"}));
  EXPECT_EQ(agg.rows.size(), 4u);

  // Aggregates are recomputable from the member rows.
  const auto h = column_index(runs, "hellinger");
  for (const auto& a : agg.rows) {
    std::vector<double> vals;
    for (const auto& row : runs.rows) {
      if (row[0] == a[0] && row[1] == a[1] && row[2] == a[2]) vals.push_back(num(row[h]));
    }
    ASSERT_EQ(vals.size(), 2u);
    const auto ms = mean_std(vals);
    EXPECT_EQ(num(a[7]), ms.mean);
    EXPECT_EQ(num(a[8]), ms.std);
  }
}

TEST_F(Cli, BenchmarkIsDeterministicUnderParallelism) {
  write("cfg.json", small_benchmark());
  ASSERT_EQ(run("benchmark --config " + path("cfg.json") + " --parallel 1 --out " + path("a.csv")).code, 0);
  ASSERT_EQ(run("benchmark --config " + path("cfg.json") + " --parallel 4 --out " + path("b.csv")).code, 0);
  EXPECT_EQ(stable_rows(table_of(slurp(path("a.csv")))), stable_rows(table_of(slurp(path("b.csv")))));
  EXPECT_EQ(slurp(path("a_aggregate.csv")), slurp(path("b_aggregate.csv")));
}

TEST_F(Cli, BenchmarkThreadsFromEnvironment) {
  write("cfg.json", small_benchmark());
  const auto r = run("benchmark --config " + path("cfg.json") + " --out " + path("a.csv"));
  EXPECT_NE(r.err.find("on 1 thread"), std::string::npos);
  ::setenv("CDE_BENCH_THREADS", "3", 1);
  const auto r3 = run("benchmark --config " + path("cfg.json") + " --parallel 1 --out " + path("b.csv"));
  ::unsetenv("CDE_BENCH_THREADS");
  EXPECT_NE(r3.err.find("on 3 thread"), std::string::npos) << r3.err;
}

TEST_F(Cli, BenchmarkRecordsFailuresAndContinues) {
  write("mixed.json", R"({"schema_version": 1, "simulators": ["econ"],
      "estimators": ["ckde", {"name": "nkde", "label": "tiny", "config": {"epsilon": 1e-9}}],
      "sample_sizes": [60], "seeds": 1, "n_test": 50, "protocol": {"n_x_points": 2, "quadrature_points": 200}})");
  const auto r = run("benchmark --config " + path("mixed.json") + " --out " + path("m.csv"));
  EXPECT_EQ(r.code, 0) << r.err;
  const auto t = table_of(slurp(path("m.csv")));
  ASSERT_EQ(t.rows.size(), 2u);
  const auto e = column_index(t, "error");
  EXPECT_EQ(t.rows[0][e], "");
  EXPECT_NE(t.rows[1][e].find("no training points"), std::string::npos);

  write("fail.json", R"({"schema_version": 1, "simulators": ["econ"],
      "estimators": [{"name": "nkde", "config": {"epsilon": 1e-9}}],
      "sample_sizes": [60], "seeds": 1, "n_test": 50})");
  EXPECT_EQ(run("benchmark --config " + path("fail.json") + " --out " + path("f.csv")).code, 1);
}

TEST_F(Cli, BenchmarkConfigValidation) {
  write("nover.json", R"({"simulators": ["econ"], "estimators": ["ckde"]})");
  EXPECT_EQ(run("benchmark --config " + path("nover.json") + " --out " + path("x.csv")).code, 2);
  write("small.json", R"({"schema_version": 1, "simulators": ["econ"], "estimators": ["ckde"], "sample_sizes": [10]})");
  EXPECT_EQ(run("benchmark --config " + path("small.json") + " --out " + path("x.csv")).code, 2);
  write("noest.json", R"({"schema_version": 1, "simulators": ["econ"], "estimators": []})");
  EXPECT_EQ(run("benchmark --config " + path("noest.json") + " --out " + path("x.csv")).code, 2);
}

TEST_F(Cli, NoiseSweepExpandsNeuralEstimators) {
  write("sweep.json", R"({"schema_version": 1, "simulators": ["arma_jump"],
      "estimators": [{"name": "mdn", "config": {"epochs": 2, "n_components": 3}}, "ckde"],
      "sample_sizes": [60], "seeds": 1, "n_test": 50,
      "protocol": {"n_x_points": 2, "quadrature_points": 200},
      "noise_sweep": {"eta_x": [0, 0.1], "eta_y": [0, 0.2]}})");
  const auto r = run("benchmark --config " + path("sweep.json") + " --out " + path("s.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = table_of(slurp(path("s.csv")));
  ASSERT_EQ(t.rows.size(), 5u);
  const auto ex = column_index(t, "eta_x"), ey = column_index(t, "eta_y");
  EXPECT_EQ(t.rows[1][1], "mdn[eta_x=0,eta_y=0.2]");
  EXPECT_EQ(t.rows[1][ex], "0");
  EXPECT_EQ(t.rows[1][ey], "0.2");
  EXPECT_EQ(t.rows[4][1], "ckde");
  EXPECT_EQ(t.rows[4][ex], "");
  // Cells at the same (simulator, n, seed) share data but not fit seeds.
  EXPECT_NE(t.rows[0][column_index(t, "cell_seed")], t.rows[1][column_index(t, "cell_seed")]);
}

TEST(BenchmarkCells, SeedsAreStableAndKeyed) {
  BenchmarkCell a{{"econ"}, {"mdn", "mdn"}, 400, 0, std::nullopt, std::nullopt};
  BenchmarkCell b = a;
  b.estimator.label = "kmn";
  b.estimator.name = "kmn";
  EXPECT_EQ(a.cell_seed(0), BenchmarkCell(a).cell_seed(0));
  EXPECT_NE(a.cell_seed(0), b.cell_seed(0));
  EXPECT_NE(a.cell_seed(0), a.cell_seed(1));
  EXPECT_EQ(a.data_seed(0), b.data_seed(0));
  EXPECT_NE(a.config_hash(), b.config_hash());
  EXPECT_EQ(a.config_hash().size(), 16u);
}

}  // namespace
}  // namespace cde
