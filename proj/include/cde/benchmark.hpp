#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cde/evaluation.hpp"
#include "json.hpp"

namespace cde {

inline constexpr int kBenchmarkSchemaVersion = 1;

struct SimulatorSpec {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
};

struct EstimatorSpec {
  std::string name;                                  // registry name
  std::string label;                                 // column value; defaults to name
  nlohmann::json config = nlohmann::json::object();  // overrides of the defaults
};

// Optional input-noise sweep: every neural estimator is expanded into one
// variant per (eta_x, eta_y) pair.
struct NoiseSweep {
  std::vector<double> eta_x;
  std::vector<double> eta_y;
};

struct BenchmarkConfig {
  std::vector<SimulatorSpec> simulators;
  std::vector<EstimatorSpec> estimators;
  std::vector<std::size_t> sample_sizes = {400, 800, 1600, 3200, 6000};
  std::size_t seeds = 5;
  std::uint64_t master_seed = 0;
  std::size_t n_test = 2000;  // held-out draws for log-likelihood and RMSE
  EvalProtocol protocol;
  std::optional<NoiseSweep> noise_sweep;

  void validate() const;
  nlohmann::json to_json() const;
  // Requires "schema_version" equal to kBenchmarkSchemaVersion.
  static BenchmarkConfig from_json(const nlohmann::json& j);
};

// One fully specified benchmark cell.
struct BenchmarkCell {
  SimulatorSpec simulator;
  EstimatorSpec estimator;  // config already includes any sweep overrides
  std::size_t n_samples = 0;
  std::size_t seed_index = 0;
  std::optional<double> eta_x, eta_y;

  // Shared by every estimator at the same (simulator, n, seed index), so
  // estimators are compared on identical draws.
  std::uint64_t data_seed(std::uint64_t master) const;
  std::uint64_t test_seed(std::uint64_t master) const;
  // Fit seed from (master, simulator, estimator label, n, seed index).
  std::uint64_t cell_seed(std::uint64_t master) const;
  // FNV-1a of the canonical JSON of simulator spec, estimator name and config.
  std::string config_hash() const;
};

// Cells in output order: simulator, estimator (sweep variants in grid order),
// sample size, seed index.
std::vector<BenchmarkCell> benchmark_cells(const BenchmarkConfig& config);

struct RunRecord {
  std::string simulator;
  std::string estimator;
  std::size_t n_samples = 0;
  std::size_t seed = 0;  // seed index
  std::uint64_t cell_seed = 0;
  std::optional<double> eta_x, eta_y;
  std::optional<double> hellinger;
  std::optional<double> avg_log_likelihood;  // null when flagged -inf
  std::optional<double> rmse_mean;
  std::optional<double> rmse_std;
  double wall_time_s = 0.0;
  std::string config_hash;
  std::string error;  // empty on success

  bool ok() const { return error.empty(); }
};

RunRecord run_cell(const BenchmarkCell& cell, const BenchmarkConfig& config);

using ProgressCallback = std::function<void(const RunRecord& rec, std::size_t done, std::size_t total)>;

// Runs every cell on `threads` workers; records come back in cell order
// regardless of completion order. A failing cell records its error and the
// run continues.
std::vector<RunRecord> run_benchmark(const BenchmarkConfig& config, std::size_t threads = 1,
                                     const ProgressCallback& progress = {});

// Worker count: CDE_BENCH_THREADS when set and valid, else `requested`, at least 1.
std::size_t benchmark_threads(std::size_t requested);

std::vector<std::string> run_record_header();
std::string run_records_csv(const std::vector<RunRecord>& records);

// Mean and population std of each metric over the successful rows of every
// (simulator, estimator, n_samples) group, in first-appearance order.
struct AggregateRow {
  std::string simulator;
  std::string estimator;
  std::size_t n_samples = 0;
  std::optional<double> eta_x, eta_y;
  std::size_t runs = 0;
  std::size_t failed = 0;
  std::optional<MeanStd> hellinger, avg_log_likelihood, rmse_mean, rmse_std;
};
std::vector<AggregateRow> aggregate_records(const std::vector<RunRecord>& records);
std::vector<std::string> aggregate_header();
std::string aggregate_csv(const std::vector<AggregateRow>& rows);

}  // namespace cde
