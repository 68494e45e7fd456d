#include "cde/benchmark.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include "cde/csv.hpp"
#include "cde/errors.hpp"
#include "cde/random.hpp"
#include "cde/registry.hpp"
#include "cde/simulators.hpp"
#include "config_json.hpp"

namespace cde {

namespace {

using detail::read_key;
using detail::reject_unknown_keys;

bool is_neural(const std::string& name) { return name == "mdn" || name == "kmn"; }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

SimulatorSpec simulator_spec_from_json(const nlohmann::json& j) {
  SimulatorSpec s;
  if (j.is_string()) {
    s.name = j.get<std::string>();
    return s;
  }
  reject_unknown_keys(j, {"name", "params"}, "benchmark simulator");
  read_key(j, "name", s.name);
  read_key(j, "params", s.params);
  return s;
}

EstimatorSpec estimator_spec_from_json(const nlohmann::json& j) {
  EstimatorSpec e;
  if (j.is_string()) {
    e.name = j.get<std::string>();
  } else {
    reject_unknown_keys(j, {"name", "label", "config"}, "benchmark estimator");
    read_key(j, "name", e.name);
    read_key(j, "label", e.label);
    read_key(j, "config", e.config);
  }
  if (e.label.empty()) e.label = e.name;
  return e;
}

}  // namespace

// ------------------------------------------------------------------ config

void BenchmarkConfig::validate() const {
  if (simulators.empty()) throw ConfigError("benchmark needs at least one simulator");
  if (estimators.empty()) throw ConfigError("benchmark needs at least one estimator");
  if (sample_sizes.empty()) throw ConfigError("benchmark needs at least one sample size");
  for (auto n : sample_sizes) {
    if (n < 50) throw ConfigError("benchmark sample sizes must be >= 50, got " + std::to_string(n));
  }
  if (seeds < 1) throw ConfigError("benchmark needs at least one seed");
  if (n_test < 1) throw ConfigError("benchmark n_test must be >= 1");
  protocol.validate();
  for (const auto& s : simulators) make_simulator(s.name, s.params);
  std::map<std::string, int> labels;
  for (const auto& e : estimators) {
    validate_estimator_config(e.name, e.config);
    if (++labels[e.label] > 1) throw ConfigError("duplicate estimator label '" + e.label + "'");
  }
  if (noise_sweep) {
    if (noise_sweep->eta_x.empty() || noise_sweep->eta_y.empty()) throw ConfigError("noise sweep needs eta values");
    for (const auto* v : {&noise_sweep->eta_x, &noise_sweep->eta_y}) {
      for (double eta : *v) {
        if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("noise sweep values must be finite and >= 0");
      }
    }
  }
}

nlohmann::json BenchmarkConfig::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kBenchmarkSchemaVersion;
  j["master_seed"] = master_seed;
  auto sims = nlohmann::json::array();
  for (const auto& s : simulators) sims.push_back({{"name", s.name}, {"params", s.params}});
  j["simulators"] = sims;
  auto ests = nlohmann::json::array();
  for (const auto& e : estimators) ests.push_back({{"name", e.name}, {"label", e.label}, {"config", e.config}});
  j["estimators"] = ests;
  j["sample_sizes"] = sample_sizes;
  j["seeds"] = seeds;
  j["n_test"] = n_test;
  j["protocol"] = protocol.to_json();
  if (noise_sweep) j["noise_sweep"] = {{"eta_x", noise_sweep->eta_x}, {"eta_y", noise_sweep->eta_y}};
  return j;
}

BenchmarkConfig BenchmarkConfig::from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"schema_version", "master_seed", "simulators", "estimators", "sample_sizes", "seeds", "n_test",
                          "protocol", "noise_sweep"},
                      "benchmark");
  if (!j.contains("schema_version")) throw ConfigError("benchmark config needs a schema_version field");
  int version = 0;
  read_key(j, "schema_version", version);
  if (version != kBenchmarkSchemaVersion) {
    throw ConfigError("unsupported benchmark schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kBenchmarkSchemaVersion) + ")");
  }
  BenchmarkConfig c;
  read_key(j, "master_seed", c.master_seed);
  if (j.contains("simulators")) {
    for (const auto& s : j.at("simulators")) c.simulators.push_back(simulator_spec_from_json(s));
  }
  if (j.contains("estimators")) {
    for (const auto& e : j.at("estimators")) c.estimators.push_back(estimator_spec_from_json(e));
  }
  read_key(j, "sample_sizes", c.sample_sizes);
  read_key(j, "seeds", c.seeds);
  read_key(j, "n_test", c.n_test);
  if (j.contains("protocol")) c.protocol = EvalProtocol::from_json(j.at("protocol"));
  if (j.contains("noise_sweep")) {
    const auto& ns = j.at("noise_sweep");
    reject_unknown_keys(ns, {"eta_x", "eta_y"}, "noise sweep");
    NoiseSweep sweep;
    read_key(ns, "eta_x", sweep.eta_x);
    read_key(ns, "eta_y", sweep.eta_y);
    c.noise_sweep = sweep;
  }
  c.validate();
  return c;
}

// ------------------------------------------------------------------- cells

std::uint64_t BenchmarkCell::data_seed(std::uint64_t master) const {
  return derive_seed(master, "data/" + simulator.name + "/" + std::to_string(n_samples) + "/" +
                                 std::to_string(seed_index));
}

std::uint64_t BenchmarkCell::test_seed(std::uint64_t master) const {
  return derive_seed(master, "test/" + simulator.name + "/" + std::to_string(seed_index));
}

std::uint64_t BenchmarkCell::cell_seed(std::uint64_t master) const {
  return derive_seed(master, "cell/" + simulator.name + "/" + estimator.label + "/" + std::to_string(n_samples) +
                                 "/" + std::to_string(seed_index));
}

std::string BenchmarkCell::config_hash() const {
  const nlohmann::json canon = {{"simulator", simulator.name},
                                {"params", simulator.params},
                                {"estimator", estimator.name},
                                {"config", estimator.config}};
  return hex64(fnv1a(canon.dump()));
}

std::vector<BenchmarkCell> benchmark_cells(const BenchmarkConfig& config) {
  struct Variant {
    EstimatorSpec spec;
    std::optional<double> eta_x, eta_y;
  };
  std::vector<Variant> variants;
  for (const auto& e : config.estimators) {
    if (!config.noise_sweep || !is_neural(e.name)) {
      variants.push_back({e, std::nullopt, std::nullopt});
      continue;
    }
    for (double ex : config.noise_sweep->eta_x) {
      for (double ey : config.noise_sweep->eta_y) {
        Variant v{e, ex, ey};
        v.spec.config["noise_std_x"] = ex;
        v.spec.config["noise_std_y"] = ey;
        v.spec.label = e.label + "[eta_x=" + format_double(ex) + ",eta_y=" + format_double(ey) + "]";
        variants.push_back(std::move(v));
      }
    }
  }
  std::vector<BenchmarkCell> cells;
  for (const auto& s : config.simulators) {
    for (const auto& v : variants) {
      for (auto n : config.sample_sizes) {
        for (std::size_t k = 0; k < config.seeds; ++k) {
          cells.push_back({s, v.spec, n, k, v.eta_x, v.eta_y});
        }
      }
    }
  }
  return cells;
}

RunRecord run_cell(const BenchmarkCell& cell, const BenchmarkConfig& config) {
  RunRecord r;
  r.simulator = cell.simulator.name;
  r.estimator = cell.estimator.label;
  r.n_samples = cell.n_samples;
  r.seed = cell.seed_index;
  r.cell_seed = cell.cell_seed(config.master_seed);
  r.eta_x = cell.eta_x;
  r.eta_y = cell.eta_y;
  r.config_hash = cell.config_hash();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    std::shared_ptr<const Simulator> sim = make_simulator(cell.simulator.name, cell.simulator.params);
    const auto train = sim->sample(cell.n_samples, cell.data_seed(config.master_seed));
    const auto test = sim->sample(config.n_test, cell.test_seed(config.master_seed));
    FitOptions opt;
    opt.seed = r.cell_seed;
    opt.simulator = sim;
    const auto est = fit_estimator(cell.estimator.name, cell.estimator.config, train, opt);
    const auto m = evaluate(*est, test, sim.get(), config.protocol);
    r.hellinger = m.hellinger;
    if (!m.log_likelihood_flagged) r.avg_log_likelihood = m.avg_log_likelihood;
    r.rmse_mean = m.rmse_mean;
    r.rmse_std = m.rmse_std;
  } catch (const std::exception& e) {
    r.error = e.what();
    if (r.error.empty()) r.error = "unknown error";
  }
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::size_t benchmark_threads(std::size_t requested) {
  if (const char* env = std::getenv("CDE_BENCH_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, requested);
}

std::vector<RunRecord> run_benchmark(const BenchmarkConfig& config, std::size_t threads,
                                     const ProgressCallback& progress) {
  config.validate();
  const auto cells = benchmark_cells(config);
  std::vector<RunRecord> out(cells.size());
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex mu;
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      out[i] = run_cell(cells[i], config);
      if (progress) {
        std::lock_guard lock(mu);
        progress(out[i], ++done, cells.size());
      }
    }
  };
  const std::size_t n = std::min(std::max<std::size_t>(1, threads), std::max<std::size_t>(1, cells.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

// --------------------------------------------------------------------- CSV

std::vector<std::string> run_record_header() {
  return {"simulator", "estimator", "n_samples", "seed", "cell_seed", "eta_x", "eta_y", "hellinger",
          "avg_log_likelihood", "rmse_mean", "rmse_std", "wall_time_s", "config_hash", "error"};
}

std::string run_records_csv(const std::vector<RunRecord>& records) {
  std::string out = csv_row(run_record_header());
  for (const auto& r : records) {
    // A successful row with a missing log-likelihood was flagged -inf.
    const std::string ll = r.avg_log_likelihood ? format_double(*r.avg_log_likelihood) : (r.ok() ? "-inf" : "");
    out += csv_row({r.simulator, r.estimator, std::to_string(r.n_samples), std::to_string(r.seed),
                    std::to_string(r.cell_seed), opt_field(r.eta_x), opt_field(r.eta_y), opt_field(r.hellinger), ll,
                    opt_field(r.rmse_mean), opt_field(r.rmse_std), format_double(r.wall_time_s), r.config_hash,
                    r.error});
  }
  return out;
}

std::vector<AggregateRow> aggregate_records(const std::vector<RunRecord>& records) {
  std::vector<AggregateRow> rows;
  std::map<std::tuple<std::string, std::string, std::size_t>, std::size_t> index;
  std::vector<std::array<std::vector<double>, 4>> values;
  for (const auto& r : records) {
    const auto key = std::make_tuple(r.simulator, r.estimator, r.n_samples);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, rows.size()).first;
      AggregateRow a;
      a.simulator = r.simulator;
      a.estimator = r.estimator;
      a.n_samples = r.n_samples;
      a.eta_x = r.eta_x;
      a.eta_y = r.eta_y;
      rows.push_back(a);
      values.emplace_back();
    }
    auto& a = rows[it->second];
    auto& v = values[it->second];
    ++a.runs;
    if (!r.ok()) {
      ++a.failed;
      continue;
    }
    if (r.hellinger) v[0].push_back(*r.hellinger);
    v[1].push_back(r.avg_log_likelihood ? *r.avg_log_likelihood : -std::numeric_limits<double>::infinity());
    if (r.rmse_mean) v[2].push_back(*r.rmse_mean);
    if (r.rmse_std) v[3].push_back(*r.rmse_std);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& v = values[i];
    if (!v[0].empty()) rows[i].hellinger = mean_std(v[0]);
    if (!v[1].empty()) rows[i].avg_log_likelihood = mean_std(v[1]);
    if (!v[2].empty()) rows[i].rmse_mean = mean_std(v[2]);
    if (!v[3].empty()) rows[i].rmse_std = mean_std(v[3]);
  }
  return rows;
}

std::vector<std::string> aggregate_header() {
  return {"simulator",
          "estimator",
          "n_samples",
          "eta_x",
          "eta_y",
          "runs",
          "failed",
          "hellinger_mean",
          "hellinger_std",
          "avg_log_likelihood_mean",
          "avg_log_likelihood_std",
          "rmse_mean_mean",
          "rmse_mean_std",
          "rmse_std_mean",
          "rmse_std_std"};
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = csv_row(aggregate_header());
  const auto pair = [](const std::optional<MeanStd>& m, std::vector<std::string>& f) {
    f.push_back(m ? format_double(m->mean) : "");
    f.push_back(m ? format_double(m->std) : "");
  };
  for (const auto& a : rows) {
    std::vector<std::string> f = {a.simulator, a.estimator, std::to_string(a.n_samples), opt_field(a.eta_x),
                                  opt_field(a.eta_y), std::to_string(a.runs), std::to_string(a.failed)};
    pair(a.hellinger, f);
    pair(a.avg_log_likelihood, f);
    pair(a.rmse_mean, f);
    pair(a.rmse_std, f);
    out += csv_row(f);
  }
  return out;
}

}  // namespace cde
