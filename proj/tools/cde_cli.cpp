// Command-line front end: simulate, fit, eval, benchmark, density.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cde/benchmark.hpp"
#include "cde/csv.hpp"
#include "cde/errors.hpp"
#include "cde/evaluation.hpp"
#include "cde/registry.hpp"
#include "cde/simulators.hpp"

namespace {

using namespace cde;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("failed writing '" + path + "'");
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

// Inline JSON when the text starts with '{', else a file path.
nlohmann::json parse_json_arg(const std::string& text, const char* what) {
  if (text.empty()) return nlohmann::json::object();
  const auto first = text.find_first_not_of(" \t\r\n");
  const bool inline_json = first != std::string::npos && text[first] == '{';
  try {
    return nlohmann::json::parse(inline_json ? text : read_file(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

std::shared_ptr<const Simulator> simulator_from_args(const std::string& name, const std::string& params) {
  return make_simulator(name, parse_json_arg(params, "--params"));
}

// First or last part of a chronological split.
Dataset split(const Dataset& data, double train_fraction, bool train_part) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("--train-fraction must be in (0, 1)");
  const auto cut = static_cast<std::size_t>(train_fraction * static_cast<double>(data.size()));
  if (cut == 0 || cut >= data.size()) throw ConfigError("chronological split leaves an empty part");
  return train_part ? data.slice(0, cut) : data.slice(cut, data.size());
}

std::unique_ptr<Estimator> load_model_file(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("model file '" + path + "' is not valid JSON: " + e.what());
  }
  return load_estimator(j);
}

std::vector<double> parse_list(const std::string& text, char sep) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse number '" + item + "'");
    }
  }
  return out;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string sim, params, out;
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateArgs& a) {
  const auto sim = simulator_from_args(a.sim, a.params);
  const auto data = sim->sample(a.n, a.seed);
  write_dataset_csv_file(a.out, data);
  std::cout << "wrote " << data.size() << " rows to " << a.out << "\n";
  return 0;
}

// --------------------------------------------------------------------- fit

struct FitArgs {
  std::string estimator, data, config, model_out, sim, params;
  std::size_t y_dim = 1;
  std::optional<std::uint64_t> seed;
  bool chrono_split = false;
  double train_fraction = 0.8;
};

int cmd_fit(const FitArgs& a) {
  FitOptions opt;
  opt.seed = a.seed;
  if (!a.sim.empty()) opt.simulator = simulator_from_args(a.sim, a.params);
  opt.on_epoch = [](std::size_t epoch, double loss) {
    if ((epoch + 1) % 100 == 0) std::cerr << "epoch " << (epoch + 1) << " loss " << format_double(loss) << "\n";
  };
  Dataset data;
  if (!a.data.empty()) {
    data = read_dataset_csv_file(a.data, a.y_dim);
    if (a.chrono_split) data = split(data, a.train_fraction, true);
  } else if (a.estimator != "oracle") {
    throw ConfigError("--data is required for estimator '" + a.estimator + "'");
  } else if (opt.simulator) {
    data = opt.simulator->sample(2, 0);  // the oracle ignores its data
  }
  const auto est = fit_estimator(a.estimator, parse_json_arg(a.config, "--config"), data, opt);
  write_file(a.model_out, est->to_json().dump() + "\n");
  std::cerr << "saved " << est->kind() << " model to " << a.model_out << "\n";
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string model, data, sim, params, protocol, out;
  std::size_t y_dim = 1;
  std::size_t n_test = 10000;
  std::uint64_t seed = 0;
  bool chrono_split = false;
  double train_fraction = 0.8;
};

void check_dims(const Estimator& est, std::size_t x_dim, std::size_t y_dim, const std::string& what) {
  if (est.x_dim() != x_dim || est.y_dim() != y_dim) {
    throw ShapeError("model expects x_dim=" + std::to_string(est.x_dim()) + ", y_dim=" + std::to_string(est.y_dim()) +
                     " but " + what + " has x_dim=" + std::to_string(x_dim) + ", y_dim=" + std::to_string(y_dim));
  }
}

int cmd_eval(const EvalArgs& a) {
  if (a.data.empty() == a.sim.empty()) throw ConfigError("eval needs exactly one of --data or --sim");
  const auto est = load_model_file(a.model);
  nlohmann::json out;
  if (!a.data.empty()) {
    auto data = read_dataset_csv_file(a.data, a.y_dim);
    if (a.chrono_split) data = split(data, a.train_fraction, false);
    check_dims(*est, data.x_dim(), data.y_dim(), "the data");
    const auto m = evaluate(*est, data);
    out["avg_log_likelihood"] = m.log_likelihood_flagged ? nlohmann::json(nullptr) : nlohmann::json(m.avg_log_likelihood);
    out["rmse_mean"] = m.rmse_mean;
    out["rmse_std"] = m.rmse_std;
  } else {
    const auto sim = simulator_from_args(a.sim, a.params);
    check_dims(*est, sim->x_dim(), sim->y_dim(), "simulator '" + a.sim + "'");
    const auto protocol = a.protocol.empty() ? EvalProtocol{} : EvalProtocol::from_json(parse_json_arg(a.protocol, "--protocol"));
    const auto test = sim->sample(a.n_test, a.seed);
    const auto m = evaluate(*est, test, sim.get(), protocol);
    out["avg_log_likelihood"] = m.log_likelihood_flagged ? nlohmann::json(nullptr) : nlohmann::json(m.avg_log_likelihood);
    out["rmse_mean"] = m.rmse_mean;
    out["rmse_std"] = m.rmse_std;
    out["hellinger"] = *m.hellinger;
  }
  write_output(a.out, out.dump(2) + "\n");
  return 0;
}

// --------------------------------------------------------------- benchmark

struct BenchmarkArgs {
  std::string config, out, aggregate_out;
  std::size_t parallel = 1;
};

std::string default_aggregate_path(const std::string& out) {
  const auto dot = out.rfind('.');
  const auto slash = out.find_last_of('/');
  const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
  return (has_ext ? out.substr(0, dot) : out) + "_aggregate.csv";
}

int cmd_benchmark(const BenchmarkArgs& a) {
  const auto config = BenchmarkConfig::from_json(parse_json_arg(a.config, "--config"));
  const std::size_t threads = benchmark_threads(a.parallel);
  std::cerr << "running " << benchmark_cells(config).size() << " cells on " << threads << " thread(s)\n";
  const auto records = run_benchmark(config, threads, [](const RunRecord& r, std::size_t done, std::size_t total) {
    std::cerr << "[" << done << "/" << total << "] " << r.simulator << " " << r.estimator << " n=" << r.n_samples
              << " seed=" << r.seed;
    if (r.ok()) {
      std::cerr << " hellinger=" << (r.hellinger ? format_double(*r.hellinger) : "-");
    } else {
      std::cerr << " FAILED: " << r.error;
    }
    std::cerr << " (" << format_double(std::round(r.wall_time_s * 100) / 100) << " s)\n";
  });
  write_file(a.out, run_records_csv(records));
  const auto agg_path = a.aggregate_out.empty() ? default_aggregate_path(a.out) : a.aggregate_out;
  write_file(agg_path, aggregate_csv(aggregate_records(records)));
  std::size_t ok = 0;
  for (const auto& r : records) ok += r.ok() ? 1 : 0;
  std::cerr << ok << " of " << records.size() << " cells succeeded; wrote " << a.out << " and " << agg_path << "\n";
  return ok > 0 ? 0 : kExitRuntime;
}

// ----------------------------------------------------------------- density

struct DensityArgs {
  std::string model, x, grid, out;
};

int cmd_density(const DensityArgs& a) {
  const auto est = load_model_file(a.model);
  if (est->y_dim() != 1) throw ConfigError("density export needs a scalar-y model");

  const auto parts = parse_list(a.grid, ':');
  if (parts.size() != 3) throw ConfigError("--grid must be lo:hi:n");
  const double lo = parts[0], hi = parts[1];
  if (!(parts[2] >= 2.0) || parts[2] != std::floor(parts[2])) throw ConfigError("--grid needs an integer n >= 2");
  if (!(hi > lo)) throw ConfigError("--grid needs lo < hi");
  const auto n = static_cast<std::size_t>(parts[2]);

  std::vector<std::vector<double>> xs;
  if (est->x_dim() == 1) {
    for (double v : parse_list(a.x, ',')) xs.push_back({v});
  } else {
    std::stringstream ss(a.x);
    std::string point;
    while (std::getline(ss, point, ';')) xs.push_back(parse_list(point, ','));
  }
  if (xs.empty()) throw ConfigError("--x needs at least one value");
  for (const auto& x : xs) {
    if (x.size() != est->x_dim()) throw ShapeError("--x point has the wrong dimension for this model");
  }

  std::vector<std::string> header;
  for (std::size_t d = 0; d < est->x_dim(); ++d) header.push_back("x_" + std::to_string(d));
  header.push_back("y");
  header.push_back("pdf");
  std::string text = csv_row(header);
  for (const auto& x : xs) {
    const auto g = est->mixture(x);
    for (std::size_t i = 0; i < n; ++i) {
      const double y = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
      const double p = g ? g->pdf(y) : est->pdf(x, std::span<const double>(&y, 1));
      std::vector<std::string> row;
      for (double v : x) row.push_back(format_double(v));
      row.push_back(format_double(y));
      row.push_back(format_double(p));
      text += csv_row(row);
    }
  }
  write_output(a.out, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional density estimation: simulators, estimators and benchmarks"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Draw a dataset from a simulator and write it as CSV");
  sim_cmd->add_option("--sim", sim_args.sim, "Simulator name")->required();
  sim_cmd->add_option("--params", sim_args.params, "Simulator parameters: inline JSON or a JSON file");
  sim_cmd->add_option("--params-file", sim_args.params, "Simulator parameters JSON file");
  sim_cmd->add_option("--n", sim_args.n, "Number of rows")->required()->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim_args.seed, "Random seed");
  sim_cmd->add_option("--out", sim_args.out, "Output CSV path")->required();

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit an estimator and save it as JSON");
  fit_cmd->add_option("--estimator", fit_args.estimator, "Estimator name")->required();
  fit_cmd->add_option("--data", fit_args.data, "Training CSV");
  fit_cmd->add_option("--config", fit_args.config, "Estimator config: inline JSON or a JSON file");
  fit_cmd->add_option("--seed", fit_args.seed, "Overrides the config seed");
  fit_cmd->add_option("--y-dim", fit_args.y_dim, "Target columns when the header has no x_/y_ names");
  fit_cmd->add_option("--sim", fit_args.sim, "Simulator, for the oracle estimator");
  fit_cmd->add_option("--params", fit_args.params, "Simulator parameters for --sim");
  fit_cmd->add_flag("--chronological-split", fit_args.chrono_split, "Train on the first rows only");
  fit_cmd->add_option("--train-fraction", fit_args.train_fraction, "Training share for the split (default 0.8)");
  fit_cmd->add_option("--model-out", fit_args.model_out, "Output model JSON")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved model on a CSV or a simulator");
  eval_cmd->add_option("--model", eval_args.model, "Model JSON")->required();
  eval_cmd->add_option("--data", eval_args.data, "Evaluation CSV");
  eval_cmd->add_option("--y-dim", eval_args.y_dim, "Target columns when the header has no x_/y_ names");
  eval_cmd->add_flag("--chronological-split", eval_args.chrono_split, "Evaluate on the last rows only");
  eval_cmd->add_option("--train-fraction", eval_args.train_fraction, "Training share for the split (default 0.8)");
  eval_cmd->add_option("--sim", eval_args.sim, "Simulator to evaluate against");
  eval_cmd->add_option("--params", eval_args.params, "Simulator parameters for --sim");
  eval_cmd->add_option("--protocol", eval_args.protocol, "Evaluation protocol JSON");
  eval_cmd->add_option("--n-test", eval_args.n_test, "Held-out draws in simulator mode")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", eval_args.seed, "Seed of the held-out draws");
  eval_cmd->add_option("--out", eval_args.out, "Output metrics JSON (default stdout)");

  BenchmarkArgs bench_args;
  auto* bench_cmd = app.add_subcommand("benchmark", "Run a simulator x estimator x size x seed grid");
  bench_cmd->add_option("--config", bench_args.config, "Benchmark config JSON")->required();
  bench_cmd->add_option("--out", bench_args.out, "Per-run CSV")->required();
  bench_cmd->add_option("--aggregate-out", bench_args.aggregate_out, "Aggregate CSV (default <out>_aggregate.csv)");
  bench_cmd->add_option("--parallel", bench_args.parallel, "Worker threads (CDE_BENCH_THREADS overrides)")
      ->check(CLI::PositiveNumber);

  DensityArgs dens_args;
  auto* dens_cmd = app.add_subcommand("density", "Export p(y | x) on a y grid as CSV");
  dens_cmd->add_option("--model", dens_args.model, "Model JSON")->required();
  dens_cmd->add_option("--x", dens_args.x, "x values, comma separated; ';' between points for vector x")->required();
  dens_cmd->add_option("--grid", dens_args.grid, "y grid lo:hi:n")->required();
  dens_cmd->add_option("--out", dens_args.out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*sim_cmd) return cmd_simulate(sim_args);
    if (*fit_cmd) return cmd_fit(fit_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*bench_cmd) return cmd_benchmark(bench_args);
    if (*dens_cmd) return cmd_density(dens_args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
