#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cde/dataset.hpp"
#include "cde/estimator.hpp"
#include "cde/quadrature.hpp"
#include "cde/simulators.hpp"
#include "json.hpp"

namespace cde {

using Density1d = std::function<double(double)>;

// sqrt(max(0, 1 - integral of sqrt(p q))) by Gauss-Legendre on `support`,
// clipped to [0, 1]. A negative density value raises DomainError.
double hellinger_1d(const Density1d& p, const Density1d& q, Interval support, std::size_t n_points = 10000);

struct EvalProtocol {
  std::size_t n_x_points = 10;
  double lo_percentile = 0.1;
  double hi_percentile = 0.9;
  std::size_t quadrature_points = 10000;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};

  void validate() const;
  nlohmann::json to_json() const;
  static EvalProtocol from_json(const nlohmann::json& j);
};

// Evenly spaced x values between the protocol's percentiles of p(x). For
// multivariate x each axis gets its own percentile range.
std::vector<std::vector<double>> evaluation_grid(const Simulator& sim, const EvalProtocol& protocol);

// Hellinger distance between est(. | x) and sim(. | x) at each grid point,
// integrating over the union of both supports.
std::vector<double> conditional_hellinger_values(const ConditionalDensity& est, const Simulator& sim,
                                                 const EvalProtocol& protocol);
double conditional_hellinger(const ConditionalDensity& est, const Simulator& sim, const EvalProtocol& protocol);

// Mean log p(y | x) over the rows; -inf when any row has zero density.
double avg_log_likelihood(const ConditionalDensity& est, const Dataset& data);

// Predictive mean and standard deviation of a scalar-y conditional: closed
// form for mixtures, quadrature otherwise.
std::pair<double, double> predictive_mean_std(const ConditionalDensity& est, std::span<const double> x,
                                              std::size_t n_points = 10000);

struct RmseReport {
  double rmse_mean = 0.0;
  double rmse_std = 0.0;
};

// sqrt(mean((y - mu(x))^2)) and sqrt(mean((|y - mu(x)| - sigma(x))^2)); y must be scalar.
RmseReport rmse_metrics(const ConditionalDensity& est, const Dataset& data);
double rmse_mean(const ConditionalDensity& est, const Dataset& data);
double rmse_std(const ConditionalDensity& est, const Dataset& data);

// One evaluation of one fitted model.
struct Metrics {
  double avg_log_likelihood = 0.0;
  double rmse_mean = 0.0;
  double rmse_std = 0.0;
  std::optional<double> hellinger;
  // Set when avg_log_likelihood is -inf (some point got zero density).
  bool log_likelihood_flagged = false;

  nlohmann::json to_json() const;
};

Metrics evaluate(const ConditionalDensity& est, const Dataset& data, const Simulator* sim = nullptr,
                 const EvalProtocol& protocol = {});

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation across seeds
};
MeanStd mean_std(std::span<const double> values);

// Per-seed metrics plus their across-seed summaries.
struct MetricsReport {
  std::vector<std::uint64_t> seeds;
  std::vector<Metrics> per_seed;

  MeanStd avg_log_likelihood() const;
  MeanStd rmse_mean() const;
  MeanStd rmse_std() const;
  std::optional<MeanStd> hellinger() const;

  nlohmann::json to_json() const;
  // Header plus one row per seed.
  std::string to_csv() const;
};

struct NelderMeadOptions {
  std::size_t max_iterations = 500;
  // Stop once the simplex value spread is below f_tol and its largest vertex
  // offset from the best vertex is below x_tol.
  double f_tol = 1e-8;
  double x_tol = 1e-6;
  // Absolute initial simplex edge; when unset, 5% of each coordinate (0.00025
  // for zero coordinates).
  std::optional<double> initial_step;
};

struct NelderMeadResult {
  std::vector<double> argmin;
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Reflection 1, expansion 2, contraction 0.5, shrink 0.5. Non-finite values
// during the search count as +inf; a non-finite start raises ConfigError.
NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& objective,
                             std::span<const double> start, const NelderMeadOptions& options = {});

// One seeded shuffle, then contiguous blocks; fold sizes differ by at most one.
std::vector<std::vector<std::size_t>> cv_folds(std::size_t n, std::size_t folds, std::uint64_t seed);

struct GridSearchSpec {
  // Parameter name -> candidate values; cells are the Cartesian product with
  // the last parameter varying fastest.
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> grid;
  std::size_t folds = 10;

  std::vector<nlohmann::json> cells() const;
};

struct GridSearchRow {
  nlohmann::json cell;
  double score = 0.0;  // mean held-out avg log-likelihood over folds
  std::vector<double> fold_scores;
};

struct GridSearchResult {
  nlohmann::json best_cell;
  double best_score = 0.0;
  std::vector<GridSearchRow> table;
};

using EstimatorFactory = std::function<std::unique_ptr<Estimator>(const nlohmann::json& cell, const Dataset& train)>;

// Ties go to the earlier cell. Throws NumericalError when every cell scores -inf.
GridSearchResult grid_search_cv(const GridSearchSpec& spec, const EstimatorFactory& factory, const Dataset& data,
                                std::uint64_t seed);

// Kolmogorov-Smirnov statistic of samples against a CDF.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

// CDF of a scalar-y conditional, by quadrature of its pdf from the left end of
// its support; evaluated at every sample in one sweep.
double ks_statistic_conditional(const ConditionalDensity& density, std::span<const double> x,
                                std::vector<double> samples);

}  // namespace cde
