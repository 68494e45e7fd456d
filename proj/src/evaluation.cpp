#include "cde/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cde/csv.hpp"
#include "cde/errors.hpp"
#include "cde/moments.hpp"
#include "config_json.hpp"

namespace cde {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using detail::describe_x;

// pdf over y at a fixed x, going through the mixture form when available so
// the conditional is assembled once rather than per point.
Density1d conditional_slice(const ConditionalDensity& d, std::span<const double> x) {
  if (auto g = d.mixture(x)) {
    return [g = std::move(*g)](double y) { return g.pdf(y); };
  }
  std::vector<double> xv(x.begin(), x.end());
  return [&d, xv](double y) { return d.pdf(xv, std::span<const double>(&y, 1)); };
}

}  // namespace

double hellinger_1d(const Density1d& p, const Density1d& q, Interval support, std::size_t n_points) {
  std::vector<double> nodes, weights;
  gauss_legendre_nodes(support, n_points, nodes, weights);
  double overlap = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double a = p(nodes[i]);
    const double b = q(nodes[i]);
    if (!(a >= 0.0) || !(b >= 0.0)) {
      throw DomainError("invalid density value at y = " + format_double(nodes[i]) + " (" + format_double(a) + ", " +
                        format_double(b) + ")");
    }
    overlap += weights[i] * std::sqrt(a * b);
  }
  return std::clamp(std::sqrt(std::max(0.0, 1.0 - overlap)), 0.0, 1.0);
}

void EvalProtocol::validate() const {
  if (n_x_points < 1) throw ConfigError("protocol needs n_x_points >= 1");
  if (!(lo_percentile > 0.0 && lo_percentile < hi_percentile && hi_percentile < 1.0)) {
    throw ConfigError("protocol percentiles must satisfy 0 < lo < hi < 1");
  }
  if (quadrature_points < 2) throw ConfigError("protocol needs at least 2 quadrature points");
  if (seeds.empty()) throw ConfigError("protocol needs at least one seed");
}

nlohmann::json EvalProtocol::to_json() const {
  return {{"n_x_points", n_x_points},
          {"percentiles", {lo_percentile, hi_percentile}},
          {"quadrature_points", quadrature_points},
          {"seeds", seeds}};
}

EvalProtocol EvalProtocol::from_json(const nlohmann::json& j) {
  EvalProtocol p;
  if (j.is_null()) return p;
  if (!j.is_object()) throw ConfigError("protocol must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n_x_points") p.n_x_points = value.get<std::size_t>();
      else if (key == "percentiles") {
        const auto v = value.get<std::vector<double>>();
        if (v.size() != 2) throw ConfigError("protocol percentiles must be a pair");
        p.lo_percentile = v[0];
        p.hi_percentile = v[1];
      } else if (key == "quadrature_points") p.quadrature_points = value.get<std::size_t>();
      else if (key == "seeds") p.seeds = value.get<std::vector<std::uint64_t>>();
      else throw ConfigError("protocol: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("protocol: ") + e.what());
  }
  p.validate();
  return p;
}

std::vector<std::vector<double>> evaluation_grid(const Simulator& sim, const EvalProtocol& protocol) {
  protocol.validate();
  const std::size_t l = sim.x_dim();
  std::vector<double> lo(l), hi(l);
  for (std::size_t a = 0; a < l; ++a) {
    lo[a] = sim.x_percentile(protocol.lo_percentile, a);
    hi[a] = sim.x_percentile(protocol.hi_percentile, a);
  }
  const std::size_t n = protocol.n_x_points;
  std::vector<std::vector<double>> grid(n, std::vector<double>(l));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1);
    for (std::size_t a = 0; a < l; ++a) grid[i][a] = lo[a] + t * (hi[a] - lo[a]);
  }
  return grid;
}

std::vector<double> conditional_hellinger_values(const ConditionalDensity& est, const Simulator& sim,
                                                 const EvalProtocol& protocol) {
  if (est.x_dim() != sim.x_dim() || est.y_dim() != sim.y_dim()) {
    throw ShapeError("estimator and simulator dimensions differ");
  }
  if (sim.y_dim() != 1) throw ShapeError("conditional Hellinger needs a scalar y");
  std::vector<double> out;
  for (const auto& x : evaluation_grid(sim, protocol)) {
    try {
      const Interval a = est.support(x);
      const Interval b = sim.support(x);
      const Interval support{std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
      out.push_back(hellinger_1d(conditional_slice(est, x), conditional_slice(sim, x), support,
                                 protocol.quadrature_points));
    } catch (const Error& e) {
      throw NumericalError("Hellinger at " + describe_x(x) + ": " + e.what());
    }
  }
  return out;
}

double conditional_hellinger(const ConditionalDensity& est, const Simulator& sim, const EvalProtocol& protocol) {
  const auto v = conditional_hellinger_values(est, sim, protocol);
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double avg_log_likelihood(const ConditionalDensity& est, const Dataset& data) {
  if (data.size() == 0) throw ShapeError("avg_log_likelihood needs data");
  double s = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double v = est.log_pdf(data.x.row(i), data.y.row(i));
    if (v == -kInf) return -kInf;
    s += v;
  }
  return s / static_cast<double>(data.size());
}

std::pair<double, double> predictive_mean_std(const ConditionalDensity& est, std::span<const double> x,
                                              std::size_t n_points) {
  if (est.y_dim() != 1) throw ShapeError("predictive moments need a scalar y");
  if (auto g = est.mixture(x)) {
    const auto m = g->closed_form_moments();
    return {m.mean[0], std::sqrt(m.covariance(0, 0))};
  }
  const auto m = numeric_moments_1d(conditional_slice(est, x), est.support(x), n_points);
  return {m.mean[0], std::sqrt(m.covariance(0, 0))};
}

RmseReport rmse_metrics(const ConditionalDensity& est, const Dataset& data) {
  if (data.y_dim() != 1) throw ShapeError("RMSE metrics support only one target column");
  if (data.size() == 0) throw ShapeError("RMSE metrics need data");
  double se_mean = 0.0, se_std = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto [mu, sd] = predictive_mean_std(est, data.x.row(i));
    const double dev = data.y(i, 0) - mu;
    se_mean += dev * dev;
    const double e = std::abs(dev) - sd;
    se_std += e * e;
  }
  const double n = static_cast<double>(data.size());
  return {std::sqrt(se_mean / n), std::sqrt(se_std / n)};
}

double rmse_mean(const ConditionalDensity& est, const Dataset& data) { return rmse_metrics(est, data).rmse_mean; }
double rmse_std(const ConditionalDensity& est, const Dataset& data) { return rmse_metrics(est, data).rmse_std; }

nlohmann::json Metrics::to_json() const {
  nlohmann::json j;
  // JSON has no infinities: a flagged log-likelihood is written as null.
  j["avg_log_likelihood"] = log_likelihood_flagged ? nlohmann::json(nullptr) : nlohmann::json(avg_log_likelihood);
  j["log_likelihood_flagged"] = log_likelihood_flagged;
  j["rmse_mean"] = rmse_mean;
  j["rmse_std"] = rmse_std;
  if (hellinger) j["hellinger"] = *hellinger;
  return j;
}

Metrics evaluate(const ConditionalDensity& est, const Dataset& data, const Simulator* sim,
                 const EvalProtocol& protocol) {
  Metrics m;
  m.avg_log_likelihood = avg_log_likelihood(est, data);
  m.log_likelihood_flagged = !std::isfinite(m.avg_log_likelihood);
  const auto r = rmse_metrics(est, data);
  m.rmse_mean = r.rmse_mean;
  m.rmse_std = r.rmse_std;
  if (sim) m.hellinger = conditional_hellinger(est, *sim, protocol);
  return m;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) return {};
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

namespace {

template <typename F>
MeanStd summarize(const std::vector<Metrics>& rows, F field) {
  std::vector<double> v;
  for (const auto& r : rows) v.push_back(field(r));
  return mean_std(v);
}

nlohmann::json summary_json(const MeanStd& s) { return {{"mean", s.mean}, {"std", s.std}}; }

}  // namespace

MeanStd MetricsReport::avg_log_likelihood() const {
  return summarize(per_seed, [](const Metrics& m) { return m.avg_log_likelihood; });
}
MeanStd MetricsReport::rmse_mean() const {
  return summarize(per_seed, [](const Metrics& m) { return m.rmse_mean; });
}
MeanStd MetricsReport::rmse_std() const {
  return summarize(per_seed, [](const Metrics& m) { return m.rmse_std; });
}
std::optional<MeanStd> MetricsReport::hellinger() const {
  for (const auto& m : per_seed) {
    if (!m.hellinger) return std::nullopt;
  }
  return summarize(per_seed, [](const Metrics& m) { return *m.hellinger; });
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["seeds"] = seeds;
  auto rows = nlohmann::json::array();
  for (const auto& m : per_seed) rows.push_back(m.to_json());
  j["per_seed"] = rows;
  const auto ll = avg_log_likelihood();
  j["avg_log_likelihood"] =
      std::isfinite(ll.mean) ? summary_json(ll) : nlohmann::json{{"mean", nullptr}, {"std", nullptr}};
  j["rmse_mean"] = summary_json(rmse_mean());
  j["rmse_std"] = summary_json(rmse_std());
  if (auto h = hellinger()) j["hellinger"] = summary_json(*h);
  return j;
}

std::string MetricsReport::to_csv() const {
  const bool has_h = hellinger().has_value();
  std::vector<std::string> header = {"seed", "avg_log_likelihood", "rmse_mean", "rmse_std"};
  if (has_h) header.push_back("hellinger");
  std::string out = csv_row(header);
  for (std::size_t i = 0; i < per_seed.size(); ++i) {
    const auto& m = per_seed[i];
    std::vector<std::string> row = {i < seeds.size() ? std::to_string(seeds[i]) : "",
                                    format_double(m.avg_log_likelihood), format_double(m.rmse_mean),
                                    format_double(m.rmse_std)};
    if (has_h) row.push_back(format_double(*m.hellinger));
    out += csv_row(row);
  }
  return out;
}

NelderMeadResult nelder_mead(const std::function<double(std::span<const double>)>& objective,
                             std::span<const double> start, const NelderMeadOptions& options) {
  const std::size_t n = start.size();
  if (n == 0) throw ConfigError("Nelder-Mead needs at least one coordinate");
  auto eval = [&](const std::vector<double>& p) {
    const double v = objective(p);
    return std::isfinite(v) ? v : kInf;
  };
  std::vector<std::vector<double>> simplex(n + 1, std::vector<double>(start.begin(), start.end()));
  std::vector<double> values(n + 1);
  values[0] = objective(simplex[0]);
  if (!std::isfinite(values[0])) throw ConfigError("Nelder-Mead: objective is not finite at the start point");
  for (std::size_t i = 0; i < n; ++i) {
    double step = options.initial_step ? *options.initial_step
                                       : (start[i] != 0.0 ? 0.05 * std::abs(start[i]) : 0.00025);
    simplex[i + 1][i] += step;
    values[i + 1] = eval(simplex[i + 1]);
  }

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), trial(n), trial2(n);
  NelderMeadResult result;
  std::size_t it = 0;
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<std::vector<double>> s2(n + 1);
    std::vector<double> v2(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      s2[i] = std::move(simplex[order[i]]);
      v2[i] = values[order[i]];
    }
    simplex = std::move(s2);
    values = std::move(v2);
  };
  auto converged = [&] {
    if (!(values[n] - values[0] < options.f_tol)) return false;
    double spread = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      for (std::size_t j = 0; j < n; ++j) spread = std::max(spread, std::abs(simplex[i][j] - simplex[0][j]));
    }
    return spread <= options.x_tol;
  };

  sort_simplex();
  while (it < options.max_iterations && !converged()) {
    ++it;
    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j] / static_cast<double>(n);
    }
    const auto& worst = simplex[n];
    for (std::size_t j = 0; j < n; ++j) trial[j] = centroid[j] + (centroid[j] - worst[j]);
    const double fr = eval(trial);
    if (fr < values[0]) {
      for (std::size_t j = 0; j < n; ++j) trial2[j] = centroid[j] + 2.0 * (centroid[j] - worst[j]);
      const double fe = eval(trial2);
      if (fe < fr) {
        simplex[n] = trial2;
        values[n] = fe;
      } else {
        simplex[n] = trial;
        values[n] = fr;
      }
    } else if (fr < values[n - 1]) {
      simplex[n] = trial;
      values[n] = fr;
    } else {
      const bool outside = fr < values[n];
      for (std::size_t j = 0; j < n; ++j) {
        trial2[j] = outside ? centroid[j] + 0.5 * (trial[j] - centroid[j]) : centroid[j] + 0.5 * (worst[j] - centroid[j]);
      }
      const double fc = eval(trial2);
      if (fc < (outside ? fr : values[n])) {
        simplex[n] = trial2;
        values[n] = fc;
      } else {
        for (std::size_t i = 1; i <= n; ++i) {
          for (std::size_t j = 0; j < n; ++j) simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
          values[i] = eval(simplex[i]);
        }
      }
    }
    sort_simplex();
  }
  result.argmin = simplex[0];
  result.value = values[0];
  result.iterations = it;
  result.converged = converged();
  return result;
}

std::vector<std::vector<std::size_t>> cv_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (n < folds) throw ConfigError("cross-validation needs at least as many rows as folds");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t size = n / folds + (f < n % folds ? 1 : 0);
    out[f].assign(idx.begin() + static_cast<std::ptrdiff_t>(pos), idx.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return out;
}

std::vector<nlohmann::json> GridSearchSpec::cells() const {
  std::vector<nlohmann::json> out = {nlohmann::json::object()};
  for (const auto& [name, values] : grid) {
    if (values.empty()) throw ConfigError("grid parameter '" + name + "' has no values");
    std::vector<nlohmann::json> next;
    for (const auto& base : out) {
      for (const auto& v : values) {
        auto c = base;
        c[name] = v;
        next.push_back(std::move(c));
      }
    }
    out = std::move(next);
  }
  return out;
}

GridSearchResult grid_search_cv(const GridSearchSpec& spec, const EstimatorFactory& factory, const Dataset& data,
                                std::uint64_t seed) {
  if (spec.grid.empty()) throw ConfigError("grid search needs a nonempty grid");
  const auto folds = cv_folds(data.size(), spec.folds, seed);
  GridSearchResult result;
  result.best_score = -kInf;
  bool any = false;
  for (const auto& cell : spec.cells()) {
    GridSearchRow row;
    row.cell = cell;
    double total = 0.0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      std::vector<std::size_t> train_idx;
      for (std::size_t g = 0; g < folds.size(); ++g) {
        if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
      }
      std::sort(train_idx.begin(), train_idx.end());
      double score;
      try {
        const auto est = factory(cell, data.subset(train_idx));
        score = avg_log_likelihood(*est, data.subset(folds[f]));
      } catch (const Error&) {
        score = -kInf;
      }
      row.fold_scores.push_back(score);
      total += score;
    }
    row.score = total / static_cast<double>(folds.size());
    if (std::isnan(row.score)) row.score = -kInf;
    if (row.score > -kInf && (!any || row.score > result.best_score)) {
      result.best_score = row.score;
      result.best_cell = cell;
      any = true;
    }
    result.table.push_back(std::move(row));
  }
  if (!any) throw NumericalError("grid search failed: every cell scored -inf");
  return result;
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw ConfigError("KS statistic needs samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

double ks_statistic_conditional(const ConditionalDensity& density, std::span<const double> x,
                                std::vector<double> samples) {
  if (samples.empty()) throw ConfigError("KS statistic needs samples");
  std::sort(samples.begin(), samples.end());
  const auto pdf = conditional_slice(density, x);
  const Interval support = density.support(x);
  const double lo = std::min(support.lo, samples.front());
  // Running integral of the pdf from the left end, advanced sample by sample.
  std::vector<double> cdf(samples.size());
  double acc = integrate(pdf, {lo, samples.front()}, 200);
  cdf[0] = acc;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i] > samples[i - 1]) acc += integrate(pdf, {samples[i - 1], samples[i]}, 8);
    cdf[i] = acc;
  }
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    d = std::max({d, cdf[i] - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - cdf[i]});
  }
  return d;
}

}  // namespace cde
