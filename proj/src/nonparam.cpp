#include "cde/nonparam.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <utility>

#include "cde/errors.hpp"
#include "cde/random.hpp"
#include "config_json.hpp"

namespace cde {

namespace {

using detail::describe_x;
using detail::read_key;
using detail::reject_unknown_keys;

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLogTiny = std::log(1e-300);
const double kLogWeightFloor = std::log(kKernelWeightFloor);
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double population_std(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / n);
}

// Normalized columns have unit spread unless they were constant.
double column_scale(const Matrix& m, std::size_t c) {
  const double s = population_std(m.column(c));
  return s > 0.0 ? s : 1.0;
}

// Mixture over the rows of `means` with unnormalized log weights, dropping
// negligible components. Every component shares one scale row.
GaussianMixture pruned_mixture(std::span<const double> log_w, const Matrix& means,
                               std::span<const double> scale) {
  double mx = -kInf;
  for (double t : log_w) mx = std::max(mx, t);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    if (log_w[i] - mx >= kLogWeightFloor) keep.push_back(i);
  }
  std::vector<double> lw(keep.size());
  Matrix mu(keep.size(), means.cols());
  Matrix sc(keep.size(), means.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    lw[k] = log_w[keep[k]];
    const auto src = means.row(keep[k]);
    std::copy(src.begin(), src.end(), mu.row(k).begin());
    std::copy(scale.begin(), scale.end(), sc.row(k).begin());
  }
  return GaussianMixture::from_log_weights(lw, std::move(mu), std::move(sc));
}

double scaled_sq_distance(std::span<const double> a, std::span<const double> b, std::span<const double> h) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double t = (a[d] - b[d]) / h[d];
    s += t * t;
  }
  return s;
}

void check_positive(const std::vector<double>& h, const char* what) {
  for (double v : h) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " bandwidths must be finite and > 0");
  }
}

template <typename T>
T parse_model(const nlohmann::json& j, const char* what, T (*build)(const nlohmann::json&)) {
  try {
    return build(j);
  } catch (const ParseError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string(what) + " model JSON: " + e.what());
  } catch (const Error& e) {
    throw ParseError(std::string(what) + " model JSON: " + e.what());
  }
}

}  // namespace

double silverman_bandwidth(double std_dev, double n, std::size_t dim) {
  if (!(std_dev > 0.0)) throw DomainError("silverman_bandwidth needs std > 0");
  if (!(n >= 1.0)) throw DomainError("silverman_bandwidth needs n >= 1");
  return 1.06 * std_dev * std::pow(n, -1.0 / (4.0 + static_cast<double>(dim)));
}

// ------------------------------------------------------------------- CKDE

nlohmann::json CkdeConfig::to_json() const {
  nlohmann::json opt = {{"max_iterations", optimizer.max_iterations},
                        {"f_tol", optimizer.f_tol},
                        {"x_tol", optimizer.x_tol}};
  if (optimizer.initial_step) opt["initial_step"] = *optimizer.initial_step;
  return {{"mode", mode == BandwidthMode::LooCv ? "loo-cv" : "rule-of-thumb"}, {"optimizer", opt}};
}

CkdeConfig CkdeConfig::from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"mode", "optimizer"}, "CKDE");
  CkdeConfig c;
  std::string mode = "rule-of-thumb";
  read_key(j, "mode", mode);
  if (mode == "rule-of-thumb") {
    c.mode = BandwidthMode::RuleOfThumb;
  } else if (mode == "loo-cv") {
    c.mode = BandwidthMode::LooCv;
  } else {
    throw ConfigError("CKDE mode must be 'rule-of-thumb' or 'loo-cv', got '" + mode + "'");
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    reject_unknown_keys(o, {"max_iterations", "f_tol", "x_tol", "initial_step"}, "CKDE optimizer");
    read_key(o, "max_iterations", c.optimizer.max_iterations);
    read_key(o, "f_tol", c.optimizer.f_tol);
    read_key(o, "x_tol", c.optimizer.x_tol);
    if (o.contains("initial_step")) {
      double step = 0.0;
      read_key(o, "initial_step", step);
      c.optimizer.initial_step = step;
    }
  }
  return c;
}

Ckde::Ckde(NormalizationStats stats, Dataset normalized, std::vector<double> h_x, std::vector<double> h_y,
           BandwidthMode mode)
    : stats_(std::move(stats)), data_(std::move(normalized)), h_x_(std::move(h_x)), h_y_(std::move(h_y)), mode_(mode) {
  if (h_x_.size() != data_.x_dim() || h_y_.size() != data_.y_dim() || stats_.mu_x.size() != data_.x_dim() ||
      stats_.mu_y.size() != data_.y_dim()) {
    throw ShapeError("CKDE bandwidths, stats and data disagree on dimensions");
  }
  check_positive(h_x_, "CKDE");
  check_positive(h_y_, "CKDE");
}

GaussianMixture Ckde::normalized_density(std::span<const double> x_norm) const {
  if (x_norm.size() != data_.x_dim()) throw ShapeError("CKDE query has the wrong x dimension");
  const std::size_t n = data_.size();
  std::vector<double> log_w(n);
  for (std::size_t i = 0; i < n; ++i) log_w[i] = -0.5 * scaled_sq_distance(x_norm, data_.x.row(i), h_x_);
  double log_norm = 0.0;
  for (double h : h_x_) log_norm += std::log(h) + kLogSqrt2Pi;
  const double log_marginal = log_sum_exp(log_w) - std::log(static_cast<double>(n)) - log_norm;
  if (!(log_marginal >= kLogTiny)) {
    throw NumericalError("CKDE marginal density of x underflows (below 1e-300) at normalized " +
                         describe_x(x_norm));
  }
  return pruned_mixture(log_w, data_.y, h_y_);
}

nlohmann::json Ckde::to_json() const {
  return {{"kind", "ckde"},
          {"mode", mode_ == BandwidthMode::LooCv ? "loo-cv" : "rule-of-thumb"},
          {"stats", stats_.to_json()},
          {"data", data_.to_json()},
          {"bandwidth_x", h_x_},
          {"bandwidth_y", h_y_}};
}

std::unique_ptr<Ckde> Ckde::from_json(const nlohmann::json& j) {
  return parse_model<std::unique_ptr<Ckde>>(j, "CKDE", [](const nlohmann::json& j) {
    if (j.at("kind").get<std::string>() != "ckde") throw ParseError("not a CKDE model");
    const auto mode = j.at("mode").get<std::string>();
    if (mode != "loo-cv" && mode != "rule-of-thumb") throw ParseError("CKDE model JSON: unknown mode '" + mode + "'");
    return std::make_unique<Ckde>(NormalizationStats::from_json(j.at("stats")), Dataset::from_json(j.at("data")),
                                  j.at("bandwidth_x").get<std::vector<double>>(),
                                  j.at("bandwidth_y").get<std::vector<double>>(),
                                  mode == "loo-cv" ? BandwidthMode::LooCv : BandwidthMode::RuleOfThumb);
  });
}

double ckde_loo_log_likelihood(const Dataset& normalized, std::span<const double> bandwidths) {
  const std::size_t n = normalized.size();
  const std::size_t l = normalized.x_dim();
  const std::size_t m = normalized.y_dim();
  if (bandwidths.size() != l + m) throw ShapeError("LOO objective needs one bandwidth per x and y dimension");
  if (n < 2) throw ConfigError("LOO objective needs at least two points");
  for (double h : bandwidths) {
    if (!(h > 0.0) || !std::isfinite(h)) return -kInf;
  }
  const auto hx = bandwidths.first(l);
  const auto hy = bandwidths.subspan(l);

  // Pairwise exponents are symmetric, so each pair is visited once.
  std::vector<double> num(n, 0.0), den(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = normalized.x.row(i);
    const auto yi = normalized.y.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double ax = -0.5 * scaled_sq_distance(xi, normalized.x.row(j), hx);
      const double ay = -0.5 * scaled_sq_distance(yi, normalized.y.row(j), hy);
      const double kx = std::exp(ax);
      const double kxy = std::exp(ax + ay);
      den[i] += kx;
      den[j] += kx;
      num[i] += kxy;
      num[j] += kxy;
    }
  }

  double log_ky_norm = 0.0;
  for (double h : hy) log_ky_norm += std::log(h) + kLogSqrt2Pi;
  std::vector<double> ax(n), axy(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double ratio;
    if (num[i] > 0.0 && den[i] > 0.0) {
      ratio = std::log(num[i] / den[i]);
    } else {
      // Underflow in the direct sums; redo this row in log space.
      std::size_t k = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        ax[k] = -0.5 * scaled_sq_distance(normalized.x.row(i), normalized.x.row(j), hx);
        axy[k] = ax[k] - 0.5 * scaled_sq_distance(normalized.y.row(i), normalized.y.row(j), hy);
        ++k;
      }
      ratio = log_sum_exp(std::span<const double>(axy).first(k)) - log_sum_exp(std::span<const double>(ax).first(k));
    }
    if (!std::isfinite(ratio)) return -kInf;
    total += ratio - log_ky_norm;
  }
  return total / static_cast<double>(n);
}

std::unique_ptr<Ckde> fit_ckde(const CkdeConfig& config, const Dataset& data) {
  if (data.size() < 2) throw ConfigError("CKDE needs at least two training points");
  auto norm = normalize_fit(data);
  const auto& nd = norm.normalized;
  const std::size_t l = nd.x_dim();
  const std::size_t m = nd.y_dim();
  const double n = static_cast<double>(nd.size());

  std::vector<double> h(l + m);
  for (std::size_t d = 0; d < l; ++d) h[d] = silverman_bandwidth(column_scale(nd.x, d), n, l + m);
  for (std::size_t d = 0; d < m; ++d) h[l + d] = silverman_bandwidth(column_scale(nd.y, d), n, l + m);

  if (config.mode == BandwidthMode::LooCv) {
    std::vector<double> start(h.size());
    for (std::size_t d = 0; d < h.size(); ++d) start[d] = std::log(h[d]);
    std::vector<double> trial(h.size());
    const auto objective = [&](std::span<const double> log_h) {
      for (std::size_t d = 0; d < log_h.size(); ++d) trial[d] = std::exp(log_h[d]);
      return -ckde_loo_log_likelihood(nd, trial);
    };
    const double start_value = objective(start);
    if (std::isfinite(start_value)) {
      const auto res = nelder_mead(objective, start, config.optimizer);
      if (res.value <= start_value) {
        for (std::size_t d = 0; d < h.size(); ++d) h[d] = std::exp(res.argmin[d]);
      }
    }
  }
  std::vector<double> hx(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(l));
  std::vector<double> hy(h.begin() + static_cast<std::ptrdiff_t>(l), h.end());
  return std::make_unique<Ckde>(std::move(norm.stats), nd, std::move(hx), std::move(hy), config.mode);
}

// ------------------------------------------------------------------- NKDE

void NkdeConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("NKDE epsilon must be > 0");
}

nlohmann::json NkdeConfig::to_json() const {
  return {{"epsilon", epsilon}, {"weighting", weighting == NeighborWeighting::Distance ? "distance" : "uniform"}};
}

NkdeConfig NkdeConfig::from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"epsilon", "weighting"}, "NKDE");
  NkdeConfig c;
  read_key(j, "epsilon", c.epsilon);
  std::string w = "uniform";
  read_key(j, "weighting", w);
  if (w == "uniform") {
    c.weighting = NeighborWeighting::Uniform;
  } else if (w == "distance") {
    c.weighting = NeighborWeighting::Distance;
  } else {
    throw ConfigError("NKDE weighting must be 'uniform' or 'distance', got '" + w + "'");
  }
  c.validate();
  return c;
}

Nkde::Nkde(NormalizationStats stats, Dataset normalized, NkdeConfig config, std::vector<double> h_y)
    : stats_(std::move(stats)), data_(std::move(normalized)), config_(config), h_(std::move(h_y)) {
  config_.validate();
  if (h_.size() != data_.y_dim() || stats_.mu_x.size() != data_.x_dim() || stats_.mu_y.size() != data_.y_dim()) {
    throw ShapeError("NKDE bandwidth, stats and data disagree on dimensions");
  }
  check_positive(h_, "NKDE");
}

std::vector<std::size_t> Nkde::neighbors(std::span<const double> x_norm) const {
  if (x_norm.size() != data_.x_dim()) throw ShapeError("NKDE query has the wrong x dimension");
  const double eps2 = config_.epsilon * config_.epsilon;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (squared_distance(x_norm, data_.x.row(i)) <= eps2) out.push_back(i);
  }
  return out;
}

GaussianMixture Nkde::normalized_density(std::span<const double> x_norm) const {
  const auto idx = neighbors(x_norm);
  if (idx.empty()) {
    throw DomainError("NKDE has no training points within epsilon = " + format_double(config_.epsilon) +
                      " of normalized " + describe_x(x_norm));
  }
  std::vector<double> w(idx.size(), 1.0);
  if (config_.weighting == NeighborWeighting::Distance) {
    double total = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      w[k] = std::max(0.0, 1.0 - std::sqrt(squared_distance(x_norm, data_.x.row(idx[k]))) / config_.epsilon);
      total += w[k];
    }
    // Every neighbor sits exactly on the boundary.
    if (!(total > 0.0)) std::fill(w.begin(), w.end(), 1.0);
  }
  std::vector<double> wk;
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (w[k] > 0.0) {
      keep.push_back(idx[k]);
      wk.push_back(w[k]);
    }
  }
  Matrix means = data_.y.select_rows(keep);
  Matrix scales(keep.size(), h_.size());
  for (std::size_t k = 0; k < keep.size(); ++k) std::copy(h_.begin(), h_.end(), scales.row(k).begin());
  const double total = std::accumulate(wk.begin(), wk.end(), 0.0);
  for (auto& v : wk) v /= total;
  return GaussianMixture(std::move(wk), std::move(means), std::move(scales));
}

nlohmann::json Nkde::to_json() const {
  return {{"kind", "nkde"},
          {"config", config_.to_json()},
          {"stats", stats_.to_json()},
          {"data", data_.to_json()},
          {"bandwidth", h_}};
}

std::unique_ptr<Nkde> Nkde::from_json(const nlohmann::json& j) {
  return parse_model<std::unique_ptr<Nkde>>(j, "NKDE", [](const nlohmann::json& j) {
    if (j.at("kind").get<std::string>() != "nkde") throw ParseError("not an NKDE model");
    return std::make_unique<Nkde>(NormalizationStats::from_json(j.at("stats")), Dataset::from_json(j.at("data")),
                                  NkdeConfig::from_json(j.at("config")),
                                  j.at("bandwidth").get<std::vector<double>>());
  });
}

double nkde_effective_sample_size(const Matrix& x, double epsilon) {
  const std::size_t n = x.rows();
  if (n == 0) throw ShapeError("NKDE effective sample size of an empty set");
  const double eps2 = epsilon * epsilon;
  // Each point is its own neighbor; pairs count twice.
  double count = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (squared_distance(x.row(i), x.row(j)) <= eps2) count += 2.0;
    }
  }
  return std::max(1.0, count / static_cast<double>(n) - 1.0);
}

std::unique_ptr<Nkde> fit_nkde(const NkdeConfig& config, const Dataset& data) {
  config.validate();
  auto norm = normalize_fit(data);
  const auto& nd = norm.normalized;
  const double n_eff = nkde_effective_sample_size(nd.x, config.epsilon);
  std::vector<double> h(nd.y_dim());
  for (std::size_t d = 0; d < h.size(); ++d) h[d] = silverman_bandwidth(column_scale(nd.y, d), n_eff, nd.y_dim());
  return std::make_unique<Nkde>(std::move(norm.stats), nd, config, std::move(h));
}

// ------------------------------------------------------------------ LSCDE

void LscdeConfig::validate() const {
  if (n_centers < 1) throw ConfigError("LSCDE n_centers must be >= 1");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw ConfigError("LSCDE bandwidth must be > 0");
  if (!(damping > 0.0) || !std::isfinite(damping)) throw ConfigError("LSCDE damping must be > 0");
}

nlohmann::json LscdeConfig::to_json() const {
  return {{"n_centers", n_centers}, {"bandwidth", bandwidth}, {"damping", damping}, {"seed", seed}};
}

LscdeConfig LscdeConfig::from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"n_centers", "bandwidth", "damping", "seed"}, "LSCDE");
  LscdeConfig c;
  read_key(j, "n_centers", c.n_centers);
  read_key(j, "bandwidth", c.bandwidth);
  read_key(j, "damping", c.damping);
  read_key(j, "seed", c.seed);
  c.validate();
  return c;
}

namespace {

// N x L matrix of exp(-|a_i - c_l|^2 / 2 s^2).
Eigen::MatrixXd gaussian_features(const Matrix& a, const Matrix& c, double s) {
  Eigen::MatrixXd out(a.rows(), c.rows());
  const double inv = 1.0 / (2.0 * s * s);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t l = 0; l < c.rows(); ++l) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) =
          std::exp(-squared_distance(a.row(i), c.row(l)) * inv);
    }
  }
  return out;
}

}  // namespace

LscdeSystem lscde_system(const Dataset& normalized, const Matrix& centers_x, const Matrix& centers_y,
                         double bandwidth) {
  if (centers_x.rows() != centers_y.rows() || centers_x.cols() != normalized.x_dim() ||
      centers_y.cols() != normalized.y_dim()) {
    throw ShapeError("LSCDE centers do not match the data dimensions");
  }
  const auto n = static_cast<Eigen::Index>(normalized.size());
  const auto L = static_cast<Eigen::Index>(centers_x.rows());
  const double s = bandwidth;
  const Eigen::MatrixXd phi_x = gaussian_features(normalized.x, centers_x, s);
  const Eigen::MatrixXd phi_y = gaussian_features(normalized.y, centers_y, s);

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(L, L);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(phi_x.transpose(), 1.0 / static_cast<double>(n));
  gram = gram.selfadjointView<Eigen::Lower>();

  const double m = static_cast<double>(normalized.y_dim());
  const double pref = std::pow(std::sqrt(std::numbers::pi) * s, m);
  LscdeSystem sys{Matrix(centers_x.rows(), centers_x.rows()), std::vector<double>(centers_x.rows())};
  for (Eigen::Index a = 0; a < L; ++a) {
    for (Eigen::Index b = 0; b < L; ++b) {
      const double dv = squared_distance(centers_y.row(a), centers_y.row(b));
      sys.H(a, b) = gram(a, b) * pref * std::exp(-dv / (4.0 * s * s));
    }
  }
  const Eigen::VectorXd h = phi_x.cwiseProduct(phi_y).colwise().mean().transpose();
  for (Eigen::Index a = 0; a < L; ++a) sys.h[a] = h(a);
  return sys;
}

Lscde::Lscde(NormalizationStats stats, Matrix centers_x, Matrix centers_y, std::vector<double> alpha,
             LscdeConfig config)
    : stats_(std::move(stats)), cx_(std::move(centers_x)), cy_(std::move(centers_y)), alpha_(std::move(alpha)),
      config_(config) {
  config_.validate();
  if (cx_.rows() != cy_.rows() || alpha_.size() != cx_.rows() || cx_.cols() != stats_.mu_x.size() ||
      cy_.cols() != stats_.mu_y.size()) {
    throw ShapeError("LSCDE centers, coefficients and stats disagree on dimensions");
  }
  for (double a : alpha_) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("LSCDE coefficients must be finite and >= 0");
  }
}

GaussianMixture Lscde::normalized_density(std::span<const double> x_norm) const {
  if (x_norm.size() != cx_.cols()) throw ShapeError("LSCDE query has the wrong x dimension");
  const double s = config_.bandwidth;
  std::vector<double> log_w;
  std::vector<std::size_t> idx;
  for (std::size_t l = 0; l < alpha_.size(); ++l) {
    if (alpha_[l] <= 0.0) continue;
    idx.push_back(l);
    log_w.push_back(std::log(alpha_[l]) - squared_distance(x_norm, cx_.row(l)) / (2.0 * s * s));
  }
  const double m = static_cast<double>(cy_.cols());
  const double log_norm = idx.empty() ? -kInf : log_sum_exp(log_w) + m * (std::log(s) + kLogSqrt2Pi);
  if (!(log_norm > kLogTiny)) {
    throw NumericalError("LSCDE normalizer is at or below 1e-300 (degenerate density) at normalized " +
                         describe_x(x_norm));
  }
  const Matrix means = cy_.select_rows(idx);
  const std::vector<double> scale(cy_.cols(), s);
  return pruned_mixture(log_w, means, scale);
}

nlohmann::json Lscde::to_json() const {
  return {{"kind", "lscde"},
          {"config", config_.to_json()},
          {"stats", stats_.to_json()},
          {"centers_x", matrix_to_json(cx_)},
          {"centers_y", matrix_to_json(cy_)},
          {"alpha", alpha_}};
}

std::unique_ptr<Lscde> Lscde::from_json(const nlohmann::json& j) {
  return parse_model<std::unique_ptr<Lscde>>(j, "LSCDE", [](const nlohmann::json& j) {
    if (j.at("kind").get<std::string>() != "lscde") throw ParseError("not an LSCDE model");
    return std::make_unique<Lscde>(NormalizationStats::from_json(j.at("stats")), matrix_from_json(j.at("centers_x")),
                                   matrix_from_json(j.at("centers_y")), j.at("alpha").get<std::vector<double>>(),
                                   LscdeConfig::from_json(j.at("config")));
  });
}

std::unique_ptr<Lscde> fit_lscde(const LscdeConfig& config, const Dataset& data) {
  config.validate();
  auto norm = normalize_fit(data);
  const auto& nd = norm.normalized;
  const std::size_t n = nd.size();
  const std::size_t L = std::min(config.n_centers, n);

  // Partial Fisher-Yates: the first L entries are a uniform subsample.
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(config.seed, "centers"));
  for (std::size_t i = 0; i < L; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(perm[i], perm[pick(rng)]);
  }
  perm.resize(L);
  Matrix cx = nd.x.select_rows(perm);
  Matrix cy = nd.y.select_rows(perm);

  const auto sys = lscde_system(nd, cx, cy, config.bandwidth);
  const auto Li = static_cast<Eigen::Index>(L);
  Eigen::MatrixXd A(Li, Li);
  Eigen::VectorXd b(Li);
  for (Eigen::Index a = 0; a < Li; ++a) {
    b(a) = sys.h[a];
    for (Eigen::Index c = 0; c < Li; ++c) A(a, c) = sys.H(a, c);
    A(a, a) += config.damping;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  Eigen::VectorXd sol;
  if (llt.info() == Eigen::Success) {
    sol = llt.solve(b);
  } else {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw NumericalError("LSCDE system (H + lambda I) is ill-conditioned; try a larger damping lambda");
    }
    sol = ldlt.solve(b);
  }
  if (!sol.allFinite()) {
    throw NumericalError("LSCDE solve produced non-finite coefficients; try a larger damping lambda");
  }
  std::vector<double> alpha(L);
  for (std::size_t l = 0; l < L; ++l) alpha[l] = std::max(0.0, sol(static_cast<Eigen::Index>(l)));
  return std::make_unique<Lscde>(std::move(norm.stats), std::move(cx), std::move(cy), std::move(alpha), config);
}

}  // namespace cde
