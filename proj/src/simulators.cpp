#include "cde/simulators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "cde/errors.hpp"

namespace cde {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& what) {
  if (j.is_null()) return;
  if (!j.is_object()) throw ConfigError(what + " parameters must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError(what + ": unknown parameter '" + key + "'");
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.is_null() || !j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("simulator parameter '") + key + "': " + e.what());
  }
}

void expect_dims(std::span<const double> x, std::span<const double> y, std::size_t l, std::size_t m) {
  if (x.size() != l || y.size() != m) throw ShapeError("simulator query has the wrong x or y dimension");
}

// log Phi(t), accurate far into the left tail.
double log_normal_cdf(double t) {
  if (t > -30.0) return std::log(normal_cdf(t));
  // Mills-ratio asymptotic: Phi(t) ~ phi(t) / |t| (1 - 1/t^2 + 3/t^4).
  const double t2 = t * t;
  return -0.5 * t2 - kLogSqrt2Pi - std::log(-t) + std::log1p(-1.0 / t2 + 3.0 / (t2 * t2));
}

Matrix gmm_matrix(const nlohmann::json& j, const char* what) {
  try {
    return matrix_from_json(j);
  } catch (const ParseError& e) {
    throw ConfigError(std::string("gmm parameter '") + what + "': " + e.what());
  }
}

}  // namespace

double Simulator::x_percentile(double q, std::size_t axis) const {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("percentile fraction must lie in (0, 1)");
  if (axis >= x_dim()) throw ShapeError("percentile axis out of range");
  std::call_once(cache_->once, [this] {
    const Dataset d = sample(kPercentileDraws, derive_seed(0, "percentile/" + name()));
    cache_->sorted.resize(x_dim());
    for (std::size_t a = 0; a < x_dim(); ++a) {
      cache_->sorted[a] = d.x.column(a);
      std::sort(cache_->sorted[a].begin(), cache_->sorted[a].end());
    }
  });
  const auto& v = cache_->sorted[axis];
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

// ---------------------------------------------------------------- EconDensity

double econ_pdf(double x, double y) {
  if (!(x >= 0.0)) throw DomainError("econ density needs x >= 0, got " + std::to_string(x));
  return normal_pdf(y, x * x, 1.0 + x);
}

double EconDensity::log_pdf(std::span<const double> x, std::span<const double> y) const {
  expect_dims(x, y, 1, 1);
  if (!(x[0] >= 0.0)) throw DomainError("econ density needs x >= 0, got " + std::to_string(x[0]));
  return normal_log_pdf(y[0], x[0] * x[0], 1.0 + x[0]);
}

Interval EconDensity::support(std::span<const double> x, std::size_t) const {
  const double mu = x[0] * x[0];
  const double sd = 1.0 + std::abs(x[0]);
  return {mu - 10.0 * sd, mu + 10.0 * sd};
}

Dataset EconDensity::sample(std::size_t n, std::uint64_t seed) const {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix x(n, 1), y(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = std::abs(z(rng));
    y(i, 0) = x(i, 0) * x(i, 0) + (1.0 + x(i, 0)) * z(rng);
  }
  return {std::move(x), std::move(y)};
}

Matrix EconDensity::sample_conditional(std::span<const double> x, std::size_t n, Rng& rng) const {
  if (x.size() != 1 || !(x[0] >= 0.0)) throw DomainError("econ density needs one x >= 0");
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix y(n, 1);
  for (std::size_t i = 0; i < n; ++i) y(i, 0) = x[0] * x[0] + (1.0 + x[0]) * z(rng);
  return y;
}

// ------------------------------------------------------------------- ArmaJump

void ArmaJumpParams::validate() const {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("arma_jump: jump probability must lie in [0, 1]");
  if (!(sigma > 0.0)) throw ConfigError("arma_jump: sigma must be > 0");
  if (!(std::abs(alpha) < 1.0)) throw ConfigError("arma_jump: |alpha| must be < 1");
  if (!std::isfinite(c)) throw ConfigError("arma_jump: c must be finite");
}

nlohmann::json ArmaJumpParams::to_json() const {
  return {{"c", c}, {"alpha", alpha}, {"p", p}, {"sigma", sigma}, {"burn_in", burn_in}};
}

ArmaJumpParams ArmaJumpParams::from_json(const nlohmann::json& j) {
  check_keys(j, {"c", "alpha", "p", "sigma", "burn_in"}, "arma_jump");
  ArmaJumpParams out;
  read(j, "c", out.c);
  read(j, "alpha", out.alpha);
  read(j, "p", out.p);
  read(j, "sigma", out.sigma);
  read(j, "burn_in", out.burn_in);
  out.validate();
  return out;
}

GaussianMixture armajump_conditional(const ArmaJumpParams& pr, double x_prev) {
  return GaussianMixture({1.0 - pr.p, pr.p},
                         Matrix(2, 1, {pr.c * (1.0 - pr.alpha) + pr.alpha * x_prev, pr.alpha * (x_prev - pr.c)}),
                         Matrix(2, 1, {pr.sigma, 3.0 * pr.sigma}));
}

ArmaJump::ArmaJump(ArmaJumpParams params) : params_(params) { params_.validate(); }

double ArmaJump::log_pdf(std::span<const double> x, std::span<const double> y) const {
  expect_dims(x, y, 1, 1);
  return armajump_conditional(params_, x[0]).log_pdf(y[0]);
}

Interval ArmaJump::support(std::span<const double> x, std::size_t axis) const {
  return armajump_conditional(params_, x[0]).support(axis);
}

std::optional<GaussianMixture> ArmaJump::mixture(std::span<const double> x) const {
  if (x.size() != 1) throw ShapeError("arma_jump expects a scalar x");
  return armajump_conditional(params_, x[0]);
}

Dataset ArmaJump::sample(std::size_t n, std::uint64_t seed) const {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto& pr = params_;
  auto step = [&](double prev) {
    const bool jump = u(rng) < pr.p;
    return jump ? pr.alpha * (prev - pr.c) + 3.0 * pr.sigma * z(rng)
                : pr.c * (1.0 - pr.alpha) + pr.alpha * prev + pr.sigma * z(rng);
  };
  double state = pr.c;
  for (std::size_t t = 0; t < pr.burn_in; ++t) state = step(state);
  Matrix x(n, 1), y(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = state;
    state = step(state);
    y(i, 0) = state;
  }
  return {std::move(x), std::move(y)};
}

Matrix ArmaJump::sample_conditional(std::span<const double> x, std::size_t n, Rng& rng) const {
  if (x.size() != 1) throw ShapeError("arma_jump expects a scalar x");
  return armajump_conditional(params_, x[0]).sample(rng, n);
}

// ----------------------------------------------------------------- SkewNormal

double SkewNormalParams::shape(double x) const {
  const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return alpha_low + s * (alpha_high - alpha_low);
}

void SkewNormalParams::validate() const {
  if (!(d > 0.0)) throw ConfigError("skew_normal: d must be > 0");
  if (!(c >= 0.0)) throw ConfigError("skew_normal: c must be >= 0 so the scale stays positive");
  if (!(x_std > 0.0)) throw ConfigError("skew_normal: x_std must be > 0");
  for (double v : {a, b, alpha_low, alpha_high}) {
    if (!std::isfinite(v)) throw ConfigError("skew_normal: parameters must be finite");
  }
}

nlohmann::json SkewNormalParams::to_json() const {
  return {{"a", a},
          {"b", b},
          {"c", c},
          {"d", d},
          {"alpha_low", alpha_low},
          {"alpha_high", alpha_high},
          {"x_std", x_std}};
}

SkewNormalParams SkewNormalParams::from_json(const nlohmann::json& j) {
  check_keys(j, {"a", "b", "c", "d", "alpha_low", "alpha_high", "x_std"}, "skew_normal");
  SkewNormalParams out;
  read(j, "a", out.a);
  read(j, "b", out.b);
  read(j, "c", out.c);
  read(j, "d", out.d);
  read(j, "alpha_low", out.alpha_low);
  read(j, "alpha_high", out.alpha_high);
  read(j, "x_std", out.x_std);
  out.validate();
  return out;
}

double skewnormal_log_pdf(const SkewNormalParams& pr, double x, double y) {
  const double w = pr.scale(x);
  if (!(w > 0.0)) throw DomainError("skew_normal: non-positive scale at x = " + std::to_string(x));
  const double z = (y - pr.location(x)) / w;
  return std::numbers::ln2 - std::log(w) - 0.5 * z * z - kLogSqrt2Pi + log_normal_cdf(pr.shape(x) * z);
}

double skewnormal_pdf(const SkewNormalParams& pr, double x, double y) { return std::exp(skewnormal_log_pdf(pr, x, y)); }

SkewNormal::SkewNormal(SkewNormalParams params) : params_(params) { params_.validate(); }

double SkewNormal::log_pdf(std::span<const double> x, std::span<const double> y) const {
  expect_dims(x, y, 1, 1);
  return skewnormal_log_pdf(params_, x[0], y[0]);
}

Interval SkewNormal::support(std::span<const double> x, std::size_t) const {
  const double loc = params_.location(x[0]);
  const double w = params_.scale(x[0]);
  return {loc - 10.0 * w, loc + 10.0 * w};
}

namespace {

// y = xi + omega (delta |u0| + sqrt(1 - delta^2) u1), delta = alpha / sqrt(1 + alpha^2).
double draw_skew_normal(const SkewNormalParams& pr, double x, std::normal_distribution<double>& z, Rng& rng) {
  const double al = pr.shape(x);
  const double delta = al / std::sqrt(1.0 + al * al);
  const double u0 = z(rng);
  const double u1 = z(rng);
  return pr.location(x) + pr.scale(x) * (delta * std::abs(u0) + std::sqrt(1.0 - delta * delta) * u1);
}

}  // namespace

Dataset SkewNormal::sample(std::size_t n, std::uint64_t seed) const {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix x(n, 1), y(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = params_.x_std * z(rng);
    y(i, 0) = draw_skew_normal(params_, x(i, 0), z, rng);
  }
  return {std::move(x), std::move(y)};
}

Matrix SkewNormal::sample_conditional(std::span<const double> x, std::size_t n, Rng& rng) const {
  if (x.size() != 1) throw ShapeError("skew_normal expects a scalar x");
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix y(n, 1);
  for (std::size_t i = 0; i < n; ++i) y(i, 0) = draw_skew_normal(params_, x[0], z, rng);
  return y;
}

// -------------------------------------------------------------- FactorizedGmm

FactorizedGmmParams FactorizedGmmParams::random(std::size_t components, std::size_t x_dim, std::size_t y_dim,
                                                std::uint64_t param_seed) {
  if (components == 0 || x_dim == 0 || y_dim == 0) throw ConfigError("gmm: components and dimensions must be >= 1");
  Rng rng(param_seed);
  std::uniform_real_distribution<double> loc(-3.0, 3.0);
  std::uniform_real_distribution<double> sc(0.5, 1.5);
  std::exponential_distribution<double> gamma1(1.0);
  FactorizedGmmParams p;
  p.weights.resize(components);
  double total = 0.0;
  for (double& w : p.weights) total += (w = gamma1(rng));
  for (double& w : p.weights) w /= total;
  p.x_means = Matrix(components, x_dim);
  p.x_scales = Matrix(components, x_dim);
  p.y_means = Matrix(components, y_dim);
  p.y_scales = Matrix(components, y_dim);
  for (std::size_t k = 0; k < components; ++k) {
    for (std::size_t j = 0; j < x_dim; ++j) p.x_means(k, j) = loc(rng);
    for (std::size_t j = 0; j < x_dim; ++j) p.x_scales(k, j) = sc(rng);
    for (std::size_t j = 0; j < y_dim; ++j) p.y_means(k, j) = loc(rng);
    for (std::size_t j = 0; j < y_dim; ++j) p.y_scales(k, j) = sc(rng);
  }
  return p;
}

void FactorizedGmmParams::validate() const {
  const std::size_t k = weights.size();
  if (k == 0) throw ConfigError("gmm: needs at least one component");
  if (x_means.rows() != k || x_scales.rows() != k || y_means.rows() != k || y_scales.rows() != k ||
      x_means.cols() != x_scales.cols() || y_means.cols() != y_scales.cols() || x_means.cols() == 0 ||
      y_means.cols() == 0) {
    throw ConfigError("gmm: parameter shapes disagree");
  }
  // Reuse the mixture invariants for both factors.
  try {
    GaussianMixture(weights, x_means, x_scales);
    GaussianMixture(weights, y_means, y_scales);
  } catch (const Error& e) {
    throw ConfigError(std::string("gmm: ") + e.what());
  }
}

nlohmann::json FactorizedGmmParams::to_json() const {
  return {{"weights", weights},
          {"x_means", matrix_to_json(x_means)},
          {"x_scales", matrix_to_json(x_scales)},
          {"y_means", matrix_to_json(y_means)},
          {"y_scales", matrix_to_json(y_scales)}};
}

FactorizedGmmParams FactorizedGmmParams::from_json(const nlohmann::json& j) {
  check_keys(j, {"weights", "x_means", "x_scales", "y_means", "y_scales", "n_components", "x_dim", "y_dim",
                 "param_seed"},
             "gmm");
  if (!j.is_null() && j.contains("weights")) {
    FactorizedGmmParams p;
    read(j, "weights", p.weights);
    for (const char* key : {"x_means", "x_scales", "y_means", "y_scales"}) {
      if (!j.contains(key)) throw ConfigError(std::string("gmm: missing parameter '") + key + "'");
    }
    p.x_means = gmm_matrix(j.at("x_means"), "x_means");
    p.x_scales = gmm_matrix(j.at("x_scales"), "x_scales");
    p.y_means = gmm_matrix(j.at("y_means"), "y_means");
    p.y_scales = gmm_matrix(j.at("y_scales"), "y_scales");
    p.validate();
    return p;
  }
  std::size_t k = 5, l = 1, m = 1;
  std::uint64_t seed = 0;
  read(j, "n_components", k);
  read(j, "x_dim", l);
  read(j, "y_dim", m);
  read(j, "param_seed", seed);
  return random(k, l, m, seed);
}

GaussianMixture factorized_gmm_conditional(const FactorizedGmmParams& p, std::span<const double> x) {
  const std::size_t k = p.components();
  if (x.size() != p.x_means.cols()) throw ShapeError("gmm: x has the wrong dimension");
  std::vector<double> log_w(k);
  bool any = false;
  for (std::size_t c = 0; c < k; ++c) {
    double t = std::log(p.weights[c]);
    for (std::size_t j = 0; j < x.size(); ++j) t += normal_log_pdf(x[j], p.x_means(c, j), p.x_scales(c, j));
    log_w[c] = t;
    any = any || std::isfinite(t);
  }
  if (!any) throw DomainError("gmm: every component weight underflows at this x");
  return GaussianMixture::from_log_weights(log_w, p.y_means, p.y_scales);
}

FactorizedGmm::FactorizedGmm(FactorizedGmmParams params)
    : params_(std::move(params)), y_marginal_((params_.validate(), params_.weights), params_.y_means, params_.y_scales) {}

double FactorizedGmm::log_pdf(std::span<const double> x, std::span<const double> y) const {
  expect_dims(x, y, x_dim(), y_dim());
  return factorized_gmm_conditional(params_, x).log_pdf(y);
}

Interval FactorizedGmm::support(std::span<const double> x, std::size_t axis) const {
  return factorized_gmm_conditional(params_, x).support(axis);
}

std::optional<GaussianMixture> FactorizedGmm::mixture(std::span<const double> x) const {
  return factorized_gmm_conditional(params_, x);
}

Dataset FactorizedGmm::sample(std::size_t n, std::uint64_t seed) const {
  Rng rng(seed);
  std::discrete_distribution<std::size_t> pick(params_.weights.begin(), params_.weights.end());
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix x(n, x_dim()), y(n, y_dim());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = pick(rng);
    for (std::size_t j = 0; j < x_dim(); ++j) x(i, j) = params_.x_means(c, j) + params_.x_scales(c, j) * z(rng);
    for (std::size_t j = 0; j < y_dim(); ++j) y(i, j) = params_.y_means(c, j) + params_.y_scales(c, j) * z(rng);
  }
  return {std::move(x), std::move(y)};
}

Matrix FactorizedGmm::sample_conditional(std::span<const double> x, std::size_t n, Rng& rng) const {
  return factorized_gmm_conditional(params_, x).sample(rng, n);
}

// -------------------------------------------------------------------- factory

std::vector<std::string> simulator_names() { return {"econ", "arma_jump", "skew_normal", "gmm"}; }

std::unique_ptr<Simulator> make_simulator(const std::string& name, const nlohmann::json& params) {
  if (name == "econ") {
    check_keys(params, {}, "econ");
    return std::make_unique<EconDensity>();
  }
  if (name == "arma_jump") return std::make_unique<ArmaJump>(ArmaJumpParams::from_json(params));
  if (name == "skew_normal") return std::make_unique<SkewNormal>(SkewNormalParams::from_json(params));
  if (name == "gmm") return std::make_unique<FactorizedGmm>(FactorizedGmmParams::from_json(params));
  std::string valid;
  for (const auto& n : simulator_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown simulator '" + name + "' (valid: " + valid + ")");
}

nlohmann::json OracleEstimator::to_json() const {
  return {{"kind", "oracle"}, {"simulator", sim_->name()}, {"params", sim_->params_json()}};
}

std::unique_ptr<OracleEstimator> OracleEstimator::from_json(const nlohmann::json& j) {
  try {
    return std::make_unique<OracleEstimator>(
        make_simulator(j.at("simulator").get<std::string>(), j.value("params", nlohmann::json::object())));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("oracle model JSON: ") + e.what());
  }
}

}  // namespace cde
