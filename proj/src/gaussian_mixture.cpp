#include "cde/gaussian_mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cde/errors.hpp"

namespace cde {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

}  // namespace

double normal_log_pdf(double y, double mean, double sd) {
  const double z = (y - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

double normal_pdf(double y, double mean, double sd) { return std::exp(normal_log_pdf(y, mean, sd)); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double log_sum_exp(std::span<const double> v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

std::vector<double> MomentReport::std_dev() const {
  std::vector<double> out(covariance.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(std::max(0.0, covariance(i, i)));
  return out;
}

GaussianMixture::GaussianMixture(std::vector<double> weights, Matrix means, Matrix scales)
    : weights_(std::move(weights)), means_(std::move(means)), scales_(std::move(scales)) {
  const std::size_t k = weights_.size();
  if (k == 0) throw ShapeError("GaussianMixture needs at least one component");
  if (means_.rows() != k || scales_.rows() != k || means_.cols() != scales_.cols() || means_.cols() == 0) {
    throw ShapeError("GaussianMixture: weights, means and scales disagree on K or m");
  }
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("GaussianMixture weights must be finite and >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw DomainError("GaussianMixture weights sum to " + std::to_string(total) + ", expected 1");
  }
  for (double s : scales_.data()) {
    if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("GaussianMixture scales must be finite and > 0");
  }
  if (!means_.all_finite()) throw DomainError("GaussianMixture means must be finite");

  const std::size_t m = dim();
  log_weights_.resize(k);
  log_norm_.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    log_weights_[c] = std::log(weights_[c]);
    double ln = -static_cast<double>(m) * kLogSqrt2Pi;
    for (double s : scales_.row(c)) ln -= std::log(s);
    log_norm_[c] = ln;
  }
}

GaussianMixture GaussianMixture::from_log_weights(std::span<const double> log_weights, Matrix means,
                                                  Matrix scales) {
  const double lse = log_sum_exp(log_weights);
  if (!std::isfinite(lse)) throw NumericalError("mixture log-weights are all -inf or non-finite");
  std::vector<double> w(log_weights.size());
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = std::exp(log_weights[k] - lse);
    total += w[k];
  }
  for (double& x : w) x /= total;
  return GaussianMixture(std::move(w), std::move(means), std::move(scales));
}

void GaussianMixture::component_log_terms(std::span<const double> y, std::span<double> out) const {
  const std::size_t m = dim();
  if (y.size() != m) {
    throw ShapeError("mixture of dimension " + std::to_string(m) + " evaluated at a point of dimension " +
                     std::to_string(y.size()));
  }
  for (std::size_t k = 0; k < components(); ++k) {
    const auto mu = means_.row(k);
    const auto s = scales_.row(k);
    double q = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double z = (y[j] - mu[j]) / s[j];
      q += z * z;
    }
    out[k] = log_weights_[k] + log_norm_[k] - 0.5 * q;
  }
}

double GaussianMixture::log_pdf(std::span<const double> y) const {
  const std::size_t k = components();
  if (k <= 64) {
    double buf[64];
    component_log_terms(y, std::span<double>(buf, k));
    return log_sum_exp(std::span<const double>(buf, k));
  }
  std::vector<double> terms(k);
  component_log_terms(y, terms);
  return log_sum_exp(terms);
}

double GaussianMixture::pdf(std::span<const double> y) const { return std::exp(log_pdf(y)); }

double GaussianMixture::log_pdf(double y) const { return log_pdf(std::span<const double>(&y, 1)); }

double GaussianMixture::pdf(double y) const { return std::exp(log_pdf(y)); }

Matrix GaussianMixture::sample(Rng& rng, std::size_t n) const {
  std::discrete_distribution<std::size_t> pick(weights_.begin(), weights_.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t m = dim();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = pick(rng);
    const auto mu = means_.row(k);
    const auto s = scales_.row(k);
    for (std::size_t j = 0; j < m; ++j) out(i, j) = mu[j] + s[j] * normal(rng);
  }
  return out;
}

GaussianMixture GaussianMixture::linear_transform(std::span<const double> shift,
                                                  std::span<const double> scale) const {
  const std::size_t m = dim();
  if (shift.size() != m || scale.size() != m) throw ShapeError("linear_transform: shift/scale dimension mismatch");
  for (double b : scale) {
    if (!(b > 0.0) || !std::isfinite(b)) throw DomainError("linear_transform: scale entries must be finite and > 0");
  }
  Matrix means(components(), m);
  Matrix scales(components(), m);
  for (std::size_t k = 0; k < components(); ++k) {
    for (std::size_t j = 0; j < m; ++j) {
      means(k, j) = shift[j] + scale[j] * means_(k, j);
      scales(k, j) = scale[j] * scales_(k, j);
    }
  }
  return GaussianMixture(weights_, std::move(means), std::move(scales));
}

MomentReport GaussianMixture::closed_form_moments() const {
  const std::size_t m = dim();
  MomentReport r;
  r.mean.assign(m, 0.0);
  for (std::size_t k = 0; k < components(); ++k) {
    for (std::size_t j = 0; j < m; ++j) r.mean[j] += weights_[k] * means_(k, j);
  }
  r.covariance = Matrix(m, m);
  for (std::size_t k = 0; k < components(); ++k) {
    const double w = weights_[k];
    for (std::size_t a = 0; a < m; ++a) {
      const double da = means_(k, a) - r.mean[a];
      for (std::size_t b = 0; b < m; ++b) {
        const double db = means_(k, b) - r.mean[b];
        r.covariance(a, b) += w * da * db;
      }
      r.covariance(a, a) += w * scales_(k, a) * scales_(k, a);
    }
  }
  return r;
}

Interval GaussianMixture::support(std::size_t axis, double n_sigma, double weight_floor) const {
  Interval out{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  double heaviest = -1.0;
  std::size_t heaviest_k = 0;
  for (std::size_t k = 0; k < components(); ++k) {
    if (weights_[k] > heaviest) {
      heaviest = weights_[k];
      heaviest_k = k;
    }
    if (weights_[k] < weight_floor) continue;
    out.lo = std::min(out.lo, means_(k, axis) - n_sigma * scales_(k, axis));
    out.hi = std::max(out.hi, means_(k, axis) + n_sigma * scales_(k, axis));
  }
  if (!(out.lo < out.hi)) {
    out.lo = means_(heaviest_k, axis) - n_sigma * scales_(heaviest_k, axis);
    out.hi = means_(heaviest_k, axis) + n_sigma * scales_(heaviest_k, axis);
  }
  return out;
}

nlohmann::json GaussianMixture::to_json() const {
  nlohmann::json means = nlohmann::json::array();
  nlohmann::json scales = nlohmann::json::array();
  for (std::size_t k = 0; k < components(); ++k) {
    const auto mu = means_.row(k);
    const auto s = scales_.row(k);
    means.push_back(std::vector<double>(mu.begin(), mu.end()));
    scales.push_back(std::vector<double>(s.begin(), s.end()));
  }
  return {{"weights", weights_}, {"means", means}, {"scales", scales}};
}

GaussianMixture GaussianMixture::from_json(const nlohmann::json& j) {
  auto w = j.at("weights").get<std::vector<double>>();
  auto mu = Matrix::from_rows(j.at("means").get<std::vector<std::vector<double>>>());
  auto s = Matrix::from_rows(j.at("scales").get<std::vector<std::vector<double>>>());
  return GaussianMixture(std::move(w), std::move(mu), std::move(s));
}

}  // namespace cde
