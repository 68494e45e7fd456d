#include "cde/heads.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "cde/errors.hpp"

namespace cde {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// Softmax responsibilities from log-terms; returns the log normalizer.
double normalize_log_terms(std::span<double> terms) {
  double top = -std::numeric_limits<double>::infinity();
  for (double t : terms) top = std::max(top, t);
  if (!std::isfinite(top)) {
    // Every term is -inf (or one is +inf/nan): leave the non-finite result to the caller.
    const double lse = log_sum_exp(terms);
    for (double& t : terms) t = std::isfinite(lse) ? std::exp(t - lse) : 0.0;
    return lse;
  }
  double sum = 0.0;
  for (double& t : terms) sum += (t = std::exp(t - top));
  for (double& t : terms) t /= sum;
  return top + std::log(sum);
}

}  // namespace

double softplus(double a) {
  const double v = (a > 0.0 ? a : 0.0) + std::log1p(std::exp(-std::abs(a)));
  return std::max(v, std::numeric_limits<double>::min());
}

MdnHead::MdnHead(std::size_t components, std::size_t y_dim) : components_(components), dim_(y_dim) {
  if (components == 0 || y_dim == 0) throw ConfigError("MDN head needs K >= 1 and m >= 1");
}

GaussianMixture MdnHead::mixture(std::span<const double> raw) const {
  if (raw.size() != raw_size()) {
    throw ShapeError("MDN head expects " + std::to_string(raw_size()) + " raw outputs, got " +
                     std::to_string(raw.size()));
  }
  const std::size_t k = components_;
  const std::size_t m = dim_;
  Matrix means(k, m);
  Matrix scales(k, m);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < m; ++j) {
      means(c, j) = raw[k + c * m + j];
      scales(c, j) = softplus(raw[k + k * m + c * m + j]);
    }
  }
  return GaussianMixture::from_log_weights(raw.subspan(0, k), std::move(means), std::move(scales));
}

double MdnHead::nll_and_grad(std::span<const double> raw, std::span<const double> y, std::span<double> grad_raw,
                             std::span<double>) const {
  const std::size_t k = components_;
  const std::size_t m = dim_;
  if (raw.size() != raw_size() || grad_raw.size() != raw_size() || y.size() != m) {
    throw ShapeError("MDN head: raw/y/gradient dimension mismatch");
  }
  // Per-thread scratch: 1/scale and softplus derivative per (component, dim),
  // then the softmax weights.
  thread_local std::vector<double> scratch;
  scratch.resize(2 * k * m + k);
  double* inv_sd = scratch.data();
  double* dsd = inv_sd + k * m;
  double* weight = dsd + k * m;

  double max_logit = raw[0];
  for (std::size_t c = 1; c < k; ++c) max_logit = std::max(max_logit, raw[c]);
  double weight_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) weight_sum += (weight[c] = std::exp(raw[c] - max_logit));
  const double logit_lse = max_logit + std::log(weight_sum);
  for (std::size_t c = 0; c < k; ++c) weight[c] /= weight_sum;

  const double* mu = raw.data() + k;
  const double* pre = raw.data() + k + k * m;
  auto terms = grad_raw.subspan(0, k);  // log-terms, then responsibilities
  for (std::size_t c = 0; c < k; ++c) {
    double t = raw[c] - logit_lse - static_cast<double>(m) * kLogSqrt2Pi;
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t i = c * m + j;
      // softplus and its derivative (sigmoid) from one exponential
      const double a = pre[i];
      const double e = std::exp(-std::abs(a));
      const double s = std::max((a > 0.0 ? a : 0.0) + std::log1p(e), std::numeric_limits<double>::min());
      inv_sd[i] = 1.0 / s;
      dsd[i] = a >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
      const double z = (y[j] - mu[i]) * inv_sd[i];
      t -= 0.5 * z * z + std::log(s);
    }
    terms[c] = t;
  }
  const double log_p = normalize_log_terms(terms);
  for (std::size_t c = 0; c < k; ++c) {
    const double r = terms[c];
    grad_raw[c] = weight[c] - r;
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t i = c * m + j;
      const double diff = y[j] - mu[i];
      const double iv = inv_sd[i];
      grad_raw[k + i] = -r * diff * iv * iv;
      // d(-log N)/ds = 1/s - diff^2/s^3, chained through softplus' = sigmoid.
      grad_raw[k + k * m + i] = r * iv * (1.0 - diff * diff * iv * iv) * dsd[i];
    }
  }
  return -log_p;
}

KmnHead::KmnHead(Matrix centers, std::vector<double> log_scales, bool trainable_scales)
    : centers_(std::move(centers)), log_scales_(std::move(log_scales)), trainable_(trainable_scales) {
  if (centers_.rows() == 0 || centers_.cols() == 0) throw ConfigError("KMN head needs at least one center");
  if (log_scales_.empty()) throw ConfigError("KMN head needs at least one scale");
}

GaussianMixture KmnHead::mixture(std::span<const double> raw) const { return kmn_head(raw, centers_, log_scales_); }

double KmnHead::nll_and_grad(std::span<const double> raw, std::span<const double> y, std::span<double> grad_raw,
                             std::span<double> grad_extra) const {
  const std::size_t n_centers = centers_.rows();
  const std::size_t n_scales = log_scales_.size();
  const std::size_t m = centers_.cols();
  const std::size_t k = n_centers * n_scales;
  if (raw.size() != k || grad_raw.size() != k || y.size() != m) {
    throw ShapeError("KMN head: raw/y/gradient dimension mismatch");
  }
  const double logit_lse = log_sum_exp(raw);
  double inv_var[16];
  std::vector<double> inv_var_heap;
  double* iv = inv_var;
  if (n_scales > 16) {
    inv_var_heap.resize(n_scales);
    iv = inv_var_heap.data();
  }
  for (std::size_t s = 0; s < n_scales; ++s) iv[s] = std::exp(-2.0 * log_scales_[s]);
  std::vector<double> dist2(n_centers);
  for (std::size_t c = 0; c < n_centers; ++c) dist2[c] = squared_distance(y, centers_.row(c));
  const double dm = static_cast<double>(m);
  auto& terms = grad_raw;  // reuse as scratch for log-terms then responsibilities
  for (std::size_t c = 0; c < n_centers; ++c) {
    for (std::size_t s = 0; s < n_scales; ++s) {
      terms[c * n_scales + s] =
          raw[c * n_scales + s] - logit_lse - dm * (kLogSqrt2Pi + log_scales_[s]) - 0.5 * dist2[c] * iv[s];
    }
  }
  const double log_p = normalize_log_terms(terms);
  for (std::size_t c = 0; c < n_centers; ++c) {
    for (std::size_t s = 0; s < n_scales; ++s) {
      const std::size_t idx = c * n_scales + s;
      const double r = terms[idx];
      if (trainable_) {
        // d(-log N)/d(log sigma) = m - |y - mu|^2 / sigma^2
        grad_extra[s] += r * (dm - dist2[c] * iv[s]);
      }
      grad_raw[idx] = std::exp(raw[idx] - logit_lse) - r;
    }
  }
  return -log_p;
}

GaussianMixture mdn_head(std::span<const double> raw, std::size_t components, std::size_t y_dim) {
  return MdnHead(components, y_dim).mixture(raw);
}

GaussianMixture kmn_head(std::span<const double> logits, const Matrix& centers, std::span<const double> log_scales) {
  const std::size_t n_scales = log_scales.size();
  const std::size_t k = centers.rows() * n_scales;
  if (logits.size() != k) {
    throw ShapeError("KMN head expects " + std::to_string(k) + " logits, got " + std::to_string(logits.size()));
  }
  const std::size_t m = centers.cols();
  Matrix means(k, m);
  Matrix scales(k, m);
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    for (std::size_t s = 0; s < n_scales; ++s) {
      const double sd = std::max(std::exp(log_scales[s]), std::numeric_limits<double>::min());
      for (std::size_t j = 0; j < m; ++j) {
        means(c * n_scales + s, j) = centers(c, j);
        scales(c * n_scales + s, j) = sd;
      }
    }
  }
  return GaussianMixture::from_log_weights(logits, std::move(means), std::move(scales));
}

}  // namespace cde
