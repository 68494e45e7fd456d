#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cde/gaussian_mixture.hpp"
#include "cde/matrix.hpp"

namespace cde {

// Maps raw network outputs to mixture parameters and evaluates the per-sample
// negative log-likelihood with its gradient. A head may own extra trainable
// parameters (KMN log-scales) that are optimized alongside the network.
class MixtureHead {
 public:
  virtual ~MixtureHead() = default;

  virtual std::size_t raw_size() const = 0;
  virtual std::size_t y_dim() const = 0;
  virtual GaussianMixture mixture(std::span<const double> raw) const = 0;

  // Returns -log p(y | raw). Overwrites grad_raw; adds into grad_extra.
  virtual double nll_and_grad(std::span<const double> raw, std::span<const double> y, std::span<double> grad_raw,
                              std::span<double> grad_extra) const = 0;

  virtual std::size_t extra_parameter_count() const { return 0; }
  virtual std::span<double> extra_parameters() { return {}; }
};

// Mixture density network head. Raw layout: K logits, K*m means, K*m scale
// pre-activations; weights = softmax, means linear, scales = softplus.
class MdnHead final : public MixtureHead {
 public:
  MdnHead(std::size_t components, std::size_t y_dim);

  std::size_t raw_size() const override { return components_ * (1 + 2 * dim_); }
  std::size_t y_dim() const override { return dim_; }
  std::size_t components() const { return components_; }
  GaussianMixture mixture(std::span<const double> raw) const override;
  double nll_and_grad(std::span<const double> raw, std::span<const double> y, std::span<double> grad_raw,
                      std::span<double> grad_extra) const override;

  // Index of the first mean entry in the raw vector.
  std::size_t mean_offset() const { return components_; }

 private:
  std::size_t components_;
  std::size_t dim_;
};

// Kernel mixture network head. The network emits one logit per
// (center, scale) pair, center-major; component c * S + s sits at center c
// with isotropic standard deviation exp(log_scales[s]).
class KmnHead final : public MixtureHead {
 public:
  KmnHead(Matrix centers, std::vector<double> log_scales, bool trainable_scales);

  std::size_t raw_size() const override { return centers_.rows() * log_scales_.size(); }
  std::size_t y_dim() const override { return centers_.cols(); }
  GaussianMixture mixture(std::span<const double> raw) const override;
  double nll_and_grad(std::span<const double> raw, std::span<const double> y, std::span<double> grad_raw,
                      std::span<double> grad_extra) const override;

  std::size_t extra_parameter_count() const override { return trainable_ ? log_scales_.size() : 0; }
  std::span<double> extra_parameters() override {
    return trainable_ ? std::span<double>(log_scales_) : std::span<double>();
  }

  const Matrix& centers() const { return centers_; }
  const std::vector<double>& log_scales() const { return log_scales_; }
  bool trainable_scales() const { return trainable_; }

 private:
  Matrix centers_;
  std::vector<double> log_scales_;
  bool trainable_;
};

// log(1 + exp(a)) without overflow, floored at the smallest normal double so
// the result is always a valid positive scale.
double softplus(double a);

GaussianMixture mdn_head(std::span<const double> raw, std::size_t components, std::size_t y_dim);
GaussianMixture kmn_head(std::span<const double> logits, const Matrix& centers, std::span<const double> log_scales);

}  // namespace cde
