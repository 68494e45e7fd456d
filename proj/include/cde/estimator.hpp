#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "cde/dataset.hpp"
#include "cde/gaussian_mixture.hpp"
#include "cde/quadrature.hpp"
#include "json.hpp"

namespace cde {

// Anything exposing a conditional density p(y | x): fitted estimators and the
// exact simulator conditionals alike.
class ConditionalDensity {
 public:
  virtual ~ConditionalDensity() = default;

  virtual std::size_t x_dim() const = 0;
  virtual std::size_t y_dim() const = 0;
  virtual double log_pdf(std::span<const double> x, std::span<const double> y) const = 0;
  double pdf(std::span<const double> x, std::span<const double> y) const;

  // Interval holding essentially all the mass of p(y_axis | x).
  virtual Interval support(std::span<const double> x, std::size_t axis = 0) const = 0;

  // The conditional as a Gaussian mixture, when it has that form.
  virtual std::optional<GaussianMixture> mixture(std::span<const double> /*x*/) const { return std::nullopt; }
};

class Estimator : public ConditionalDensity {
 public:
  virtual std::string kind() const = 0;
  virtual nlohmann::json to_json() const = 0;
};

// Estimators whose conditional is a diagonal Gaussian mixture fitted on
// normalized data. The normalized-space mixture is mapped back through the
// affine change of variable y = mu_y + diag(sigma_y) y~.
class MixtureEstimator : public Estimator {
 public:
  virtual bool fitted() const { return true; }
  virtual const NormalizationStats& stats() const = 0;

  // Mixture over normalized y for an already-normalized x.
  virtual GaussianMixture normalized_density(std::span<const double> x_norm) const = 0;

  // Mixture over original-scale y for an original-scale x.
  GaussianMixture conditional_density(std::span<const double> x) const;

  std::size_t x_dim() const override { return stats().mu_x.size(); }
  std::size_t y_dim() const override { return stats().mu_y.size(); }
  double log_pdf(std::span<const double> x, std::span<const double> y) const override;
  Interval support(std::span<const double> x, std::size_t axis = 0) const override;
  std::optional<GaussianMixture> mixture(std::span<const double> x) const override;
};

}  // namespace cde
