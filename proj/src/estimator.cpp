#include "cde/estimator.hpp"

#include <cmath>
#include <vector>

#include "cde/errors.hpp"

namespace cde {

double ConditionalDensity::pdf(std::span<const double> x, std::span<const double> y) const {
  return std::exp(log_pdf(x, y));
}

GaussianMixture MixtureEstimator::conditional_density(std::span<const double> x) const {
  if (!fitted()) throw StateError(kind() + " estimator queried before fit");
  const auto& s = stats();
  if (x.size() != s.mu_x.size()) {
    throw ShapeError("estimator expects x of dimension " + std::to_string(s.mu_x.size()) + ", got " +
                     std::to_string(x.size()));
  }
  std::vector<double> xn(x.size());
  s.normalize_x(x, xn);
  return normalized_density(xn).linear_transform(s.mu_y, s.sigma_y);
}

double MixtureEstimator::log_pdf(std::span<const double> x, std::span<const double> y) const {
  return conditional_density(x).log_pdf(y);
}

Interval MixtureEstimator::support(std::span<const double> x, std::size_t axis) const {
  return conditional_density(x).support(axis);
}

std::optional<GaussianMixture> MixtureEstimator::mixture(std::span<const double> x) const {
  return conditional_density(x);
}

}  // namespace cde
