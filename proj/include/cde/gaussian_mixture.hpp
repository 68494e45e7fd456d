#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cde/matrix.hpp"
#include "cde/quadrature.hpp"
#include "cde/random.hpp"
#include "json.hpp"

namespace cde {

struct MomentReport {
  std::vector<double> mean;
  Matrix covariance;
  // Present only for univariate densities.
  std::optional<double> skewness;
  std::optional<double> excess_kurtosis;
  std::vector<std::string> warnings;

  std::vector<double> std_dev() const;
};

// Mixture of K axis-aligned Gaussians in m dimensions.
//
// Invariants (checked on construction): weights are nonnegative and sum to one
// within 1e-12, scales are strictly positive, every component has dimension m.
class GaussianMixture {
 public:
  GaussianMixture(std::vector<double> weights, Matrix means, Matrix scales);

  // Softmax of unnormalized log-weights, computed stably.
  static GaussianMixture from_log_weights(std::span<const double> log_weights, Matrix means,
                                          Matrix scales);

  std::size_t components() const { return weights_.size(); }
  std::size_t dim() const { return means_.cols(); }

  std::span<const double> weights() const { return weights_; }
  const Matrix& means() const { return means_; }
  const Matrix& scales() const { return scales_; }
  double weight(std::size_t k) const { return weights_[k]; }
  std::span<const double> mean(std::size_t k) const { return means_.row(k); }
  std::span<const double> scale(std::size_t k) const { return scales_.row(k); }

  double log_pdf(std::span<const double> y) const;
  double pdf(std::span<const double> y) const;
  double log_pdf(double y) const;
  double pdf(double y) const;

  // Component log-densities plus log-weights (log w_k + log N_k(y)).
  void component_log_terms(std::span<const double> y, std::span<double> out) const;

  // n draws as rows of an n x m matrix: categorical component, then diagonal Gaussian.
  Matrix sample(Rng& rng, std::size_t n) const;

  // Mixture of z = a + diag(b) y; b must be strictly positive.
  GaussianMixture linear_transform(std::span<const double> shift, std::span<const double> scale) const;

  // Mean and covariance from the parameters directly.
  MomentReport closed_form_moments() const;

  // [min_k(mu_k - n_sigma s_k), max_k(mu_k + n_sigma s_k)] along one axis,
  // ignoring components whose weight is below `weight_floor`.
  Interval support(std::size_t axis = 0, double n_sigma = 10.0, double weight_floor = 1e-14) const;

  nlohmann::json to_json() const;
  static GaussianMixture from_json(const nlohmann::json& j);

 private:
  std::vector<double> weights_;
  Matrix means_;
  Matrix scales_;
  std::vector<double> log_weights_;
  std::vector<double> log_norm_;  // -sum_j log(s_kj) - m/2 log(2 pi)
};

double normal_pdf(double y, double mean, double sd);
double normal_log_pdf(double y, double mean, double sd);
double normal_cdf(double z);

// log(sum(exp(v))) with max subtraction; -inf for empty or all -inf input.
double log_sum_exp(std::span<const double> v);

}  // namespace cde
