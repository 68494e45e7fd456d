#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cde/dataset.hpp"
#include "cde/estimator.hpp"
#include "cde/evaluation.hpp"
#include "json.hpp"

namespace cde {

// h = 1.06 sigma N^(-1 / (4 + d))
double silverman_bandwidth(double std_dev, double n, std::size_t dim);

// Kernel baselines work on normalized data and hold their training set. Their
// conditionals are Gaussian mixtures; components whose weight falls below
// kKernelWeightFloor times the largest weight are dropped before
// renormalizing.
inline constexpr double kKernelWeightFloor = 1e-15;

// ------------------------------------------------------------------- CKDE

enum class BandwidthMode { RuleOfThumb, LooCv };

struct CkdeConfig {
  BandwidthMode mode = BandwidthMode::RuleOfThumb;
  NelderMeadOptions optimizer = {.max_iterations = 500, .f_tol = 1e-8, .x_tol = 1e-6, .initial_step = 0.25};

  nlohmann::json to_json() const;
  static CkdeConfig from_json(const nlohmann::json& j);
};

// p(y | x) = sum_i K_hx(x - x_i) K_hy(y - y_i) / sum_i K_hx(x - x_i), product
// Gaussian kernels.
class Ckde final : public MixtureEstimator {
 public:
  Ckde(NormalizationStats stats, Dataset normalized, std::vector<double> h_x, std::vector<double> h_y,
       BandwidthMode mode);

  std::string kind() const override { return "ckde"; }
  const NormalizationStats& stats() const override { return stats_; }
  GaussianMixture normalized_density(std::span<const double> x_norm) const override;

  const std::vector<double>& bandwidth_x() const { return h_x_; }
  const std::vector<double>& bandwidth_y() const { return h_y_; }
  BandwidthMode mode() const { return mode_; }
  const Dataset& training_data() const { return data_; }

  nlohmann::json to_json() const override;
  static std::unique_ptr<Ckde> from_json(const nlohmann::json& j);

 private:
  NormalizationStats stats_;
  Dataset data_;
  std::vector<double> h_x_, h_y_;
  BandwidthMode mode_;
};

// Mean leave-one-out log p(y_i | x_i) on normalized data for the given
// bandwidths (x dims first, then y dims).
double ckde_loo_log_likelihood(const Dataset& normalized, std::span<const double> bandwidths);

std::unique_ptr<Ckde> fit_ckde(const CkdeConfig& config, const Dataset& data);

// ------------------------------------------------------------------- NKDE

enum class NeighborWeighting { Uniform, Distance };

struct NkdeConfig {
  double epsilon = 0.4;
  NeighborWeighting weighting = NeighborWeighting::Uniform;

  void validate() const;
  nlohmann::json to_json() const;
  static NkdeConfig from_json(const nlohmann::json& j);
};

// KDE over the y values of training points whose normalized x lies within
// epsilon of the query. Distance weighting gives neighbor j weight
// proportional to 1 - |x_j - x| / epsilon, so closer points count more.
class Nkde final : public MixtureEstimator {
 public:
  Nkde(NormalizationStats stats, Dataset normalized, NkdeConfig config, std::vector<double> h_y);

  std::string kind() const override { return "nkde"; }
  const NormalizationStats& stats() const override { return stats_; }
  GaussianMixture normalized_density(std::span<const double> x_norm) const override;

  const std::vector<double>& bandwidth() const { return h_; }
  const NkdeConfig& config() const { return config_; }
  std::vector<std::size_t> neighbors(std::span<const double> x_norm) const;

  nlohmann::json to_json() const override;
  static std::unique_ptr<Nkde> from_json(const nlohmann::json& j);

 private:
  NormalizationStats stats_;
  Dataset data_;
  NkdeConfig config_;
  std::vector<double> h_;
};

// (1/N) sum_n |I(x_n, eps)| - 1, floored at 1; neighborhoods include the point itself.
double nkde_effective_sample_size(const Matrix& x, double epsilon);

std::unique_ptr<Nkde> fit_nkde(const NkdeConfig& config, const Dataset& data);

// ------------------------------------------------------------------ LSCDE

struct LscdeConfig {
  std::size_t n_centers = 1000;  // clipped to N
  double bandwidth = 0.5;
  double damping = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static LscdeConfig from_json(const nlohmann::json& j);
};

// Least-squares system for the coefficient vector:
//   H_ll' = (1/N) sum_i phi_l(x_i) phi_l'(x_i) (sqrt(pi) s)^m exp(-|v_l - v_l'|^2 / (4 s^2))
//   h_l   = (1/N) sum_i phi_l(x_i, y_i)
struct LscdeSystem {
  Matrix H;
  std::vector<double> h;
};
LscdeSystem lscde_system(const Dataset& normalized, const Matrix& centers_x, const Matrix& centers_y, double bandwidth);

// p(y | x) proportional to sum_l alpha_l exp(-|x - u_l|^2 / 2s^2) exp(-|y - v_l|^2 / 2s^2),
// normalized analytically over y.
class Lscde final : public MixtureEstimator {
 public:
  Lscde(NormalizationStats stats, Matrix centers_x, Matrix centers_y, std::vector<double> alpha, LscdeConfig config);

  std::string kind() const override { return "lscde"; }
  const NormalizationStats& stats() const override { return stats_; }
  GaussianMixture normalized_density(std::span<const double> x_norm) const override;

  const std::vector<double>& alpha() const { return alpha_; }
  const Matrix& centers_x() const { return cx_; }
  const Matrix& centers_y() const { return cy_; }
  const LscdeConfig& config() const { return config_; }

  nlohmann::json to_json() const override;
  static std::unique_ptr<Lscde> from_json(const nlohmann::json& j);

 private:
  NormalizationStats stats_;
  Matrix cx_, cy_;
  std::vector<double> alpha_;
  LscdeConfig config_;
};

std::unique_ptr<Lscde> fit_lscde(const LscdeConfig& config, const Dataset& data);

}  // namespace cde
