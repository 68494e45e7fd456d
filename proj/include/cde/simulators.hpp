#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cde/dataset.hpp"
#include "cde/estimator.hpp"
#include "cde/gaussian_mixture.hpp"
#include "cde/random.hpp"
#include "json.hpp"

namespace cde {

// A joint model p(x, y) with a tractable conditional p(y | x).
class Simulator : public ConditionalDensity {
 public:
  virtual std::string name() const = 0;
  virtual nlohmann::json params_json() const = 0;

  // n joint draws, deterministic given the seed.
  virtual Dataset sample(std::size_t n, std::uint64_t seed) const = 0;

  // n draws from p(y | x) as an n x y_dim matrix.
  virtual Matrix sample_conditional(std::span<const double> x, std::size_t n, Rng& rng) const = 0;

  // Empirical q-quantile of the x-marginal along one axis, from 1e5 draws made
  // with a fixed sub-seed so percentile grids never move between runs.
  double x_percentile(double q, std::size_t axis = 0) const;

 protected:
  static constexpr std::size_t kPercentileDraws = 100000;

 private:
  struct PercentileCache {
    std::once_flag once;
    std::vector<std::vector<double>> sorted;  // per axis
  };
  // Shared by copies; simulators are immutable so the draws are identical.
  std::shared_ptr<PercentileCache> cache_ = std::make_shared<PercentileCache>();
};

// y | x ~ N(x^2, (1 + x)^2) with x = |eps|, eps ~ N(0, 1).
class EconDensity final : public Simulator {
 public:
  std::string name() const override { return "econ"; }
  nlohmann::json params_json() const override { return nlohmann::json::object(); }
  std::size_t x_dim() const override { return 1; }
  std::size_t y_dim() const override { return 1; }
  double log_pdf(std::span<const double> x, std::span<const double> y) const override;
  Interval support(std::span<const double> x, std::size_t axis = 0) const override;
  Dataset sample(std::size_t n, std::uint64_t seed) const override;
  Matrix sample_conditional(std::span<const double> x, std::size_t n, Rng& rng) const override;
};

double econ_pdf(double x, double y);

struct ArmaJumpParams {
  double c = 0.1;      // long-run mean
  double alpha = 0.2;  // autoregressive factor
  double p = 0.1;      // jump probability
  double sigma = 0.05;
  std::size_t burn_in = 100;

  void validate() const;
  nlohmann::json to_json() const;
  static ArmaJumpParams from_json(const nlohmann::json& j);
};

// (1 - p) N(c(1 - alpha) + alpha x, sigma^2) + p N(alpha (x - c), (3 sigma)^2)
GaussianMixture armajump_conditional(const ArmaJumpParams& params, double x_prev);

// AR(1) with jumps; (x, y) pairs are consecutive states of one chain.
class ArmaJump final : public Simulator {
 public:
  explicit ArmaJump(ArmaJumpParams params = {});
  const ArmaJumpParams& params() const { return params_; }
  std::string name() const override { return "arma_jump"; }
  nlohmann::json params_json() const override { return params_.to_json(); }
  std::size_t x_dim() const override { return 1; }
  std::size_t y_dim() const override { return 1; }
  double log_pdf(std::span<const double> x, std::span<const double> y) const override;
  Interval support(std::span<const double> x, std::size_t axis = 0) const override;
  std::optional<GaussianMixture> mixture(std::span<const double> x) const override;
  Dataset sample(std::size_t n, std::uint64_t seed) const override;
  Matrix sample_conditional(std::span<const double> x, std::size_t n, Rng& rng) const override;

 private:
  ArmaJumpParams params_;
};

// Location a x + b, scale c x^2 + d, shape alpha_low + sigmoid(x) (alpha_high -
// alpha_low); x ~ N(0, x_std^2). The coefficient defaults keep the
// unconditional volatility of y near 0.05.
struct SkewNormalParams {
  double a = 0.05;
  double b = 0.0;
  double c = 0.05;
  double d = 0.05;
  double alpha_low = -4.0;
  double alpha_high = 0.0;
  double x_std = 0.5;

  double location(double x) const { return a * x + b; }
  double scale(double x) const { return c * x * x + d; }
  double shape(double x) const;

  void validate() const;
  nlohmann::json to_json() const;
  static SkewNormalParams from_json(const nlohmann::json& j);
};

double skewnormal_pdf(const SkewNormalParams& params, double x, double y);
double skewnormal_log_pdf(const SkewNormalParams& params, double x, double y);

class SkewNormal final : public Simulator {
 public:
  explicit SkewNormal(SkewNormalParams params = {});
  const SkewNormalParams& params() const { return params_; }
  std::string name() const override { return "skew_normal"; }
  nlohmann::json params_json() const override { return params_.to_json(); }
  std::size_t x_dim() const override { return 1; }
  std::size_t y_dim() const override { return 1; }
  double log_pdf(std::span<const double> x, std::span<const double> y) const override;
  Interval support(std::span<const double> x, std::size_t axis = 0) const override;
  Dataset sample(std::size_t n, std::uint64_t seed) const override;
  Matrix sample_conditional(std::span<const double> x, std::size_t n, Rng& rng) const override;

 private:
  SkewNormalParams params_;
};

// Joint GMM whose components factorize into independent x and y parts.
struct FactorizedGmmParams {
  std::vector<double> weights;
  Matrix x_means, x_scales;  // K x l
  Matrix y_means, y_scales;  // K x m

  // Random parameters: means U[-3, 3], scales U[0.5, 1.5], weights
  // Dirichlet(1, ..., 1).
  static FactorizedGmmParams random(std::size_t components, std::size_t x_dim, std::size_t y_dim,
                                    std::uint64_t param_seed);

  std::size_t components() const { return weights.size(); }
  void validate() const;
  nlohmann::json to_json() const;
  // Either explicit arrays or {"n_components", "x_dim", "y_dim", "param_seed"}.
  static FactorizedGmmParams from_json(const nlohmann::json& j);
};

// Mixture over y with weights proportional to w_k N(x | x-part of component k).
GaussianMixture factorized_gmm_conditional(const FactorizedGmmParams& params, std::span<const double> x);

class FactorizedGmm final : public Simulator {
 public:
  explicit FactorizedGmm(FactorizedGmmParams params = FactorizedGmmParams::random(5, 1, 1, 0));
  const FactorizedGmmParams& params() const { return params_; }
  std::string name() const override { return "gmm"; }
  nlohmann::json params_json() const override { return params_.to_json(); }
  std::size_t x_dim() const override { return params_.x_means.cols(); }
  std::size_t y_dim() const override { return params_.y_means.cols(); }
  double log_pdf(std::span<const double> x, std::span<const double> y) const override;
  Interval support(std::span<const double> x, std::size_t axis = 0) const override;
  std::optional<GaussianMixture> mixture(std::span<const double> x) const override;
  Dataset sample(std::size_t n, std::uint64_t seed) const override;
  Matrix sample_conditional(std::span<const double> x, std::size_t n, Rng& rng) const override;

 private:
  FactorizedGmmParams params_;
  GaussianMixture y_marginal_;  // used only for the support envelope
};

std::vector<std::string> simulator_names();

// Throws ConfigError for unknown names or parameters.
std::unique_ptr<Simulator> make_simulator(const std::string& name, const nlohmann::json& params = {});

// Exposes a simulator's exact conditional through the estimator interface.
class OracleEstimator final : public Estimator {
 public:
  explicit OracleEstimator(std::shared_ptr<const Simulator> sim) : sim_(std::move(sim)) {}
  const Simulator& simulator() const { return *sim_; }
  std::string kind() const override { return "oracle"; }
  std::size_t x_dim() const override { return sim_->x_dim(); }
  std::size_t y_dim() const override { return sim_->y_dim(); }
  double log_pdf(std::span<const double> x, std::span<const double> y) const override { return sim_->log_pdf(x, y); }
  Interval support(std::span<const double> x, std::size_t axis = 0) const override { return sim_->support(x, axis); }
  std::optional<GaussianMixture> mixture(std::span<const double> x) const override { return sim_->mixture(x); }
  nlohmann::json to_json() const override;
  static std::unique_ptr<OracleEstimator> from_json(const nlohmann::json& j);

 private:
  std::shared_ptr<const Simulator> sim_;
};

}  // namespace cde
