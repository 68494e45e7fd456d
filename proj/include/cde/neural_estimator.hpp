#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cde/dataset.hpp"
#include "cde/estimator.hpp"
#include "cde/heads.hpp"
#include "cde/mlp.hpp"
#include "cde/random.hpp"
#include "json.hpp"

namespace cde {

// Defaults follow the standard MDN configuration: two tanh layers of 16,
// 1000 epochs of Adam at 1e-3 on minibatches of 200, K = 20, noise
// (0.2, 0.1), weight and data normalization on.
struct MdnConfig {
  std::size_t n_components = 20;
  std::vector<std::size_t> hidden_sizes = {16, 16};
  std::size_t epochs = 1000;
  double learning_rate = 1e-3;
  std::size_t batch_size = 200;
  double noise_std_x = 0.2;
  double noise_std_y = 0.1;
  bool weight_norm = true;
  bool data_norm = true;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys raise ConfigError.
  static MdnConfig from_json(const nlohmann::json& j);
};

// KMN: n_components counts all (center, scale) pairs, so the default 50 with
// two scale inits places 25 K-means centers.
struct KmnConfig : MdnConfig {
  std::vector<double> scale_inits = {0.7, 0.3};
  bool trainable_scales = true;

  KmnConfig() { n_components = 50; }

  std::size_t n_centers() const { return n_components / scale_inits.size(); }
  void validate() const;
  nlohmann::json to_json() const;
  static KmnConfig from_json(const nlohmann::json& j);
};

// x ~ x + N(0, eta_x^2), y ~ y + N(0, eta_y^2), element-wise and independent.
std::pair<Matrix, Matrix> perturb_batch(const Matrix& x, const Matrix& y, double eta_x, double eta_y, Rng& rng);

struct LossAndGrad {
  double loss = 0.0;
  // Network parameters followed by the head's extra parameters.
  std::vector<double> grad;
};

// Summed negative log-likelihood over the batch rows and its gradient.
LossAndGrad nll_loss_and_grad(const Mlp& net, const MixtureHead& head, const Matrix& x, const Matrix& y);

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

class NeuralEstimator final : public MixtureEstimator {
 public:
  enum class Kind { Mdn, Kmn };

  explicit NeuralEstimator(MdnConfig config);
  explicit NeuralEstimator(KmnConfig config);

  // Shuffled minibatch Adam on noise-perturbed (normalized) data.
  void fit(const Dataset& data, const EpochCallback& on_epoch = {});

  Kind network_kind() const { return kind_; }
  std::string kind() const override { return kind_ == Kind::Mdn ? "mdn" : "kmn"; }
  bool fitted() const override { return fitted_; }
  const NormalizationStats& stats() const override { return stats_; }
  GaussianMixture normalized_density(std::span<const double> x_norm) const override;

  const Mlp& network() const { return net_; }
  const MixtureHead& head() const { return *head_; }
  const std::vector<double>& loss_history() const { return loss_history_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const MdnConfig& mdn_config() const { return mdn_; }
  const KmnConfig& kmn_config() const { return kmn_; }

  // Network parameters followed by trainable head parameters.
  std::vector<double> parameter_vector() const;

  nlohmann::json to_json() const override;
  static std::unique_ptr<NeuralEstimator> from_json(const nlohmann::json& j);

 private:
  void initialize(const Dataset& normalized);
  const MdnConfig& common() const { return kind_ == Kind::Mdn ? mdn_ : static_cast<const MdnConfig&>(kmn_); }

  Kind kind_;
  MdnConfig mdn_;
  KmnConfig kmn_;
  bool fitted_ = false;
  NormalizationStats stats_;
  Mlp net_;
  std::unique_ptr<MixtureHead> head_;
  std::vector<double> loss_history_;
  std::vector<std::string> warnings_;
};

std::unique_ptr<NeuralEstimator> fit_mdn(const MdnConfig& config, const Dataset& data,
                                         const EpochCallback& on_epoch = {});
std::unique_ptr<NeuralEstimator> fit_kmn(const KmnConfig& config, const Dataset& data,
                                         const EpochCallback& on_epoch = {});

// Second-order view of input noise: compares a Monte Carlo estimate of
// E[L(z0 + xi)], xi ~ N(0, eta^2 I), against L(z0) + eta^2/2 tr(H), with H
// from central finite differences.
struct TaylorCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double mc_standard_error = 0.0;
  double loss_at_point = 0.0;
  double hessian_trace = 0.0;
};

TaylorCheck noise_reg_taylor_check(const std::function<double(std::span<const double>)>& loss,
                                   std::span<const double> point, double eta, std::size_t n_mc,
                                   std::uint64_t seed = 0, double fd_step = 1e-4);

}  // namespace cde
