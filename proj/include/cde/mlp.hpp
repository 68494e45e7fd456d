#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

namespace cde {

// Feed-forward network with tanh hidden layers and a linear output layer.
//
// Each layer stores a direction matrix V (out x in, row-major), a gain vector
// g and a bias vector b. With weight normalization enabled the effective
// weight row i is g_i * V_i / |V_i|; without it the effective weights are V
// and g is carried along untouched.
//
// All parameters live in one flat vector, layer-major: [V_0, g_0, b_0, V_1, ...].
class Mlp {
 public:
  struct LayerOffsets {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t direction = 0;
    std::size_t gain = 0;
    std::size_t bias = 0;
  };

  Mlp() = default;

  // Glorot-uniform directions, gains set to the initial row norms, zero biases.
  Mlp(std::vector<std::size_t> layer_sizes, bool weight_norm, std::uint64_t seed);

  // Adopts an existing flat parameter vector.
  Mlp(std::vector<std::size_t> layer_sizes, bool weight_norm, std::vector<double> params);

  const std::vector<std::size_t>& layer_sizes() const { return layer_sizes_; }
  std::size_t input_size() const { return layer_sizes_.front(); }
  std::size_t output_size() const { return layer_sizes_.back(); }
  std::size_t num_layers() const { return layers_.size(); }
  bool weight_norm() const { return weight_norm_; }
  const LayerOffsets& layer(std::size_t i) const { return layers_[i]; }

  std::size_t parameter_count() const { return params_.size(); }
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }

  std::span<double> direction(std::size_t layer);
  std::span<double> gain(std::size_t layer);
  std::span<double> bias(std::size_t layer);
  std::span<const double> direction(std::size_t layer) const;
  std::span<const double> gain(std::size_t layer) const;
  std::span<const double> bias(std::size_t layer) const;

  std::vector<double> forward(std::span<const double> x) const;

  // Gradient of dot(grad_out, forward(x)) with respect to the flat parameters.
  std::vector<double> backward(std::span<const double> x, std::span<const double> grad_out) const;

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

 private:
  void build_layout();
  void validate() const;

  std::vector<std::size_t> layer_sizes_;
  bool weight_norm_ = true;
  std::vector<LayerOffsets> layers_;
  std::vector<double> params_;
};

// Scratch state for repeated passes through one network while its parameters
// stay fixed (one minibatch). Effective weights are computed once in refresh();
// backward() accumulates gradients for the most recent forward() input.
class MlpPass {
 public:
  explicit MlpPass(const Mlp& net);

  // Recomputes effective weights; call after the network parameters change.
  void refresh();

  std::span<const double> forward(std::span<const double> x);
  void backward(std::span<const double> grad_out);

  // Same as forward/backward over `rows` inputs stored row-major; the output
  // (rows x out, row-major) stays valid until the next forward call.
  std::span<const double> forward_batch(std::span<const double> x, std::size_t rows);
  void backward_batch(std::span<const double> grad_out);

  void zero_grad();
  // Writes the accumulated gradient in flat parameter layout.
  void gradient(std::span<double> out) const;

  const Mlp& net() const { return *net_; }

 private:
  const Mlp* net_;
  std::vector<std::vector<double>> weights_;      // effective W per layer
  std::vector<std::vector<double>> weights_t_;    // W transposed (in x out)
  std::vector<std::vector<double>> row_norms_;    // |V_i| per layer
  std::vector<std::vector<double>> activations_;  // a_0 = x, ..., a_L = output
  std::vector<std::vector<double>> weight_grad_;  // dL/dW per layer
  std::vector<std::vector<double>> bias_grad_;
  std::vector<double> delta_;
  std::vector<double> delta_prev_;
  std::size_t batch_rows_ = 0;
  std::vector<std::vector<double>> batch_act_;  // rows x size per layer
  std::vector<double> batch_delta_;
  std::vector<double> batch_delta_prev_;
};

}  // namespace cde
