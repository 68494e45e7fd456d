#include "cde/mlp.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "cde/errors.hpp"

namespace cde {

namespace {

void check_sizes(const std::vector<std::size_t>& sizes) {
  if (sizes.size() < 2) throw ConfigError("Mlp needs at least input and output layer sizes");
  for (auto s : sizes) {
    if (s == 0) throw ConfigError("Mlp layer sizes must be positive");
  }
}

}  // namespace

Mlp::Mlp(std::vector<std::size_t> layer_sizes, bool weight_norm, std::uint64_t seed)
    : layer_sizes_(std::move(layer_sizes)), weight_norm_(weight_norm) {
  check_sizes(layer_sizes_);
  build_layout();
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& lo = layers_[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(lo.in + lo.out));
    std::uniform_real_distribution<double> uni(-limit, limit);
    auto v = direction(l);
    auto g = gain(l);
    for (std::size_t i = 0; i < lo.out; ++i) {
      double norm2 = 0.0;
      // A zero row would break the normalization; redraw (probability zero in practice).
      do {
        norm2 = 0.0;
        for (std::size_t j = 0; j < lo.in; ++j) {
          const double w = uni(rng);
          v[i * lo.in + j] = w;
          norm2 += w * w;
        }
      } while (norm2 == 0.0);
      g[i] = std::sqrt(norm2);
    }
  }
}

Mlp::Mlp(std::vector<std::size_t> layer_sizes, bool weight_norm, std::vector<double> params)
    : layer_sizes_(std::move(layer_sizes)), weight_norm_(weight_norm) {
  check_sizes(layer_sizes_);
  build_layout();
  if (params.size() != params_.size()) {
    throw ShapeError("Mlp parameter vector has length " + std::to_string(params.size()) +
                     ", layout needs " + std::to_string(params_.size()));
  }
  params_ = std::move(params);
  validate();
}

void Mlp::build_layout() {
  layers_.clear();
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
    LayerOffsets lo;
    lo.in = layer_sizes_[l];
    lo.out = layer_sizes_[l + 1];
    lo.direction = offset;
    offset += lo.in * lo.out;
    lo.gain = offset;
    offset += lo.out;
    lo.bias = offset;
    offset += lo.out;
    layers_.push_back(lo);
  }
  params_.assign(offset, 0.0);
}

void Mlp::validate() const {
  for (double p : params_) {
    if (!std::isfinite(p)) throw NumericalError("Mlp parameters must be finite");
  }
  if (!weight_norm_) return;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto v = direction(l);
    const auto& lo = layers_[l];
    for (std::size_t i = 0; i < lo.out; ++i) {
      double norm2 = 0.0;
      for (std::size_t j = 0; j < lo.in; ++j) norm2 += v[i * lo.in + j] * v[i * lo.in + j];
      if (norm2 <= 0.0) {
        throw NumericalError("weight-normalized layer " + std::to_string(l) + " has a zero direction row");
      }
    }
  }
}

std::span<double> Mlp::direction(std::size_t l) {
  return {params_.data() + layers_[l].direction, layers_[l].in * layers_[l].out};
}
std::span<double> Mlp::gain(std::size_t l) { return {params_.data() + layers_[l].gain, layers_[l].out}; }
std::span<double> Mlp::bias(std::size_t l) { return {params_.data() + layers_[l].bias, layers_[l].out}; }
std::span<const double> Mlp::direction(std::size_t l) const {
  return {params_.data() + layers_[l].direction, layers_[l].in * layers_[l].out};
}
std::span<const double> Mlp::gain(std::size_t l) const {
  return {params_.data() + layers_[l].gain, layers_[l].out};
}
std::span<const double> Mlp::bias(std::size_t l) const {
  return {params_.data() + layers_[l].bias, layers_[l].out};
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  MlpPass pass(*this);
  const auto out = pass.forward(x);
  return {out.begin(), out.end()};
}

std::vector<double> Mlp::backward(std::span<const double> x, std::span<const double> grad_out) const {
  MlpPass pass(*this);
  pass.forward(x);
  pass.backward(grad_out);
  std::vector<double> grad(parameter_count());
  pass.gradient(grad);
  return grad;
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto v = direction(l);
    const auto g = gain(l);
    const auto b = bias(l);
    layers.push_back({{"V", std::vector<double>(v.begin(), v.end())},
                      {"g", std::vector<double>(g.begin(), g.end())},
                      {"b", std::vector<double>(b.begin(), b.end())}});
  }
  return {{"layer_sizes", layer_sizes_}, {"weight_norm", weight_norm_}, {"layers", layers}};
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  auto sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
  const bool wn = j.at("weight_norm").get<bool>();
  const auto& layers = j.at("layers");
  if (layers.size() + 1 != sizes.size()) throw ParseError("Mlp JSON: layer count does not match layer_sizes");
  std::vector<double> params;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto v = layers[l].at("V").get<std::vector<double>>();
    const auto g = layers[l].at("g").get<std::vector<double>>();
    const auto b = layers[l].at("b").get<std::vector<double>>();
    if (v.size() != sizes[l] * sizes[l + 1] || g.size() != sizes[l + 1] || b.size() != sizes[l + 1]) {
      throw ParseError("Mlp JSON: layer " + std::to_string(l) + " array sizes do not match layer_sizes");
    }
    params.insert(params.end(), v.begin(), v.end());
    params.insert(params.end(), g.begin(), g.end());
    params.insert(params.end(), b.begin(), b.end());
  }
  return Mlp(std::move(sizes), wn, std::move(params));
}

// ---------------------------------------------------------------------------

MlpPass::MlpPass(const Mlp& net) : net_(&net) {
  const auto n = net.num_layers();
  weights_.resize(n);
  row_norms_.resize(n);
  weight_grad_.resize(n);
  bias_grad_.resize(n);
  activations_.resize(n + 1);
  std::size_t widest = 0;
  for (std::size_t l = 0; l < n; ++l) {
    const auto& lo = net.layer(l);
    weights_[l].resize(lo.in * lo.out);
    row_norms_[l].resize(lo.out);
    weight_grad_[l].assign(lo.in * lo.out, 0.0);
    bias_grad_[l].assign(lo.out, 0.0);
    widest = std::max({widest, lo.in, lo.out});
  }
  for (std::size_t l = 0; l <= n; ++l) activations_[l].resize(net.layer_sizes()[l]);
  weights_t_.resize(n);
  for (std::size_t l = 0; l < n; ++l) weights_t_[l].resize(weights_[l].size());
  delta_.resize(widest);
  delta_prev_.resize(widest);
  refresh();
}

void MlpPass::refresh() {
  for (std::size_t l = 0; l < net_->num_layers(); ++l) {
    const auto& lo = net_->layer(l);
    const auto v = net_->direction(l);
    const auto g = net_->gain(l);
    auto& w = weights_[l];
    for (std::size_t i = 0; i < lo.out; ++i) {
      const double* vi = v.data() + i * lo.in;
      if (net_->weight_norm()) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < lo.in; ++j) norm2 += vi[j] * vi[j];
        const double norm = std::sqrt(norm2);
        if (!(norm > 0.0)) throw NumericalError("weight-normalized row has zero norm");
        row_norms_[l][i] = norm;
        const double scale = g[i] / norm;
        for (std::size_t j = 0; j < lo.in; ++j) w[i * lo.in + j] = scale * vi[j];
      } else {
        row_norms_[l][i] = 1.0;
        for (std::size_t j = 0; j < lo.in; ++j) w[i * lo.in + j] = vi[j];
      }
    }
    auto& wt = weights_t_[l];
    for (std::size_t i = 0; i < lo.out; ++i) {
      for (std::size_t j = 0; j < lo.in; ++j) wt[j * lo.out + i] = w[i * lo.in + j];
    }
  }
}

std::span<const double> MlpPass::forward(std::span<const double> x) {
  if (x.size() != net_->input_size()) {
    throw ShapeError("Mlp input has length " + std::to_string(x.size()) + ", expected " +
                     std::to_string(net_->input_size()));
  }
  std::copy(x.begin(), x.end(), activations_[0].begin());
  const auto n = net_->num_layers();
  for (std::size_t l = 0; l < n; ++l) {
    const auto& lo = net_->layer(l);
    const auto b = net_->bias(l);
    const double* __restrict wt = weights_t_[l].data();
    const double* __restrict in = activations_[l].data();
    double* __restrict out = activations_[l + 1].data();
    std::copy(b.begin(), b.end(), out);
    // Column sweep over the transposed weights keeps the inner loop free of
    // reductions.
    for (std::size_t j = 0; j < lo.in; ++j) {
      const double aj = in[j];
      const double* __restrict col = wt + j * lo.out;
      for (std::size_t i = 0; i < lo.out; ++i) out[i] += col[i] * aj;
    }
    if (l + 1 < n) {
      for (std::size_t i = 0; i < lo.out; ++i) out[i] = std::tanh(out[i]);
    }
  }
  return activations_[n];
}

void MlpPass::backward(std::span<const double> grad_out) {
  if (grad_out.size() != net_->output_size()) {
    throw ShapeError("Mlp grad_out has length " + std::to_string(grad_out.size()) + ", expected " +
                     std::to_string(net_->output_size()));
  }
  std::copy(grad_out.begin(), grad_out.end(), delta_.begin());
  double* __restrict delta = delta_.data();
  double* __restrict prev = delta_prev_.data();
  for (std::size_t l = net_->num_layers(); l-- > 0;) {
    const auto& lo = net_->layer(l);
    const double* __restrict in = activations_[l].data();
    double* __restrict dw = weight_grad_[l].data();
    double* __restrict db = bias_grad_[l].data();
    for (std::size_t i = 0; i < lo.out; ++i) db[i] += delta[i];
    for (std::size_t i = 0; i < lo.out; ++i) {
      const double d = delta[i];
      double* __restrict dwi = dw + i * lo.in;
      for (std::size_t j = 0; j < lo.in; ++j) dwi[j] += d * in[j];
    }
    if (l == 0) break;
    const double* __restrict w = weights_[l].data();
    std::fill(prev, prev + lo.in, 0.0);
    for (std::size_t i = 0; i < lo.out; ++i) {
      const double d = delta[i];
      const double* __restrict wi = w + i * lo.in;
      for (std::size_t j = 0; j < lo.in; ++j) prev[j] += wi[j] * d;
    }
    // tanh'(z) = 1 - tanh(z)^2, with a_l = tanh(z_l) for hidden layers.
    for (std::size_t j = 0; j < lo.in; ++j) prev[j] *= 1.0 - in[j] * in[j];
    std::swap(delta, prev);
  }
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

}  // namespace

std::span<const double> MlpPass::forward_batch(std::span<const double> x, std::size_t rows) {
  const std::size_t in0 = net_->input_size();
  if (rows == 0 || x.size() != rows * in0) throw ShapeError("Mlp batch input has the wrong length");
  const auto n = net_->num_layers();
  batch_rows_ = rows;
  batch_act_.resize(n + 1);
  batch_act_[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < n; ++l) {
    const auto& lo = net_->layer(l);
    batch_act_[l + 1].resize(rows * lo.out);
    ConstMapMat a(batch_act_[l].data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(lo.in));
    ConstMapMat w(weights_[l].data(), static_cast<Eigen::Index>(lo.out), static_cast<Eigen::Index>(lo.in));
    const auto b = net_->bias(l);
    Eigen::Map<const Eigen::RowVectorXd> bias(b.data(), static_cast<Eigen::Index>(lo.out));
    MapMat z(batch_act_[l + 1].data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(lo.out));
    z.noalias() = a * w.transpose();
    z.rowwise() += bias;
    if (l + 1 < n) {
      for (double& v : batch_act_[l + 1]) v = std::tanh(v);
    }
  }
  return batch_act_[n];
}

void MlpPass::backward_batch(std::span<const double> grad_out) {
  const auto rows = static_cast<Eigen::Index>(batch_rows_);
  if (batch_rows_ == 0 || grad_out.size() != batch_rows_ * net_->output_size()) {
    throw ShapeError("Mlp batch gradient does not match the last forward_batch");
  }
  batch_delta_.assign(grad_out.begin(), grad_out.end());
  for (std::size_t l = net_->num_layers(); l-- > 0;) {
    const auto& lo = net_->layer(l);
    const auto in = static_cast<Eigen::Index>(lo.in);
    const auto out = static_cast<Eigen::Index>(lo.out);
    ConstMapMat d(batch_delta_.data(), rows, out);
    ConstMapMat a(batch_act_[l].data(), rows, in);
    MapMat dw(weight_grad_[l].data(), out, in);
    Eigen::Map<Eigen::RowVectorXd> db(bias_grad_[l].data(), out);
    dw.noalias() += d.transpose() * a;
    db += d.colwise().sum();
    if (l == 0) break;
    batch_delta_prev_.resize(batch_rows_ * lo.in);
    MapMat prev(batch_delta_prev_.data(), rows, in);
    ConstMapMat w(weights_[l].data(), out, in);
    prev.noalias() = d * w;
    // tanh'(z) = 1 - tanh(z)^2
    prev.array() *= 1.0 - a.array().square();
    batch_delta_.swap(batch_delta_prev_);
  }
}

void MlpPass::zero_grad() {
  for (auto& g : weight_grad_) std::fill(g.begin(), g.end(), 0.0);
  for (auto& g : bias_grad_) std::fill(g.begin(), g.end(), 0.0);
}

void MlpPass::gradient(std::span<double> out) const {
  if (out.size() != net_->parameter_count()) throw ShapeError("gradient buffer has wrong length");
  for (std::size_t l = 0; l < net_->num_layers(); ++l) {
    const auto& lo = net_->layer(l);
    const auto v = net_->direction(l);
    const auto g = net_->gain(l);
    const auto& dw = weight_grad_[l];
    double* dv = out.data() + lo.direction;
    double* dg = out.data() + lo.gain;
    double* db = out.data() + lo.bias;
    for (std::size_t i = 0; i < lo.out; ++i) {
      db[i] = bias_grad_[l][i];
      const double* vi = v.data() + i * lo.in;
      const double* dwi = dw.data() + i * lo.in;
      double* dvi = dv + i * lo.in;
      if (!net_->weight_norm()) {
        dg[i] = 0.0;
        for (std::size_t j = 0; j < lo.in; ++j) dvi[j] = dwi[j];
        continue;
      }
      // W_ij = g_i V_ij / n_i  =>  dg_i = <dW_i, V_i> / n_i,
      // dV_i = (g_i / n_i) (dW_i - dg_i V_i / n_i).
      const double norm = row_norms_[l][i];
      double proj = 0.0;
      for (std::size_t j = 0; j < lo.in; ++j) proj += dwi[j] * vi[j];
      const double dgi = proj / norm;
      dg[i] = dgi;
      const double scale = g[i] / norm;
      for (std::size_t j = 0; j < lo.in; ++j) dvi[j] = scale * (dwi[j] - dgi * vi[j] / norm);
    }
  }
}

}  // namespace cde
