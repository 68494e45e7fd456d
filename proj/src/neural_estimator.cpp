#include "cde/neural_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "cde/adam.hpp"
#include "cde/errors.hpp"
#include "cde/kmeans.hpp"
#include "config_json.hpp"

namespace cde {

namespace {

using detail::read_key;
using detail::reject_unknown_keys;

const std::set<std::string> kMdnKeys = {"n_components", "hidden_sizes", "epochs",      "learning_rate",
                                        "batch_size",   "noise_std_x",  "noise_std_y", "weight_norm",
                                        "data_norm",    "seed"};

void read_common(const nlohmann::json& j, MdnConfig& c) {
  read_key(j, "n_components", c.n_components);
  read_key(j, "hidden_sizes", c.hidden_sizes);
  read_key(j, "epochs", c.epochs);
  read_key(j, "learning_rate", c.learning_rate);
  read_key(j, "batch_size", c.batch_size);
  read_key(j, "noise_std_x", c.noise_std_x);
  read_key(j, "noise_std_y", c.noise_std_y);
  read_key(j, "weight_norm", c.weight_norm);
  read_key(j, "data_norm", c.data_norm);
  read_key(j, "seed", c.seed);
}

std::vector<std::size_t> layer_sizes(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> sizes;
  sizes.push_back(in);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

void MdnConfig::validate() const {
  if (n_components < 1) throw ConfigError("n_components must be >= 1");
  for (auto h : hidden_sizes) {
    if (h == 0) throw ConfigError("hidden layer sizes must be positive");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(noise_std_x >= 0.0) || !(noise_std_y >= 0.0) || !std::isfinite(noise_std_x) || !std::isfinite(noise_std_y)) {
    throw ConfigError("noise standard deviations must be finite and >= 0");
  }
}

nlohmann::json MdnConfig::to_json() const {
  return {{"n_components", n_components}, {"hidden_sizes", hidden_sizes}, {"epochs", epochs},
          {"learning_rate", learning_rate}, {"batch_size", batch_size},   {"noise_std_x", noise_std_x},
          {"noise_std_y", noise_std_y},   {"weight_norm", weight_norm},   {"data_norm", data_norm},
          {"seed", seed}};
}

MdnConfig MdnConfig::from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, kMdnKeys, "MDN");
  MdnConfig c;
  read_common(j, c);
  c.validate();
  return c;
}

void KmnConfig::validate() const {
  MdnConfig::validate();
  if (scale_inits.empty()) throw ConfigError("KMN needs at least one scale init");
  for (double s : scale_inits) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("KMN scale inits must be > 0");
  }
  if (n_components % scale_inits.size() != 0) {
    throw ConfigError("KMN n_components (" + std::to_string(n_components) + ") must be divisible by the number of " +
                      "scale inits (" + std::to_string(scale_inits.size()) + ")");
  }
}

nlohmann::json KmnConfig::to_json() const {
  auto j = MdnConfig::to_json();
  j["scale_inits"] = scale_inits;
  j["trainable_scales"] = trainable_scales;
  return j;
}

KmnConfig KmnConfig::from_json(const nlohmann::json& j) {
  auto keys = kMdnKeys;
  keys.insert({"scale_inits", "trainable_scales"});
  reject_unknown_keys(j, keys, "KMN");
  KmnConfig c;
  read_common(j, c);
  read_key(j, "scale_inits", c.scale_inits);
  read_key(j, "trainable_scales", c.trainable_scales);
  c.validate();
  return c;
}

std::pair<Matrix, Matrix> perturb_batch(const Matrix& x, const Matrix& y, double eta_x, double eta_y, Rng& rng) {
  if (!(eta_x >= 0.0) || !(eta_y >= 0.0)) throw ConfigError("noise standard deviations must be >= 0");
  Matrix px = x;
  Matrix py = y;
  std::normal_distribution<double> normal(0.0, 1.0);
  if (eta_x > 0.0) {
    for (double& v : px.data()) v += eta_x * normal(rng);
  }
  if (eta_y > 0.0) {
    for (double& v : py.data()) v += eta_y * normal(rng);
  }
  return {std::move(px), std::move(py)};
}

namespace {

// Summed loss over rows of (x, y); accumulates network gradient in `pass` and
// head gradient into grad_extra.
double accumulate_batch(MlpPass& pass, const MixtureHead& head, const Matrix& x, const Matrix& y,
                        std::span<double> grad_extra, std::vector<double>& grad_raw) {
  grad_raw.resize(head.raw_size());
  double loss = 0.0;
  for (std::size_t n = 0; n < x.rows(); ++n) {
    const auto raw = pass.forward(x.row(n));
    loss += head.nll_and_grad(raw, y.row(n), grad_raw, grad_extra);
    pass.backward(grad_raw);
  }
  return loss;
}

}  // namespace

LossAndGrad nll_loss_and_grad(const Mlp& net, const MixtureHead& head, const Matrix& x, const Matrix& y) {
  if (x.rows() == 0 || x.rows() != y.rows()) throw ShapeError("loss batch must be nonempty with matching rows");
  if (x.cols() != net.input_size() || y.cols() != head.y_dim() || net.output_size() != head.raw_size()) {
    throw ShapeError("loss: network/head/batch dimensions disagree");
  }
  MlpPass pass(net);
  pass.zero_grad();
  LossAndGrad out;
  out.grad.assign(net.parameter_count() + head.extra_parameter_count(), 0.0);
  std::vector<double> grad_raw;
  std::span<double> all(out.grad);
  out.loss = accumulate_batch(pass, head, x, y, all.subspan(net.parameter_count()), grad_raw);
  pass.gradient(all.subspan(0, net.parameter_count()));
  if (!std::isfinite(out.loss)) throw TrainingDivergence("non-finite loss in batch 0");
  return out;
}

NeuralEstimator::NeuralEstimator(MdnConfig config) : kind_(Kind::Mdn), mdn_(std::move(config)) { mdn_.validate(); }

NeuralEstimator::NeuralEstimator(KmnConfig config) : kind_(Kind::Kmn), kmn_(std::move(config)) { kmn_.validate(); }

void NeuralEstimator::initialize(const Dataset& normalized) {
  const auto& cfg = common();
  const std::size_t m = normalized.y_dim();
  if (kind_ == Kind::Mdn) {
    auto head = std::make_unique<MdnHead>(cfg.n_components, m);
    net_ = Mlp(layer_sizes(normalized.x_dim(), cfg.hidden_sizes, head->raw_size()), cfg.weight_norm,
               derive_seed(cfg.seed, "init"));
    // Spread the initial component means over the normalized data range.
    auto b = net_.bias(net_.num_layers() - 1);
    const std::size_t k = cfg.n_components;
    for (std::size_t c = 0; c < k; ++c) {
      const double v = k == 1 ? 0.0 : -1.5 + 3.0 * static_cast<double>(c) / static_cast<double>(k - 1);
      for (std::size_t j = 0; j < m; ++j) b[head->mean_offset() + c * m + j] = v;
    }
    head_ = std::move(head);
  } else {
    Matrix centers = kmn_init_centers(normalized.y, kmn_.n_centers(), derive_seed(cfg.seed, "kmeans"));
    std::vector<double> log_scales;
    for (double s : kmn_.scale_inits) log_scales.push_back(std::log(s));
    head_ = std::make_unique<KmnHead>(std::move(centers), std::move(log_scales), kmn_.trainable_scales);
    net_ = Mlp(layer_sizes(normalized.x_dim(), cfg.hidden_sizes, head_->raw_size()), cfg.weight_norm,
               derive_seed(cfg.seed, "init"));
  }
}

void NeuralEstimator::fit(const Dataset& data, const EpochCallback& on_epoch) {
  const auto& cfg = common();
  warnings_.clear();
  loss_history_.clear();
  Dataset train;
  if (cfg.data_norm) {
    auto norm = normalize_fit(data);
    stats_ = std::move(norm.stats);
    train = std::move(norm.normalized);
    warnings_ = std::move(norm.warnings);
  } else {
    stats_ = NormalizationStats::identity(data.x_dim(), data.y_dim());
    train = data;
  }
  initialize(train);

  const std::size_t n = train.size();
  const std::size_t batch = std::min(cfg.batch_size, n);
  const std::size_t n_net = net_.parameter_count();
  const std::size_t n_extra = head_->extra_parameter_count();

  std::vector<double> params(n_net + n_extra);
  std::vector<double> grad(n_net + n_extra);
  AdamOptions opts;
  opts.learning_rate = cfg.learning_rate;
  AdamState adam(params.size(), opts);

  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  Rng noise_rng(derive_seed(cfg.seed, "noise"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  const std::size_t l = train.x_dim();
  const std::size_t m = train.y_dim();
  const std::size_t raw_size = head_->raw_size();
  std::vector<double> xb(batch * l);
  std::vector<double> yb(batch * m);
  std::vector<double> grad_raw(batch * raw_size);
  MlpPass pass(net_);
  std::size_t batch_index = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch, ++batch_index) {
      const std::size_t end = std::min(start + batch, n);
      const std::size_t rows = end - start;
      for (std::size_t r = 0; r < rows; ++r) {
        const auto xr = train.x.row(order[start + r]);
        const auto yr = train.y.row(order[start + r]);
        for (std::size_t j = 0; j < l; ++j) {
          xb[r * l + j] = xr[j] + (cfg.noise_std_x > 0 ? cfg.noise_std_x * normal(noise_rng) : 0.0);
        }
        for (std::size_t j = 0; j < m; ++j) {
          yb[r * m + j] = yr[j] + (cfg.noise_std_y > 0 ? cfg.noise_std_y * normal(noise_rng) : 0.0);
        }
      }
      pass.refresh();
      pass.zero_grad();
      std::span<double> g(grad);
      std::fill(g.begin() + static_cast<std::ptrdiff_t>(n_net), g.end(), 0.0);
      const auto raw = pass.forward_batch(std::span<const double>(xb).subspan(0, rows * l), rows);
      std::span<double> graw(grad_raw);
      double loss = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        loss += head_->nll_and_grad(raw.subspan(r * raw_size, raw_size), std::span<const double>(yb).subspan(r * m, m),
                                    graw.subspan(r * raw_size, raw_size), g.subspan(n_net));
      }
      pass.backward_batch(graw.subspan(0, rows * raw_size));
      if (!std::isfinite(loss)) {
        throw TrainingDivergence("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_index));
      }
      pass.gradient(g.subspan(0, n_net));
      const double inv = 1.0 / static_cast<double>(end - start);
      for (double& v : grad) v *= inv;

      auto net_params = net_.parameters();
      std::copy(net_params.begin(), net_params.end(), params.begin());
      auto extra = head_->extra_parameters();
      std::copy(extra.begin(), extra.end(), params.begin() + static_cast<std::ptrdiff_t>(n_net));
      try {
        adam.step(params, grad);
      } catch (const TrainingDivergence&) {
        throw TrainingDivergence("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_index));
      }
      std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(n_net), net_params.begin());
      std::copy(params.begin() + static_cast<std::ptrdiff_t>(n_net), params.end(), extra.begin());
      epoch_loss += loss;
    }
    loss_history_.push_back(epoch_loss / static_cast<double>(n));
    if (on_epoch) on_epoch(epoch, loss_history_.back());
  }
  fitted_ = true;
}

GaussianMixture NeuralEstimator::normalized_density(std::span<const double> x_norm) const {
  if (!fitted_) throw StateError(kind() + " estimator queried before fit");
  const auto raw = net_.forward(x_norm);
  return head_->mixture(raw);
}

std::vector<double> NeuralEstimator::parameter_vector() const {
  std::vector<double> out(net_.parameters().begin(), net_.parameters().end());
  if (head_) {
    if (const auto* kh = dynamic_cast<const KmnHead*>(head_.get())) {
      out.insert(out.end(), kh->log_scales().begin(), kh->log_scales().end());
    }
  }
  return out;
}

nlohmann::json NeuralEstimator::to_json() const {
  nlohmann::json j;
  j["kind"] = kind();
  j["config"] = kind_ == Kind::Mdn ? mdn_.to_json() : kmn_.to_json();
  j["fitted"] = fitted_;
  if (!fitted_) return j;
  j["stats"] = stats_.to_json();
  j["network"] = net_.to_json();
  j["y_dim"] = head_->y_dim();
  if (const auto* kh = dynamic_cast<const KmnHead*>(head_.get())) {
    std::vector<std::vector<double>> centers;
    for (std::size_t r = 0; r < kh->centers().rows(); ++r) {
      const auto row = kh->centers().row(r);
      centers.emplace_back(row.begin(), row.end());
    }
    j["centers"] = centers;
    j["log_scales"] = kh->log_scales();
  }
  j["loss_history"] = loss_history_;
  return j;
}

std::unique_ptr<NeuralEstimator> NeuralEstimator::from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    std::unique_ptr<NeuralEstimator> est;
    if (kind == "mdn") {
      est = std::make_unique<NeuralEstimator>(MdnConfig::from_json(j.at("config")));
    } else if (kind == "kmn") {
      est = std::make_unique<NeuralEstimator>(KmnConfig::from_json(j.at("config")));
    } else {
      throw ParseError("not a neural estimator kind: '" + kind + "'");
    }
    if (!j.value("fitted", false)) return est;
    est->stats_ = NormalizationStats::from_json(j.at("stats"));
    est->net_ = Mlp::from_json(j.at("network"));
    const auto m = j.at("y_dim").get<std::size_t>();
    if (kind == "mdn") {
      est->head_ = std::make_unique<MdnHead>(est->mdn_.n_components, m);
    } else {
      const auto rows = j.at("centers").get<std::vector<std::vector<double>>>();
      est->head_ = std::make_unique<KmnHead>(Matrix::from_rows(rows), j.at("log_scales").get<std::vector<double>>(),
                                             est->kmn_.trainable_scales);
    }
    if (est->net_.input_size() != est->stats_.mu_x.size() || est->net_.output_size() != est->head_->raw_size() ||
        m != est->stats_.mu_y.size()) {
      throw ParseError("neural estimator JSON: network, head and stats dimensions disagree");
    }
    est->loss_history_ = j.value("loss_history", std::vector<double>{});
    est->fitted_ = true;
    return est;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("neural estimator JSON: ") + e.what());
  }
}

std::unique_ptr<NeuralEstimator> fit_mdn(const MdnConfig& config, const Dataset& data, const EpochCallback& on_epoch) {
  auto est = std::make_unique<NeuralEstimator>(config);
  est->fit(data, on_epoch);
  return est;
}

std::unique_ptr<NeuralEstimator> fit_kmn(const KmnConfig& config, const Dataset& data, const EpochCallback& on_epoch) {
  auto est = std::make_unique<NeuralEstimator>(config);
  est->fit(data, on_epoch);
  return est;
}

TaylorCheck noise_reg_taylor_check(const std::function<double(std::span<const double>)>& loss,
                                   std::span<const double> point, double eta, std::size_t n_mc, std::uint64_t seed,
                                   double fd_step) {
  if (!(eta >= 0.0)) throw ConfigError("noise std must be >= 0");
  if (n_mc == 0) throw ConfigError("n_mc must be >= 1");
  TaylorCheck out;
  std::vector<double> z(point.begin(), point.end());
  out.loss_at_point = loss(z);

  double trace = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double saved = z[i];
    z[i] = saved + fd_step;
    const double up = loss(z);
    z[i] = saved - fd_step;
    const double down = loss(z);
    z[i] = saved;
    trace += (up - 2.0 * out.loss_at_point + down) / (fd_step * fd_step);
  }
  out.hessian_trace = trace;
  out.rhs = out.loss_at_point + 0.5 * eta * eta * trace;

  if (eta == 0.0) {
    out.lhs = out.loss_at_point;
    out.rhs = out.loss_at_point;
    return out;
  }
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, eta);
  // Welford on the deviation from L(z0) to keep the variance estimate exact.
  double mean = 0.0;
  double m2 = 0.0;
  std::vector<double> p(z.size());
  for (std::size_t s = 0; s < n_mc; ++s) {
    for (std::size_t i = 0; i < z.size(); ++i) p[i] = z[i] + normal(rng);
    const double d = loss(p) - out.loss_at_point;
    const double delta = d - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * (d - mean);
  }
  out.lhs = out.loss_at_point + mean;
  const double var = n_mc > 1 ? m2 / static_cast<double>(n_mc - 1) : 0.0;
  out.mc_standard_error = std::sqrt(var / static_cast<double>(n_mc));
  return out;
}

}  // namespace cde
