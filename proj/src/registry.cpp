#include "cde/registry.hpp"

#include "cde/errors.hpp"
#include "cde/nonparam.hpp"

namespace cde {

namespace {

std::string name_list() {
  std::string s;
  for (const auto& n : estimator_names()) s += (s.empty() ? "" : ", ") + n;
  return s;
}

nlohmann::json with_seed(nlohmann::json config, const FitOptions& options) {
  if (config.is_null()) config = nlohmann::json::object();
  if (options.seed && config.is_object()) config["seed"] = *options.seed;
  return config;
}

}  // namespace

const std::vector<std::string>& estimator_names() {
  static const std::vector<std::string> names = {"mdn", "kmn", "ckde", "ckde_cv", "nkde", "lscde", "oracle"};
  return names;
}

std::unique_ptr<Estimator> fit_estimator(const std::string& name, const nlohmann::json& config, const Dataset& data,
                                         const FitOptions& options) {
  const nlohmann::json cfg = config.is_null() ? nlohmann::json::object() : config;
  if (name == "mdn") return fit_mdn(MdnConfig::from_json(with_seed(cfg, options)), data, options.on_epoch);
  if (name == "kmn") return fit_kmn(KmnConfig::from_json(with_seed(cfg, options)), data, options.on_epoch);
  if (name == "ckde") return fit_ckde(CkdeConfig::from_json(cfg), data);
  if (name == "ckde_cv") {
    auto c = CkdeConfig::from_json(cfg);
    c.mode = BandwidthMode::LooCv;
    return fit_ckde(c, data);
  }
  if (name == "nkde") return fit_nkde(NkdeConfig::from_json(cfg), data);
  if (name == "lscde") return fit_lscde(LscdeConfig::from_json(with_seed(cfg, options)), data);
  if (name == "oracle") {
    if (!options.simulator) throw ConfigError("the oracle estimator needs a simulator");
    if (!cfg.is_object() || !cfg.empty()) throw ConfigError("the oracle estimator takes no config");
    return std::make_unique<OracleEstimator>(options.simulator);
  }
  throw ConfigError("unknown estimator '" + name + "'; expected one of: " + name_list());
}

void validate_estimator_config(const std::string& name, const nlohmann::json& config) {
  const nlohmann::json cfg = config.is_null() ? nlohmann::json::object() : config;
  if (name == "mdn") {
    MdnConfig::from_json(cfg);
  } else if (name == "kmn") {
    KmnConfig::from_json(cfg);
  } else if (name == "ckde" || name == "ckde_cv") {
    CkdeConfig::from_json(cfg);
  } else if (name == "nkde") {
    NkdeConfig::from_json(cfg);
  } else if (name == "lscde") {
    LscdeConfig::from_json(cfg);
  } else if (name == "oracle") {
    if (!cfg.is_object() || !cfg.empty()) throw ConfigError("the oracle estimator takes no config");
  } else {
    throw ConfigError("unknown estimator '" + name + "'; expected one of: " + name_list());
  }
}

nlohmann::json default_estimator_config(const std::string& name) {
  if (name == "mdn") return MdnConfig{}.to_json();
  if (name == "kmn") return KmnConfig{}.to_json();
  if (name == "ckde") return CkdeConfig{}.to_json();
  if (name == "ckde_cv") {
    CkdeConfig c;
    c.mode = BandwidthMode::LooCv;
    return c.to_json();
  }
  if (name == "nkde") return NkdeConfig{}.to_json();
  if (name == "lscde") return LscdeConfig{}.to_json();
  if (name == "oracle") return nlohmann::json::object();
  throw ConfigError("unknown estimator '" + name + "'; expected one of: " + name_list());
}

std::unique_ptr<Estimator> load_estimator(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string()) {
    throw ParseError("model JSON needs a string 'kind'");
  }
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "mdn" || kind == "kmn") return NeuralEstimator::from_json(j);
  if (kind == "ckde") return Ckde::from_json(j);
  if (kind == "nkde") return Nkde::from_json(j);
  if (kind == "lscde") return Lscde::from_json(j);
  if (kind == "oracle") return OracleEstimator::from_json(j);
  throw ParseError("unknown model kind '" + kind + "'");
}

}  // namespace cde
