#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cde/dataset.hpp"
#include "cde/estimator.hpp"
#include "cde/neural_estimator.hpp"
#include "cde/simulators.hpp"
#include "json.hpp"

namespace cde {

// Estimator names accepted by fit_estimator: mdn, kmn, ckde, ckde_cv (CKDE
// with leave-one-out bandwidths), nkde, lscde, oracle.
const std::vector<std::string>& estimator_names();

struct FitOptions {
  // Overrides the config seed of seeded estimators (mdn, kmn, lscde).
  std::optional<std::uint64_t> seed;
  EpochCallback on_epoch;
  // Required by "oracle", which ignores the data.
  std::shared_ptr<const Simulator> simulator;
};

// Config keys follow each estimator's config JSON; unknown names or keys are
// ConfigError.
std::unique_ptr<Estimator> fit_estimator(const std::string& name, const nlohmann::json& config, const Dataset& data,
                                         const FitOptions& options = {});

// Parses the config without fitting; ConfigError on unknown names or bad keys.
void validate_estimator_config(const std::string& name, const nlohmann::json& config);

// Default config for a name, in the same JSON form fit_estimator accepts.
nlohmann::json default_estimator_config(const std::string& name);

// Rebuilds any estimator from its to_json() output, dispatching on "kind".
std::unique_ptr<Estimator> load_estimator(const nlohmann::json& j);

}  // namespace cde
