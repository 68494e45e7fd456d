#include "cde/adam.hpp"

#include <cmath>
#include <string>

#include "cde/errors.hpp"

namespace cde {

AdamState::AdamState(std::size_t parameter_count, AdamOptions options)
    : options_(options), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

void AdamState::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeError("Adam step: parameter/gradient length does not match optimizer state");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw TrainingDivergence("non-finite gradient entry at parameter index " + std::to_string(i));
    }
  }
  ++t_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    const double m_hat = m_[i] / correction1;
    const double v_hat = v_[i] / correction2;
    params[i] -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
  }
}

}  // namespace cde
