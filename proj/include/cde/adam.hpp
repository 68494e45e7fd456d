#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cde {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias-corrected moment estimates. Buffers are aligned with the
// flat parameter vector they were created for.
class AdamState {
 public:
  AdamState(std::size_t parameter_count, AdamOptions options = {});

  // One update in place; throws TrainingDivergence on a non-finite gradient.
  void step(std::span<double> params, std::span<const double> grads);

  std::uint64_t steps() const { return t_; }
  const AdamOptions& options() const { return options_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }

 private:
  AdamOptions options_;
  std::uint64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace cde
