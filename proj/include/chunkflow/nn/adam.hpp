#pragma once

#include <cstdint>
#include <vector>

#include "chunkflow/nn/tape.hpp"

namespace chunkflow::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bias-corrected Adam over every parameter of a set, reading Parameter::grad.
class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config);

  // Throws NonFiniteGradient before touching any parameter if a gradient is
  // NaN or infinite.
  void step();

  std::int64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const Tensor& first_moment(std::size_t i) const { return m_[i]; }
  const Tensor& second_moment(std::size_t i) const { return v_[i]; }

 private:
  ParameterSet* params_;
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t step_ = 0;
};

}  // namespace chunkflow::nn
