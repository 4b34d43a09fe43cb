#include "chunkflow/nn/adam.hpp"

#include <cmath>

namespace chunkflow::nn {

Adam::Adam(ParameterSet& params, AdamConfig config) : params_(&params), config_(config) {
  for (const auto& p : params) {
    m_.emplace_back(p.value.shape(), 0.0);
    v_.emplace_back(p.value.shape(), 0.0);
  }
}

void Adam::step() {
  if (m_.size() != params_->size()) throw std::logic_error("parameter set changed size after Adam construction");
  for (const auto& p : *params_) {
    if (!p.grad.all_finite()) throw NonFiniteGradient("non-finite gradient for parameter " + p.name);
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  std::size_t k = 0;
  for (auto& p : *params_) {
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    ++k;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.value[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace chunkflow::nn
