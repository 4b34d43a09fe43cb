#include "chunkflow/nn/graph.hpp"

#include <algorithm>
#include <cmath>

namespace chunkflow::nn {

NamedVars Graph::bind(Tape& tape, const NamedTensors& inputs) const {
  NamedVars vars;
  for (const auto& [name, shape] : input_shapes_) {
    auto it = inputs.find(name);
    if (it == inputs.end()) throw std::invalid_argument("missing graph input '" + name + "'");
    if (it->second.shape() != shape) {
      throw ShapeError("input '" + name + "' has shape " + shape_string(it->second.shape()) + ", expected " +
                       shape_string(shape));
    }
    vars.emplace(name, tape.constant(it->second, "input:" + name));
  }
  for (const auto& [name, _] : inputs) {
    if (input_shapes_.count(name) == 0) throw std::invalid_argument("undeclared graph input '" + name + "'");
  }
  return vars;
}

NamedTensors Graph::evaluate(const NamedTensors& inputs) const {
  Tape tape(false);
  NamedVars outputs = builder_(tape, bind(tape, inputs));
  NamedTensors result;
  for (const auto& [name, v] : outputs) result.emplace(name, v.value());
  return result;
}

NamedTensors Graph::gradients(const NamedTensors& inputs, const std::string& loss) const {
  // Work on saved grads so callers' accumulated grads survive.
  std::vector<Tensor> saved;
  if (params_ != nullptr) {
    for (auto& p : *params_) {
      saved.push_back(p.grad);
      p.grad.fill(0.0);
    }
  }
  Tape tape(true);
  NamedVars outputs = builder_(tape, bind(tape, inputs));
  auto it = outputs.find(loss);
  if (it == outputs.end()) throw std::invalid_argument("graph has no output named '" + loss + "'");
  tape.backward(it->second);
  NamedTensors grads;
  if (params_ != nullptr) {
    std::size_t k = 0;
    for (auto& p : *params_) {
      grads.emplace(p.name, p.grad);
      p.grad = std::move(saved[k++]);
    }
  }
  return grads;
}

double gradient_check(const Graph& graph, const NamedTensors& inputs, const std::string& loss, double h) {
  ParameterSet* params = graph.parameters();
  if (params == nullptr) return 0.0;
  const NamedTensors analytic = graph.gradients(inputs, loss);
  double worst = 0.0;
  for (auto& p : *params) {
    const Tensor& g = analytic.at(p.name);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + h;
      const double up = graph.evaluate(inputs).at(loss).item();
      p.value[i] = orig - h;
      const double down = graph.evaluate(inputs).at(loss).item();
      p.value[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      worst = std::max(worst, std::abs(g[i] - numeric) / (std::abs(numeric) + 1e-8));
    }
  }
  return worst;
}

}  // namespace chunkflow::nn
