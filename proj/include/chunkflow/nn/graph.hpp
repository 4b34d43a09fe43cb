#pragma once

#include <functional>
#include <map>
#include <string>

#include "chunkflow/nn/tape.hpp"

namespace chunkflow::nn {

using NamedTensors = std::map<std::string, Tensor>;
using NamedVars = std::map<std::string, Var>;

// A reusable computation: a builder that records ops onto a fresh tape for
// each call, the parameters it reads, and the declared input shapes.
class Graph {
 public:
  using Builder = std::function<NamedVars(Tape&, const NamedVars& inputs)>;

  Graph(ParameterSet* params, std::map<std::string, Shape> input_shapes, Builder builder)
      : params_(params), input_shapes_(std::move(input_shapes)), builder_(std::move(builder)) {}

  NamedTensors evaluate(const NamedTensors& inputs) const;

  // d(loss)/d(parameter) for every parameter in the set; zero where the loss
  // does not depend on a parameter. Parameter grads are left untouched.
  NamedTensors gradients(const NamedTensors& inputs, const std::string& loss) const;

  ParameterSet* parameters() const { return params_; }

 private:
  NamedVars bind(Tape& tape, const NamedTensors& inputs) const;

  ParameterSet* params_;
  std::map<std::string, Shape> input_shapes_;
  Builder builder_;
};

// Max over parameter entries of |analytic - numeric| / (|numeric| + 1e-8),
// with numeric derivatives from central differences of step h.
double gradient_check(const Graph& graph, const NamedTensors& inputs, const std::string& loss, double h = 1e-5);

}  // namespace chunkflow::nn
