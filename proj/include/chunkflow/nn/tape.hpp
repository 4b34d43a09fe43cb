#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "chunkflow/nn/tensor.hpp"

namespace chunkflow::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Named, ordered parameter storage. Parameter addresses are stable for the
// lifetime of the set so layers may hold raw pointers into it.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  Parameter& add(std::string name, Tensor init);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  // Copies values from a set with identical names and shapes.
  void copy_values_from(const ParameterSet& other);

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;

  const Tensor& value() const;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Define-by-run computation graph. Nodes are appended in topological order as
// operations execute; backward() walks them once in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::int32_t self)>;

  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value, std::string_view name = "const");
  Var parameter(Parameter& p);

  Var record(std::string_view op, Tensor value, std::vector<std::int32_t> inputs, BackwardFn fn);

  const Tensor& value(std::int32_t id) const { return nodes_[id].value; }
  bool requires_grad(std::int32_t id) const { return nodes_[id].requires_grad; }
  bool has_grad(std::int32_t id) const { return nodes_[id].grad_ready; }
  const Tensor& grad(std::int32_t id) const;
  const Tensor& grad(Var v) const { return grad(v.id); }
  // Zero-initialized on first access.
  Tensor& grad_buffer(std::int32_t id);

  // Seeds d(loss)/d(loss) = 1 and propagates to every node and parameter.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return recording_; }
  std::string label(std::int32_t id) const;
  std::string next_label(std::string_view op) const;

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool grad_ready = false;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool recording_;
  bool backward_done_ = false;
};

}  // namespace chunkflow::nn
