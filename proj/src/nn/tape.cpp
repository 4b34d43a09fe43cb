#include "chunkflow/nn/tape.hpp"

#include <stdexcept>

namespace chunkflow::nn {

Parameter& ParameterSet::add(std::string name, Tensor init) {
  if (index_.count(name) != 0) throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor grad(init.shape(), 0.0);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), std::move(init), std::move(grad)});
  return params_.back();
}

Parameter* ParameterSet::find(std::string_view name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterSet::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

Parameter& ParameterSet::at(std::string_view name) {
  Parameter* p = find(name);
  if (p == nullptr) throw std::out_of_range("unknown parameter: " + std::string(name));
  return *p;
}

const Parameter& ParameterSet::at(std::string_view name) const {
  const Parameter* p = find(name);
  if (p == nullptr) throw std::out_of_range("unknown parameter: " + std::string(name));
  return *p;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  for (auto& p : params_) {
    const Parameter& src = other.at(p.name);
    if (!src.value.same_shape(p.value)) throw ShapeError("shape mismatch copying parameter " + p.name);
    p.value = src.value;
  }
}

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value, std::string_view name) {
  Node n;
  n.op = std::string(name);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.op = "param:" + p.name;
  n.value = p.value;
  n.requires_grad = recording_;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::record(std::string_view op, Tensor value, std::vector<std::int32_t> inputs, BackwardFn fn) {
  Node n;
  n.op = std::string(op);
  n.value = std::move(value);
  if (recording_) {
    for (auto id : inputs) {
      if (nodes_[id].requires_grad) {
        n.requires_grad = true;
        break;
      }
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::grad(std::int32_t id) const {
  if (!nodes_[id].grad_ready) throw std::logic_error("no gradient available for " + label(id));
  return nodes_[id].grad;
}

Tensor& Tape::grad_buffer(std::int32_t id) {
  Node& n = nodes_[id];
  if (!n.grad_ready) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.grad_ready = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!recording_) throw std::logic_error("backward() on a tape that does not record gradients");
  if (backward_done_) throw std::logic_error("backward() called twice on the same tape");
  if (loss.tape != this) throw std::invalid_argument("loss belongs to another tape");
  if (!value(loss.id).is_scalar()) {
    throw ShapeError("loss " + label(loss.id) + " is not scalar: " + shape_string(value(loss.id).shape()));
  }
  backward_done_ = true;
  grad_buffer(loss.id).fill(1.0);
  for (std::int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.grad_ready || !n.requires_grad) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) {
      auto dst = n.param->grad.values();
      auto src = n.grad.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
}

std::string Tape::label(std::int32_t id) const {
  return nodes_[id].op + "#" + std::to_string(id) + " " + shape_string(nodes_[id].value.shape());
}

std::string Tape::next_label(std::string_view op) const {
  return std::string(op) + "#" + std::to_string(nodes_.size());
}

}  // namespace chunkflow::nn
