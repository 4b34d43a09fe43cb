#include "chunkflow/nn/layers.hpp"

#include <cmath>

namespace chunkflow::nn {

namespace {

Tensor uniform(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

Linear::Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : in_(in), out_(out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = &params.add(name + ".weight", uniform(Shape{in, out}, bound, rng));
  bias_ = &params.add(name + ".bias", uniform(Shape{1, out}, bound, rng));
}

Var Linear::forward(Tape& tape, Var x) const {
  return add(matmul(x, tape.parameter(*weight_)), tape.parameter(*bias_));
}

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name, std::size_t width) {
  gain_ = &params.add(name + ".gain", Tensor(Shape{1, width}, 1.0));
  bias_ = &params.add(name + ".bias", Tensor(Shape{1, width}, 0.0));
}

Var LayerNorm::forward(Tape& tape, Var x) const {
  return layer_norm(x, tape.parameter(*gain_), tape.parameter(*bias_));
}

Mlp::Mlp(ParameterSet& params, const std::string& name, std::size_t in, const std::vector<std::size_t>& hidden,
         std::size_t out, Rng& rng) {
  std::size_t width = in;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    hidden_.emplace_back(params, name + ".fc" + std::to_string(i), width, hidden[i], rng);
    width = hidden[i];
  }
  norm_ = LayerNorm(params, name + ".norm", width);
  head_ = Linear(params, name + ".head", width, out, rng);
}

Var Mlp::forward(Tape& tape, Var x) const {
  for (const auto& layer : hidden_) x = relu(layer.forward(tape, x));
  return head_.forward(tape, norm_.forward(tape, x));
}

Lstm::Lstm(ParameterSet& params, const std::string& name, std::size_t in, std::size_t hidden, std::size_t layers,
           Rng& rng)
    : hidden_(hidden) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::size_t width = in;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string prefix = name + ".l" + std::to_string(l);
    Cell cell;
    cell.w_input = &params.add(prefix + ".w_input", uniform(Shape{width, 4 * hidden}, bound, rng));
    cell.w_hidden = &params.add(prefix + ".w_hidden", uniform(Shape{hidden, 4 * hidden}, bound, rng));
    Tensor b = uniform(Shape{1, 4 * hidden}, bound, rng);
    // Forget gate starts open.
    for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] += 1.0;
    cell.bias = &params.add(prefix + ".bias", std::move(b));
    cells_.push_back(cell);
    width = hidden;
  }
}

LstmState Lstm::zero_state(std::size_t batch) const {
  LstmState s;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    s.h.emplace_back(Shape{batch, hidden_}, 0.0);
    s.c.emplace_back(Shape{batch, hidden_}, 0.0);
  }
  return s;
}

LstmCarry Lstm::zero_carry(Tape& tape, std::size_t batch) const { return bind(tape, zero_state(batch)); }

LstmCarry Lstm::bind(Tape& tape, const LstmState& state) const {
  LstmCarry carry;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    carry.h.push_back(tape.constant(state.h[l], "lstm_h0"));
    carry.c.push_back(tape.constant(state.c[l], "lstm_c0"));
  }
  return carry;
}

LstmState Lstm::unbind(const LstmCarry& carry) {
  LstmState s;
  for (std::size_t l = 0; l < carry.h.size(); ++l) {
    s.h.push_back(carry.h[l].value());
    s.c.push_back(carry.c[l].value());
  }
  return s;
}

Var Lstm::step(Tape& tape, Var x, LstmCarry& carry) const {
  const std::size_t h = hidden_;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    const Cell& cell = cells_[l];
    Var gates = add(add(matmul(x, tape.parameter(*cell.w_input)), matmul(carry.h[l], tape.parameter(*cell.w_hidden))),
                    tape.parameter(*cell.bias));
    Var input_gate = sigmoid(slice_cols(gates, 0, h));
    Var forget_gate = sigmoid(slice_cols(gates, h, h));
    Var output_gate = sigmoid(slice_cols(gates, 2 * h, h));
    Var candidate = tanh(slice_cols(gates, 3 * h, h));
    carry.c[l] = add(mul(forget_gate, carry.c[l]), mul(input_gate, candidate));
    carry.h[l] = mul(output_gate, tanh(carry.c[l]));
    x = carry.h[l];
  }
  return x;
}

Tensor one_hot_rows(const std::vector<std::size_t>& indices, std::size_t width) {
  Tensor t(Shape{indices.size(), width}, 0.0);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= width) throw ShapeError("one-hot index out of range");
    t.at(r, indices[r]) = 1.0;
  }
  return t;
}

}  // namespace chunkflow::nn
