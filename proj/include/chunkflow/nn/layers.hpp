#pragma once

#include <random>
#include <string>
#include <vector>

#include "chunkflow/nn/ops.hpp"
#include "chunkflow/nn/tape.hpp"

namespace chunkflow::nn {

using Rng = std::mt19937_64;

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  Var forward(Tape& tape, Var x) const;
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

 private:
  Parameter* weight_ = nullptr;  // (in, out)
  Parameter* bias_ = nullptr;    // (1, out)
  std::size_t in_ = 0, out_ = 0;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& name, std::size_t width);

  Var forward(Tape& tape, Var x) const;

 private:
  Parameter* gain_ = nullptr;
  Parameter* bias_ = nullptr;
};

// Hidden layers with ReLU, then layer norm, then the output projection.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterSet& params, const std::string& name, std::size_t in, const std::vector<std::size_t>& hidden,
      std::size_t out, Rng& rng);

  Var forward(Tape& tape, Var x) const;

 private:
  std::vector<Linear> hidden_;
  LayerNorm norm_;
  Linear head_;
};

struct LstmCarry {
  std::vector<Var> h;
  std::vector<Var> c;
};

struct LstmState {
  std::vector<Tensor> h;
  std::vector<Tensor> c;
};

// Stacked LSTM with input/forget/output gates and a tanh candidate.
class Lstm {
 public:
  Lstm() = default;
  Lstm(ParameterSet& params, const std::string& name, std::size_t in, std::size_t hidden, std::size_t layers,
       Rng& rng);

  LstmCarry zero_carry(Tape& tape, std::size_t batch) const;
  LstmState zero_state(std::size_t batch) const;
  LstmCarry bind(Tape& tape, const LstmState& state) const;
  static LstmState unbind(const LstmCarry& carry);

  // One time step for every row; returns the top layer hidden output.
  Var step(Tape& tape, Var x, LstmCarry& carry) const;

  std::size_t hidden_size() const { return hidden_; }
  std::size_t layers() const { return cells_.size(); }

 private:
  struct Cell {
    Parameter* w_input = nullptr;   // (in, 4h)
    Parameter* w_hidden = nullptr;  // (h, 4h)
    Parameter* bias = nullptr;      // (1, 4h)
  };
  std::vector<Cell> cells_;
  std::size_t hidden_ = 0;
};

Tensor one_hot_rows(const std::vector<std::size_t>& indices, std::size_t width);

}  // namespace chunkflow::nn
