#pragma once

// Randomised gradient-check cases covering every differentiable primitive.

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "chunkflow/nn/graph.hpp"
#include "chunkflow/nn/ops.hpp"

namespace gradcases {

using namespace chunkflow::nn;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Values bounded away from zero so ReLU and |x| kinks are not straddled.
inline Tensor away_from_zero(Shape shape, std::mt19937_64& rng) {
  Tensor t = random_tensor(std::move(shape), rng, 0.2, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.values()) v = sign(rng) ? v : -v;
  return t;
}

// Loss = sum(w * f(params)) with a fixed random weighting so every output
// element contributes a distinct gradient.
inline double op_check(ParameterSet& params, const std::function<Var(Tape&, std::vector<Var>&)>& f, std::mt19937_64& rng) {
  Tape probe(false);
  std::vector<Var> pv;
  for (auto& p : params) pv.push_back(probe.constant(p.value));
  const Shape out_shape = f(probe, pv).value().shape();
  const Tensor w = random_tensor(out_shape, rng, 0.5, 1.5);
  Graph g(&params, {}, [&params, &f, w](Tape& tape, const NamedVars&) {
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(tape.parameter(p));
    Var out = f(tape, vars);
    return NamedVars{{"loss", sum(mul(out, tape.constant(w)))}};
  });
  return gradient_check(g, {}, "loss");
}

using Build = std::function<double(std::mt19937_64&)>;

// Each case draws a random instance and returns its worst relative gradient error.
inline std::vector<std::pair<std::string, Build>> primitive_cases() {
  auto dim_rng = std::make_shared<std::uniform_int_distribution<std::size_t>>(1, 4);
  auto dim = [dim_rng](std::mt19937_64& r) { return (*dim_rng)(r); };
  auto single = [=](auto shape_fn, auto fill, std::function<Var(Tape&, Var)> op) -> Build {
    return [=](std::mt19937_64& r) {
      ParameterSet ps;
      ps.add("a", fill(shape_fn(r), r));
      return op_check(ps, [op](Tape& t, std::vector<Var>& v) { return op(t, v[0]); }, r);
    };
  };
  auto mat = [=](std::mt19937_64& r) { return Shape{dim(r), dim(r)}; };
  auto plain = [](Shape s, std::mt19937_64& r) { return random_tensor(std::move(s), r); };
  auto kinkless = [](Shape s, std::mt19937_64& r) { return away_from_zero(std::move(s), r); };
  auto positive = [](Shape s, std::mt19937_64& r) { return random_tensor(std::move(s), r, 0.3, 2.0); };

  return {
      {"relu", single(mat, kinkless, [](Tape&, Var a) { return relu(a); })},
      {"tanh", single(mat, plain, [](Tape&, Var a) { return tanh(a); })},
      {"sigmoid", single(mat, plain, [](Tape&, Var a) { return sigmoid(a); })},
      {"exp", single(mat, plain, [](Tape&, Var a) { return exp(a); })},
      {"log", single(mat, positive, [](Tape&, Var a) { return log(a); })},
      {"square", single(mat, kinkless, [](Tape&, Var a) { return square(a); })},
      {"scale", single(mat, plain, [](Tape&, Var a) { return scale(a, -2.5); })},
      {"add_scalar", single(mat, plain, [](Tape&, Var a) { return add_scalar(a, 0.7); })},
      {"neg", single(mat, plain, [](Tape&, Var a) { return neg(a); })},
      {"transpose", single(mat, plain, [](Tape&, Var a) { return transpose(a); })},
      {"sum", single(mat, plain, [](Tape&, Var a) { return sum(a); })},
      {"mean", single(mat, plain, [](Tape&, Var a) { return mean(a); })},
      {"row_sum", single(mat, plain, [](Tape&, Var a) { return row_sum(a); })},
      {"log_softmax", single(mat, plain, [](Tape&, Var a) { return log_softmax(a); })},
      {"slice_cols", single([=](std::mt19937_64& r) { return Shape{dim(r), 4}; }, plain,
                            [](Tape&, Var a) { return slice_cols(a, 1, 2); })},
      {"gather_rows", single([=](std::mt19937_64& r) { return Shape{3, dim(r)}; }, plain,
                             [](Tape&, Var a) { return gather_rows(a, {2, 0, 2, 1}); })},
      {"pick", single([=](std::mt19937_64&) { return Shape{3, 3}; }, plain,
                      [](Tape&, Var a) { return pick(a, {2, 0, 1}); })},
      {"segment_sum", single([=](std::mt19937_64&) { return Shape{5, 1}; }, plain,
                             [](Tape&, Var a) { return segment_sum(a, {0, 2, 0, 1, 2}, 3); })},
      {"masked_log_softmax", [=](std::mt19937_64& r) {
         ParameterSet ps;
         const Shape s{dim(r), dim(r) + 1};
         ps.add("a", random_tensor(s, r));
         auto m = std::make_shared<Mask>(s[0] * s[1], 1);
         std::bernoulli_distribution drop(0.4);
         for (std::size_t row = 0; row < s[0]; ++row) {
           for (std::size_t c = 1; c < s[1]; ++c) (*m)[row * s[1] + c] = drop(r) ? 0 : 1;
         }
         return op_check(ps, [m](Tape&, std::vector<Var>& v) { return log_softmax(v[0], m.get()); }, r);
       }},
      {"matmul", [=](std::mt19937_64& r) {
         ParameterSet ps;
         const std::size_t n = dim(r), k = dim(r), m = dim(r);
         ps.add("a", random_tensor({n, k}, r));
         ps.add("b", random_tensor({k, m}, r));
         return op_check(ps, [](Tape&, std::vector<Var>& v) { return matmul(v[0], v[1]); }, r);
       }},
      {"elementwise_broadcast", [=](std::mt19937_64& r) {
         ParameterSet ps;
         const std::size_t n = dim(r), m = dim(r);
         ps.add("a", random_tensor({n, m}, r));
         ps.add("b", random_tensor({n, m}, r));
         ps.add("row", random_tensor({1, m}, r));
         ps.add("col", random_tensor({n, 1}, r));
         ps.add("s", Tensor::scalar(0.3));
         return op_check(ps, [](Tape&, std::vector<Var>& v) {
           return sub(mul(add(v[0], v[2]), v[1]), mul(v[3], v[4]));
         }, r);
       }},
      {"concat", [=](std::mt19937_64& r) {
         ParameterSet ps;
         const std::size_t n = dim(r);
         ps.add("a", random_tensor({n, dim(r)}, r));
         ps.add("b", random_tensor({n, dim(r)}, r));
         return op_check(ps, [](Tape&, std::vector<Var>& v) {
           Var c = concat_cols({v[0], v[1]});
           return concat_rows({c, square(c)});
         }, r);
       }},
      {"layer_norm", [=](std::mt19937_64& r) {
         ParameterSet ps;
         const std::size_t n = dim(r), m = dim(r) + 1;
         ps.add("a", random_tensor({n, m}, r));
         ps.add("g", random_tensor({1, m}, r, 0.5, 1.5));
         ps.add("b", random_tensor({1, m}, r));
         return op_check(ps, [](Tape&, std::vector<Var>& v) { return square(layer_norm(v[0], v[1], v[2])); }, r);
       }},
  };
}

}  // namespace gradcases
