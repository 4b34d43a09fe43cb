#include "chunkflow/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace chunkflow::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMat>;
using View = Eigen::Map<RowMat>;

ConstView view(const Tensor& t) { return ConstView(t.data(), t.rows(), t.cols()); }
View view(Tensor& t) { return View(t.data(), t.rows(), t.cols()); }

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("operation on an invalid Var");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("operands belong to different tapes");
  return tape_of(a);
}

[[noreturn]] void shape_fail(Tape& t, std::string_view op, std::initializer_list<Var> inputs, std::string_view why) {
  std::string msg = t.next_label(op) + ": " + std::string(why) + " (inputs:";
  for (Var v : inputs) msg += " " + t.label(v.id);
  throw ShapeError(msg + ")");
}

enum class Broadcast { kSame, kRow, kCol, kScalar };

Broadcast broadcast_mode(Tape& t, std::string_view op, Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rows() == y.rows() && x.cols() == y.cols() && x.size() == y.size()) return Broadcast::kSame;
  if (y.size() == 1) return Broadcast::kScalar;
  if (y.rows() == 1 && y.cols() == x.cols()) return Broadcast::kRow;
  if (y.cols() == 1 && y.rows() == x.rows()) return Broadcast::kCol;
  shape_fail(t, op, {a, b}, "incompatible shapes");
}

// Expands b to a's layout.
RowMat expand(const Tensor& b, Broadcast mode, std::size_t rows, std::size_t cols) {
  switch (mode) {
    case Broadcast::kSame:
      return view(b);
    case Broadcast::kScalar:
      return RowMat::Constant(rows, cols, b[0]);
    case Broadcast::kRow:
      return view(b).row(0).replicate(rows, 1);
    case Broadcast::kCol:
      return view(b).col(0).replicate(1, cols);
  }
  return {};
}

// Reduces a full-layout gradient to b's shape and accumulates it.
void reduce_into(Tensor& b_grad, const RowMat& g, Broadcast mode) {
  View out = view(b_grad);
  switch (mode) {
    case Broadcast::kSame:
      out += g;
      break;
    case Broadcast::kScalar:
      b_grad[0] += g.sum();
      break;
    case Broadcast::kRow:
      out.row(0) += g.colwise().sum();
      break;
    case Broadcast::kCol:
      out.col(0) += g.rowwise().sum();
      break;
  }
}

template <typename Forward, typename Derivative>
Var unary(std::string_view op, Var a, Forward f, Derivative df) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const auto ia = a.id;
  return t.record(op, std::move(out), {ia}, [ia, df](Tape& tape, std::int32_t self) {
    if (!tape.requires_grad(ia)) return;
    const Tensor& x = tape.value(ia);
    const Tensor& y = tape.value(self);
    const Tensor& g = tape.grad(self);
    Tensor& dx = tape.grad_buffer(ia);
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] += g[i] * df(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.cols() != y.rows()) shape_fail(t, "matmul", {a, b}, "inner dimensions differ");
  Tensor out(Shape{x.rows(), y.cols()});
  view(out).noalias() = view(x) * view(y);
  const auto ia = a.id, ib = b.id;
  return t.record("matmul", std::move(out), {ia, ib}, [ia, ib](Tape& tape, std::int32_t self) {
    const Tensor& g = tape.grad(self);
    if (tape.requires_grad(ia)) {
      view(tape.grad_buffer(ia)).noalias() += view(g) * view(tape.value(ib)).transpose();
    }
    if (tape.requires_grad(ib)) {
      view(tape.grad_buffer(ib)).noalias() += view(tape.value(ia)).transpose() * view(g);
    }
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor out(Shape{x.cols(), x.rows()});
  view(out) = view(x).transpose();
  const auto ia = a.id;
  return t.record("transpose", std::move(out), {ia}, [ia](Tape& tape, std::int32_t self) {
    if (tape.requires_grad(ia)) view(tape.grad_buffer(ia)) += view(tape.grad(self)).transpose();
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Broadcast mode = broadcast_mode(t, "add", a, b);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  view(out) = view(x) + expand(b.value(), mode, x.rows(), x.cols());
  const auto ia = a.id, ib = b.id;
  return t.record("add", std::move(out), {ia, ib}, [ia, ib, mode](Tape& tape, std::int32_t self) {
    const Tensor& g = tape.grad(self);
    if (tape.requires_grad(ia)) view(tape.grad_buffer(ia)) += view(g);
    if (tape.requires_grad(ib)) reduce_into(tape.grad_buffer(ib), view(g), mode);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Broadcast mode = broadcast_mode(t, "sub", a, b);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  view(out) = view(x) - expand(b.value(), mode, x.rows(), x.cols());
  const auto ia = a.id, ib = b.id;
  return t.record("sub", std::move(out), {ia, ib}, [ia, ib, mode](Tape& tape, std::int32_t self) {
    const Tensor& g = tape.grad(self);
    if (tape.requires_grad(ia)) view(tape.grad_buffer(ia)) += view(g);
    if (tape.requires_grad(ib)) reduce_into(tape.grad_buffer(ib), -view(g), mode);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Broadcast mode = broadcast_mode(t, "mul", a, b);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  view(out) = view(x).cwiseProduct(expand(b.value(), mode, x.rows(), x.cols()));
  const auto ia = a.id, ib = b.id;
  return t.record("mul", std::move(out), {ia, ib}, [ia, ib, mode](Tape& tape, std::int32_t self) {
    const Tensor& g = tape.grad(self);
    const Tensor& x = tape.value(ia);
    if (tape.requires_grad(ia)) {
      view(tape.grad_buffer(ia)) += view(g).cwiseProduct(expand(tape.value(ib), mode, x.rows(), x.cols()));
    }
    if (tape.requires_grad(ib)) reduce_into(tape.grad_buffer(ib), view(g).cwiseProduct(view(x)), mode);
  });
}

Var scale(Var a, double factor) {
  return unary("scale", a, [factor](double v) { return factor * v; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double c) {
  return unary("add_scalar", a, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var relu(Var a) {
  // Subgradient 0 at the kink.
  return unary("relu", a, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a,
               [](double v) {
                 if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
                 const double e = std::exp(v);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var a) {
  return unary("exp", a, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary("log", a, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(Var a) {
  return unary("square", a, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols of nothing");
  Tape& t = tape_of(parts.front());
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (p.tape != &t) throw std::invalid_argument("operands belong to different tapes");
    if (p.value().rows() != rows) shape_fail(t, "concat_cols", {parts.front(), p}, "row counts differ");
    cols += p.value().cols();
  }
  Tensor out(Shape{rows, cols});
  std::vector<std::int32_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& v = p.value();
    view(out).middleCols(off, v.cols()) = view(v);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += v.cols();
  }
  return t.record("concat_cols", std::move(out), ids, [ids, offsets](Tape& tape, std::int32_t self) {
    const Tensor& g = tape.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tape.requires_grad(ids[k])) continue;
      Tensor& d = tape.grad_buffer(ids[k]);
      view(d) += view(g).middleCols(offsets[k], d.cols());
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
  Tape& t = tape_of(parts.front());
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (p.tape != &t) throw std::invalid_argument("operands belong to different tapes");
    if (p.value().cols() != cols) shape_fail(t, "concat_rows", {parts.front(), p}, "column counts differ");
    rows += p.value().rows();
  }
  Tensor out(Shape{rows, cols});
  std::vector<std::int32_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& v = p.value();
    std::copy(v.data(), v.data() + v.size(), out.data() + off * cols);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += v.rows();
  }
  return t.record("concat_rows", std::move(out), ids, [ids, offsets, cols](Tape& tape, std::int32_t self) {
    const Tensor& g = tape.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tape.requires_grad(ids[k])) continue;
      Tensor& d = tape.grad_buffer(ids[k]);
      const double* src = g.data() + offsets[k] * cols;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (begin + count > x.cols()) shape_fail(t, "slice_cols", {a}, "slice out of range");
  Tensor out(Shape{x.rows(), count});
  view(out) = view(x).middleCols(begin, count);
  const auto ia = a.id;
  return t.record("slice_cols", std::move(out), {ia}, [ia, begin, count](Tape& tape, std::int32_t self) {
    if (tape.requires_grad(ia)) view(tape.grad_buffer(ia)).middleCols(begin, count) += view(tape.grad(self));
  });
}

Var gather_rows(Var a, const std::vector<std::size_t>& rows) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  const std::size_t cols = x.cols();
  Tensor out(Shape{rows.size(), cols});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= x.rows()) shape_fail(t, "gather_rows", {a}, "row index out of range");
    std::copy(x.data() + rows[r] * cols, x.data() + (rows[r] + 1) * cols, out.data() + r * cols);
  }
  const auto ia = a.id;
  return t.record("gather_rows", std::move(out), {ia}, [ia, rows, cols](Tape& tape, std::int32_t self) {
    if (!tape.requires_grad(ia)) return;
    const Tensor& g = tape.grad(self);
    Tensor& d = tape.grad_buffer(ia);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < cols; ++c) d[rows[r] * cols + c] += g[r * cols + c];
    }
  });
}

Var pick(Var a, const std::vector<std::size_t>& cols) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (cols.size() != x.rows()) shape_fail(t, "pick", {a}, "one column index per row required");
  Tensor out(Shape{x.rows(), 1});
  for (std::size_t r = 0; r < cols.size(); ++r) {
    if (cols[r] >= x.cols()) shape_fail(t, "pick", {a}, "column index out of range");
    out[r] = x.at(r, cols[r]);
  }
  const auto ia = a.id;
  return t.record("pick", std::move(out), {ia}, [ia, cols](Tape& tape, std::int32_t self) {
    if (!tape.requires_grad(ia)) return;
    const Tensor& g = tape.grad(self);
    Tensor& d = tape.grad_buffer(ia);
    for (std::size_t r = 0; r < cols.size(); ++r) d.at(r, cols[r]) += g[r];
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const auto ia = a.id;
  return t.record("sum", Tensor::scalar(s), {ia}, [ia](Tape& tape, std::int32_t self) {
    if (!tape.requires_grad(ia)) return;
    const double g = tape.grad(self)[0];
    for (double& v : tape.grad_buffer(ia).values()) v += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor out(Shape{x.rows(), 1});
  view(out).col(0) = view(x).rowwise().sum();
  const auto ia = a.id;
  return t.record("row_sum", std::move(out), {ia}, [ia](Tape& tape, std::int32_t self) {
    if (!tape.requires_grad(ia)) return;
    Tensor& d = tape.grad_buffer(ia);
    view(d).colwise() += view(tape.grad(self)).col(0);
  });
}

Var segment_sum(Var a, const std::vector<std::size_t>& segment_of_row, std::size_t segments) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (x.cols() != 1 || segment_of_row.size() != x.rows()) {
    shape_fail(t, "segment_sum", {a}, "expects a column vector with one segment id per row");
  }
  Tensor out(Shape{segments, 1});
  for (std::size_t r = 0; r < segment_of_row.size(); ++r) {
    if (segment_of_row[r] >= segments) shape_fail(t, "segment_sum", {a}, "segment id out of range");
    out[segment_of_row[r]] += x[r];
  }
  const auto ia = a.id;
  return t.record("segment_sum", std::move(out), {ia}, [ia, segment_of_row](Tape& tape, std::int32_t self) {
    if (!tape.requires_grad(ia)) return;
    const Tensor& g = tape.grad(self);
    Tensor& d = tape.grad_buffer(ia);
    for (std::size_t r = 0; r < segment_of_row.size(); ++r) d[r] += g[segment_of_row[r]];
  });
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  Tape& t = tape_of(a, gain);
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gain.value().size() != cols || bias.value().size() != cols) {
    shape_fail(t, "layer_norm", {a, gain, bias}, "gain/bias width differs from input width");
  }
  Tensor normalized(Shape{rows, cols});
  std::vector<double> inv_std(rows);
  Tensor out(x.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += x.at(r, c);
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (x.at(r, c) - mu) * (x.at(r, c) - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const double n = (x.at(r, c) - mu) * inv_std[r];
      normalized.at(r, c) = n;
      out[r * cols + c] = n * gv[c] + bv[c];
    }
  }
  const auto ia = a.id, ig = gain.id, ib = bias.id;
  return t.record("layer_norm", std::move(out), {ia, ig, ib},
                  [ia, ig, ib, normalized = std::move(normalized), inv_std = std::move(inv_std)](
                      Tape& tape, std::int32_t self) {
                    const Tensor& g = tape.grad(self);
                    const Tensor& gv = tape.value(ig);
                    const std::size_t rows = normalized.rows(), cols = normalized.cols();
                    if (tape.requires_grad(ig)) {
                      Tensor& dg = tape.grad_buffer(ig);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) dg[c] += g[r * cols + c] * normalized.at(r, c);
                    }
                    if (tape.requires_grad(ib)) {
                      Tensor& db = tape.grad_buffer(ib);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) db[c] += g[r * cols + c];
                    }
                    if (tape.requires_grad(ia)) {
                      Tensor& dx = tape.grad_buffer(ia);
                      const double n = static_cast<double>(cols);
                      for (std::size_t r = 0; r < rows; ++r) {
                        double mean_dn = 0.0, mean_dn_n = 0.0;
                        for (std::size_t c = 0; c < cols; ++c) {
                          const double dn = g[r * cols + c] * gv[c];
                          mean_dn += dn;
                          mean_dn_n += dn * normalized.at(r, c);
                        }
                        mean_dn /= n;
                        mean_dn_n /= n;
                        for (std::size_t c = 0; c < cols; ++c) {
                          const double dn = g[r * cols + c] * gv[c];
                          dx[r * cols + c] += inv_std[r] * (dn - mean_dn - normalized.at(r, c) * mean_dn_n);
                        }
                      }
                    }
                  });
}

Var log_softmax(Var a, const Mask* mask) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  if (mask != nullptr && mask->size() != x.size()) shape_fail(t, "log_softmax", {a}, "mask size mismatch");
  Mask m = mask != nullptr ? *mask : Mask(x.size(), 1);
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (m[r * cols + c]) mx = std::max(mx, x.at(r, c));
    if (!std::isfinite(mx)) shape_fail(t, "log_softmax", {a}, "row " + std::to_string(r) + " has no valid entry");
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c)
      if (m[r * cols + c]) z += std::exp(x.at(r, c) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = m[r * cols + c] ? x.at(r, c) - lse : 0.0;
  }
  const auto ia = a.id;
  return t.record("log_softmax", std::move(out), {ia}, [ia, m = std::move(m)](Tape& tape, std::int32_t self) {
    if (!tape.requires_grad(ia)) return;
    const Tensor& y = tape.value(self);
    const Tensor& g = tape.grad(self);
    Tensor& dx = tape.grad_buffer(ia);
    const std::size_t rows = y.rows(), cols = y.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < cols; ++c)
        if (m[r * cols + c]) gs += g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        if (m[i]) dx[i] += g[i] - std::exp(y[i]) * gs;
      }
    }
  });
}

}  // namespace chunkflow::nn
