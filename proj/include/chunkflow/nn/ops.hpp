#pragma once

#include <cstdint>
#include <vector>

#include "chunkflow/nn/tape.hpp"

namespace chunkflow::nn {

// Row-major 0/1 mask with the same element count as the tensor it masks.
using Mask = std::vector<std::uint8_t>;

Var matmul(Var a, Var b);
Var transpose(Var a);

// Elementwise binary ops. `b` may match `a` exactly, be a single row (1,n)
// broadcast over rows, a single column (m,1) broadcast over columns, or a
// scalar.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var scale(Var a, double factor);
Var add_scalar(Var a, double c);
Var neg(Var a);
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var gather_rows(Var a, const std::vector<std::size_t>& rows);
// out[r] = a[r, cols[r]], shape (rows, 1).
Var pick(Var a, const std::vector<std::size_t>& cols);

Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);
// Sums a column vector (n,1) into `segments` buckets given per-row ids.
Var segment_sum(Var a, const std::vector<std::size_t>& segment_of_row, std::size_t segments);

Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);

// Row-wise log-softmax. Masked-out entries (mask == 0) are excluded from the
// normalizer, receive value 0 and get no gradient; callers must read them
// through the mask. Every row needs at least one valid entry.
Var log_softmax(Var a, const Mask* mask = nullptr);

}  // namespace chunkflow::nn
