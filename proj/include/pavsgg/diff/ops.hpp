#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pavsgg/diff/tape.hpp"

// Differentiable primitives. Shapes must match exactly; the only broadcast is
// a rank-0 scalar combined with a tensor in add/sub/mul. Mismatches throw
// ShapeError naming both shapes.
namespace pavsgg::diff {

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t length);
Var reshape(const Var& a, Shape shape);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);

Var sum(const Var& a);
Var sum(const Var& a, std::size_t axis);
Var mean(const Var& a);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
// log(1 + e^x), evaluated without overflow.
Var softplus(const Var& a);
// Gradient passes only where lo <= x <= hi.
Var clamp(const Var& a, double lo, double hi);

// Max-subtracted softmax along `axis`.
Var softmax(const Var& a, std::size_t axis);
// Normalizes to zero mean / unit variance along `axis` (no affine terms).
Var layer_norm(const Var& a, std::size_t axis, double eps = 1e-5);

// Picks elements of the flattened tensor; result has shape {indices.size()}.
Var gather(const Var& a, std::span<const std::size_t> indices);
// Picks rows of a 2-D tensor; result has shape {rows.size(), cols}.
Var gather_rows(const Var& a, std::span<const std::size_t> rows);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

// Plain-value kernels shared with non-differentiable code paths.
Tensor matmul_values(const Tensor& a, const Tensor& b);
Tensor transpose_values(const Tensor& a);
double sigmoid_value(double x);

}  // namespace pavsgg::diff
