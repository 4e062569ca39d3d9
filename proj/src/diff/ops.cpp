#include "pavsgg/diff/ops.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

namespace pavsgg::diff {
namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands live on different tapes");
  return a.tape();
}

void require_rank(const Var& a, std::size_t rank, const char* op) {
  if (a.value().rank() != rank) {
    throw ShapeError(std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                     shape_to_string(a.shape()));
  }
}

// outer x axis x inner decomposition of a shape around `axis`.
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_to_string(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.data().data(), t.dim(0), t.dim(1)); }

// dA = G * B^T for G: m x n, B: k x n.
Tensor matmul_nt(const Tensor& g, const Tensor& b) {
  Tensor out(Shape{g.dim(0), b.dim(0)});
  MutMap(out.data().data(), g.dim(0), b.dim(0)).noalias() = as_matrix(g) * as_matrix(b).transpose();
  return out;
}

// dB = A^T * G for A: m x k, G: m x n.
Tensor matmul_tn(const Tensor& a, const Tensor& g) {
  Tensor out(Shape{a.dim(1), g.dim(1)});
  MutMap(out.data().data(), a.dim(1), g.dim(1)).noalias() = as_matrix(a).transpose() * as_matrix(g);
  return out;
}

template <typename F, typename D>
Var unary(const Var& a, F forward, D derivative) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = forward(x[i]);
  const std::size_t ai = a.id();
  return a.tape().record(std::move(y), {ai}, [ai, derivative](Tape& t, std::size_t self) {
    const Tensor& xv = t.value(ai);
    const Tensor& yv = t.value(self);
    const Tensor& g = t.grad_buffer(self);
    Tensor dx(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) dx[i] = g[i] * derivative(xv[i], yv[i]);
    t.accumulate(ai, dx);
  });
}

enum class Broadcast { None, LeftScalar, RightScalar };

Broadcast check_binary(const Var& a, const Var& b, const char* op) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return Broadcast::None;
  if (sa.empty()) return Broadcast::LeftScalar;
  if (sb.empty()) return Broadcast::RightScalar;
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(sa) + " vs " +
                   shape_to_string(sb));
}

double reduce_sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  return s;
}

}  // namespace

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Tensor out(Shape{a.dim(0), b.dim(1)});
  MutMap(out.data().data(), a.dim(0), b.dim(1)).noalias() = as_matrix(a) * as_matrix(b);
  return out;
}

Tensor transpose_values(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose expects rank 2, got " + shape_to_string(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

Var matmul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  Tensor y = matmul_values(a.value(), b.value());
  const std::size_t ai = a.id(), bi = b.id();
  return tape.record(std::move(y), {ai, bi}, [ai, bi](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.requires_grad(ai)) t.accumulate(ai, matmul_nt(g, t.value(bi)));
    if (t.requires_grad(bi)) t.accumulate(bi, matmul_tn(t.value(ai), g));
  });
}

Var transpose(const Var& a) {
  require_rank(a, 2, "transpose");
  const std::size_t ai = a.id();
  return a.tape().record(transpose_values(a.value()), {ai}, [ai](Tape& t, std::size_t self) {
    t.accumulate(ai, transpose_values(t.grad_buffer(self)));
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Tape& tape = parts[0].tape();
  Shape base = parts[0].shape();
  if (axis >= base.size()) {
    throw ShapeError("concat axis " + std::to_string(axis) + " out of range for " +
                     shape_to_string(base));
  }
  std::size_t total = 0;
  std::vector<std::size_t> ids, lens;
  for (const auto& p : parts) {
    same_tape(parts[0], p);
    Shape s = p.shape();
    Shape cmp = s;
    if (s.size() != base.size()) {
      throw ShapeError("concat: rank mismatch " + shape_to_string(base) + " vs " +
                       shape_to_string(s));
    }
    cmp[axis] = base[axis];
    if (cmp != base) {
      throw ShapeError("concat: shape mismatch " + shape_to_string(base) + " vs " +
                       shape_to_string(s));
    }
    total += s[axis];
    ids.push_back(p.id());
    lens.push_back(s[axis]);
  }
  Shape out_shape = base;
  out_shape[axis] = total;
  const AxisView v = axis_view(out_shape, axis);
  Tensor y(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& x = parts[k].value();
    const std::size_t len = lens[k];
    for (std::size_t o = 0; o < v.outer; ++o) {
      const double* src = x.data().data() + o * len * v.inner;
      double* dst = y.data().data() + (o * v.len + offset) * v.inner;
      std::copy(src, src + len * v.inner, dst);
    }
    offset += len;
  }
  return tape.record(std::move(y), ids, [ids, lens, v](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t len = lens[k];
      if (t.requires_grad(ids[k])) {
        Tensor dx(t.value(ids[k]).shape());
        for (std::size_t o = 0; o < v.outer; ++o) {
          const double* src = g.data().data() + (o * v.len + off) * v.inner;
          std::copy(src, src + len * v.inner, dx.data().data() + o * len * v.inner);
        }
        t.accumulate(ids[k], dx);
      }
      off += len;
    }
  });
}

Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  const AxisView v = axis_view(s, axis);
  if (start + length > v.len) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") exceeds axis of shape " + shape_to_string(s));
  }
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor y(out_shape);
  const Tensor& x = a.value();
  for (std::size_t o = 0; o < v.outer; ++o) {
    const double* src = x.data().data() + (o * v.len + start) * v.inner;
    std::copy(src, src + length * v.inner, y.data().data() + o * length * v.inner);
  }
  const std::size_t ai = a.id();
  return a.tape().record(std::move(y), {ai}, [ai, v, start, length](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    Tensor dx(t.value(ai).shape());
    for (std::size_t o = 0; o < v.outer; ++o) {
      const double* src = g.data().data() + o * length * v.inner;
      std::copy(src, src + length * v.inner,
                dx.data().data() + (o * v.len + start) * v.inner);
    }
    t.accumulate(ai, dx);
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  const std::size_t ai = a.id();
  return a.tape().record(std::move(y), {ai}, [ai](Tape& t, std::size_t self) {
    t.accumulate(ai, t.grad_buffer(self).reshaped(t.value(ai).shape()));
  });
}

Var add(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Broadcast bc = check_binary(a, b, "add");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(bc == Broadcast::LeftScalar ? z.shape() : x.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) {
    y[i] = x[bc == Broadcast::LeftScalar ? 0 : i] + z[bc == Broadcast::RightScalar ? 0 : i];
  }
  const std::size_t ai = a.id(), bi = b.id();
  return tape.record(std::move(y), {ai, bi}, [ai, bi, bc](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    auto push = [&](std::size_t id, bool scalar) {
      if (!t.requires_grad(id)) return;
      if (scalar) t.accumulate(id, Tensor::scalar(reduce_sum(g)));
      else t.accumulate(id, g);
    };
    push(ai, bc == Broadcast::LeftScalar);
    push(bi, bc == Broadcast::RightScalar);
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Broadcast bc = check_binary(a, b, "sub");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(bc == Broadcast::LeftScalar ? z.shape() : x.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) {
    y[i] = x[bc == Broadcast::LeftScalar ? 0 : i] - z[bc == Broadcast::RightScalar ? 0 : i];
  }
  const std::size_t ai = a.id(), bi = b.id();
  return tape.record(std::move(y), {ai, bi}, [ai, bi, bc](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.requires_grad(ai)) {
      if (bc == Broadcast::LeftScalar) t.accumulate(ai, Tensor::scalar(reduce_sum(g)));
      else t.accumulate(ai, g);
    }
    if (t.requires_grad(bi)) {
      if (bc == Broadcast::RightScalar) {
        t.accumulate(bi, Tensor::scalar(-reduce_sum(g)));
      } else {
        Tensor ng = g;
        for (auto& v : ng.data()) v = -v;
        t.accumulate(bi, ng);
      }
    }
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Broadcast bc = check_binary(a, b, "mul");
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  Tensor y(bc == Broadcast::LeftScalar ? z.shape() : x.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) {
    y[i] = x[bc == Broadcast::LeftScalar ? 0 : i] * z[bc == Broadcast::RightScalar ? 0 : i];
  }
  const std::size_t ai = a.id(), bi = b.id();
  return tape.record(std::move(y), {ai, bi}, [ai, bi, bc](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    const Tensor& xv = t.value(ai);
    const Tensor& zv = t.value(bi);
    const std::size_t n = g.numel();
    auto xa = [&](std::size_t i) { return xv[bc == Broadcast::LeftScalar ? 0 : i]; };
    auto za = [&](std::size_t i) { return zv[bc == Broadcast::RightScalar ? 0 : i]; };
    if (t.requires_grad(ai)) {
      if (bc == Broadcast::LeftScalar) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += g[i] * za(i);
        t.accumulate(ai, Tensor::scalar(s));
      } else {
        Tensor dx(xv.shape());
        for (std::size_t i = 0; i < n; ++i) dx[i] = g[i] * za(i);
        t.accumulate(ai, dx);
      }
    }
    if (t.requires_grad(bi)) {
      if (bc == Broadcast::RightScalar) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += g[i] * xa(i);
        t.accumulate(bi, Tensor::scalar(s));
      } else {
        Tensor dz(zv.shape());
        for (std::size_t i = 0; i < n; ++i) dz[i] = g[i] * xa(i);
        t.accumulate(bi, dz);
      }
    }
  });
}

Var scale(const Var& a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var add_scalar(const Var& a, double offset) {
  return unary(
      a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var sum(const Var& a) {
  const std::size_t ai = a.id();
  return a.tape().record(Tensor::scalar(reduce_sum(a.value())), {ai},
                         [ai](Tape& t, std::size_t self) {
                           const double g = t.grad_buffer(self)[0];
                           t.accumulate(ai, Tensor(t.value(ai).shape(), g));
                         });
}

Var sum(const Var& a, std::size_t axis) {
  const Shape& s = a.shape();
  const AxisView v = axis_view(s, axis);
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  Tensor y(out_shape);
  const Tensor& x = a.value();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t l = 0; l < v.len; ++l)
      for (std::size_t in = 0; in < v.inner; ++in)
        y[o * v.inner + in] += x[(o * v.len + l) * v.inner + in];
  const std::size_t ai = a.id();
  return a.tape().record(std::move(y), {ai}, [ai, v](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    Tensor dx(t.value(ai).shape());
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t l = 0; l < v.len; ++l)
        for (std::size_t in = 0; in < v.inner; ++in)
          dx[(o * v.len + l) * v.inner + in] = g[o * v.inner + in];
    t.accumulate(ai, dx);
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().numel();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& a) {
  return unary(a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return sigmoid_value(x); });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var softmax(const Var& a, std::size_t axis) {
  const AxisView v = axis_view(a.shape(), axis);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      auto idx = [&](std::size_t l) { return (o * v.len + l) * v.inner + in; };
      double mx = -INFINITY;
      for (std::size_t l = 0; l < v.len; ++l) mx = std::max(mx, x[idx(l)]);
      double z = 0.0;
      for (std::size_t l = 0; l < v.len; ++l) {
        y[idx(l)] = std::exp(x[idx(l)] - mx);
        z += y[idx(l)];
      }
      for (std::size_t l = 0; l < v.len; ++l) y[idx(l)] /= z;
    }
  }
  const std::size_t ai = a.id();
  return a.tape().record(std::move(y), {ai}, [ai, v](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    const Tensor& yv = t.value(self);
    Tensor dx(yv.shape());
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        auto idx = [&](std::size_t l) { return (o * v.len + l) * v.inner + in; };
        double dot = 0.0;
        for (std::size_t l = 0; l < v.len; ++l) dot += g[idx(l)] * yv[idx(l)];
        for (std::size_t l = 0; l < v.len; ++l) dx[idx(l)] = yv[idx(l)] * (g[idx(l)] - dot);
      }
    }
    t.accumulate(ai, dx);
  });
}

Var layer_norm(const Var& a, std::size_t axis, double eps) {
  const AxisView v = axis_view(a.shape(), axis);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  std::vector<double> inv_std(v.outer * v.inner);
  const double n = static_cast<double>(v.len);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      auto idx = [&](std::size_t l) { return (o * v.len + l) * v.inner + in; };
      double mu = 0.0;
      for (std::size_t l = 0; l < v.len; ++l) mu += x[idx(l)];
      mu /= n;
      double var = 0.0;
      for (std::size_t l = 0; l < v.len; ++l) var += (x[idx(l)] - mu) * (x[idx(l)] - mu);
      var /= n;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[o * v.inner + in] = is;
      for (std::size_t l = 0; l < v.len; ++l) y[idx(l)] = (x[idx(l)] - mu) * is;
    }
  }
  const std::size_t ai = a.id();
  return a.tape().record(std::move(y), {ai}, [ai, v, inv_std = std::move(inv_std)](
                                                  Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    const Tensor& yv = t.value(self);
    Tensor dx(yv.shape());
    const double n = static_cast<double>(v.len);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        auto idx = [&](std::size_t l) { return (o * v.len + l) * v.inner + in; };
        double gm = 0.0, gy = 0.0;
        for (std::size_t l = 0; l < v.len; ++l) {
          gm += g[idx(l)];
          gy += g[idx(l)] * yv[idx(l)];
        }
        gm /= n;
        gy /= n;
        const double is = inv_std[o * v.inner + in];
        for (std::size_t l = 0; l < v.len; ++l)
          dx[idx(l)] = is * (g[idx(l)] - gm - yv[idx(l)] * gy);
      }
    }
    t.accumulate(ai, dx);
  });
}

Var gather(const Var& a, std::span<const std::size_t> indices) {
  const Tensor& x = a.value();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  Tensor y(Shape{idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= x.numel()) {
      throw ShapeError("gather index " + std::to_string(idx[i]) + " out of range for shape " +
                       shape_to_string(x.shape()));
    }
    y[i] = x[idx[i]];
  }
  const std::size_t ai = a.id();
  return a.tape().record(std::move(y), {ai}, [ai, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    Tensor& dx = t.grad_buffer(ai);
    for (std::size_t i = 0; i < idx.size(); ++i) dx[idx[i]] += g[i];
  });
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows) {
  require_rank(a, 2, "gather_rows");
  const Tensor& x = a.value();
  const std::size_t cols = x.dim(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tensor y(Shape{idx.size(), cols});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= x.dim(0)) {
      throw ShapeError("gather_rows index " + std::to_string(idx[i]) + " out of range for shape " +
                       shape_to_string(x.shape()));
    }
    std::copy_n(x.data().data() + idx[i] * cols, cols, y.data().data() + i * cols);
  }
  const std::size_t ai = a.id();
  return a.tape().record(std::move(y), {ai},
                         [ai, cols, idx = std::move(idx)](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad_buffer(self);
                           Tensor& dx = t.grad_buffer(ai);
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             for (std::size_t c = 0; c < cols; ++c)
                               dx[idx[i] * cols + c] += g[i * cols + c];
                         });
}

}  // namespace pavsgg::diff
