// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/nn/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hlab/common/error.hpp"

namespace hlab::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mat = Eigen::Map<RowMat>;
using CMat = Eigen::Map<const RowMat>;
using Strided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using CStrided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using Arr = Eigen::Map<Eigen::ArrayXd>;
using CArr = Eigen::Map<const Eigen::ArrayXd>;

CArr carr(const Buffer& v) {
  return CArr(v.data(), static_cast<Eigen::Index>(v.size()));
}
Arr arr(Buffer& v) { return Arr(v.data(), static_cast<Eigen::Index>(v.size())); }

Eigen::Index as_index(std::size_t n) { return static_cast<Eigen::Index>(n); }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& a, int rank) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(a.shape()));
  }
}

int last_dim(const Tensor& t) { return t.shape().empty() ? 1 : t.shape().back(); }
std::size_t leading_rows(const Tensor& t) { return t.size() / std::max(1, last_dim(t)); }

template <class Fwd, class Bwd>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Bwd bwd) {
  Buffer y(a.size());
  Arr ym = arr(y);
  fwd(carr(a.node()->value), ym);
  return make_op(op, a.shape(), std::move(y), {a}, [bwd](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Arr g = arr(p.grad_buffer());
    bwd(carr(p.value), carr(self.value), carr(self.grad), g);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Buffer y(a.size());
  arr(y) = carr(a.node()->value) + carr(b.node()->value);
  return make_op("add", a.shape(), std::move(y), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) arr(p->grad_buffer()) += carr(self.grad);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Buffer y(a.size());
  arr(y) = carr(a.node()->value) - carr(b.node()->value);
  return make_op("sub", a.shape(), std::move(y), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) arr(self.parents[0]->grad_buffer()) += carr(self.grad);
    if (self.parents[1]->requires_grad) arr(self.parents[1]->grad_buffer()) -= carr(self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Buffer y(a.size());
  arr(y) = carr(a.node()->value) * carr(b.node()->value);
  return make_op("mul", a.shape(), std::move(y), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) arr(pa.grad_buffer()) += carr(self.grad) * carr(pb.value);
    if (pb.requires_grad) arr(pb.grad_buffer()) += carr(self.grad) * carr(pa.value);
  });
}

Tensor scale(const Tensor& a, double c) {
  return unary(
      "scale", a, [c](CArr x, Arr y) { y = x * c; },
      [c](CArr, CArr, CArr gy, Arr gx) { gx += gy * c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary(
      "add_scalar", a, [c](CArr x, Arr y) { y = x + c; },
      [](CArr, CArr, CArr gy, Arr gx) { gx += gy; });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](CArr x, Arr y) { y = x.square(); },
      [](CArr x, CArr, CArr gy, Arr gx) { gx += 2.0 * x * gy; });
}

Tensor abs(const Tensor& a) {
  return unary(
      "abs", a, [](CArr x, Arr y) { y = x.abs(); },
      [](CArr x, CArr, CArr gy, Arr gx) { gx += x.sign() * gy; });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](CArr x, Arr y) { y = x.exp(); },
      [](CArr, CArr y, CArr gy, Arr gx) { gx += y * gy; });
}

Tensor log(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) throw NumericalError("log: non-positive input");
  }
  return unary(
      "log", a, [](CArr x, Arr y) { y = x.log(); },
      [](CArr x, CArr, CArr gy, Arr gx) { gx += gy / x; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a, [](CArr x, Arr y) { y = 0.5 * (1.0 + (0.5 * x).tanh()); },
      [](CArr, CArr y, CArr gy, Arr gx) { gx += gy * y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](CArr x, Arr y) { y = x.tanh(); },
      [](CArr, CArr y, CArr gy, Arr gx) { gx += gy * (1.0 - y.square()); });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](CArr x, Arr y) { y = x.max(0.0); },
      [](CArr x, CArr, CArr gy, Arr gx) { gx += (x > 0.0).cast<double>() * gy; });
}

Tensor prelu(const Tensor& x, const Tensor& alpha) {
  const int c = last_dim(x);
  if (alpha.size() != static_cast<std::size_t>(c)) {
    throw ShapeError("prelu: alpha has " + std::to_string(alpha.size()) + " entries for " +
                     std::to_string(c) + " channels");
  }
  const auto& xv = x.node()->value;
  const auto& av = alpha.node()->value;
  const std::size_t rows = xv.size() / c;
  Buffer y(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * c;
    double* yr = y.data() + r * c;
    for (int k = 0; k < c; ++k) yr[k] = xr[k] > 0.0 ? xr[k] : av[k] * xr[k];
  }
  return make_op("prelu", x.shape(), std::move(y), {x, alpha}, [c, rows](Node& self) {
    Node& px = *self.parents[0];
    Node& pa = *self.parents[1];
    const auto& gy = self.grad;
    const double* a = pa.value.data();
    if (px.requires_grad) {
      double* gx = px.grad_buffer().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t o = r * c;
        for (int k = 0; k < c; ++k) gx[o + k] += px.value[o + k] > 0.0 ? gy[o + k] : a[k] * gy[o + k];
      }
    }
    if (pa.requires_grad) {
      Buffer acc(c, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t o = r * c;
        for (int k = 0; k < c; ++k) {
          const double xk = px.value[o + k];
          acc[k] += xk > 0.0 ? 0.0 : gy[o + k] * xk;
        }
      }
      auto& ga = pa.grad_buffer();
      for (int k = 0; k < c; ++k) ga[k] += acc[k];
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  const int c = last_dim(x);
  if (b.size() != static_cast<std::size_t>(c)) {
    throw ShapeError("add_bias: bias size " + std::to_string(b.size()) + " vs last axis " +
                     std::to_string(c));
  }
  const auto rows = as_index(leading_rows(x));
  Buffer y(x.size());
  Mat(y.data(), rows, c) =
      CMat(x.node()->value.data(), rows, c).rowwise() +
      Eigen::Map<const Eigen::RowVectorXd>(b.node()->value.data(), c);
  return make_op("add_bias", x.shape(), std::move(y), {x, b}, [rows, c](Node& self) {
    Node& px = *self.parents[0];
    Node& pb = *self.parents[1];
    if (px.requires_grad) arr(px.grad_buffer()) += carr(self.grad);
    if (pb.requires_grad) {
      Eigen::Map<Eigen::RowVectorXd>(pb.grad_buffer().data(), c) +=
          CMat(self.grad.data(), rows, c).colwise().sum();
    }
  });
}

Tensor sum(const Tensor& a) {
  const double s = carr(a.node()->value).sum();
  return make_op("sum", {1}, {s}, {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (p.requires_grad) arr(p.grad_buffer()) += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  const double m = carr(a.node()->value).sum() / n;
  return make_op("mean", {1}, {m}, {a}, [n](Node& self) {
    Node& p = *self.parents[0];
    if (p.requires_grad) arr(p.grad_buffer()) += self.grad[0] / n;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return make_op("reshape", std::move(shape), a.node()->value, {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (p.requires_grad) arr(p.grad_buffer()) += carr(self.grad);
  });
}

Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  const auto& in_shape = a.shape();
  const int rank = a.rank();
  if (static_cast<int>(perm.size()) != rank) throw ShapeError("permute: rank mismatch");
  std::vector<bool> used(rank, false);
  for (int p : perm) {
    if (p < 0 || p >= rank || used[p]) throw ShapeError("permute: invalid permutation");
    used[p] = true;
  }
  std::vector<std::size_t> in_stride(rank, 1);
  for (int i = rank - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * in_shape[i + 1];
  Shape out_shape(rank);
  std::vector<std::size_t> src_stride(rank);
  for (int i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[perm[i]];
    src_stride[i] = in_stride[perm[i]];
  }
  // index[j] = source offset of output element j.
  auto index = std::make_shared<std::vector<std::size_t>>(a.size());
  std::vector<int> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    (*index)[j] = src;
    for (int d = rank - 1; d >= 0; --d) {
      src += src_stride[d];
      if (++counter[d] < out_shape[d]) break;
      src -= src_stride[d] * out_shape[d];
      counter[d] = 0;
    }
  }
  const auto& av = a.node()->value;
  Buffer y(a.size());
  for (std::size_t j = 0; j < y.size(); ++j) y[j] = av[(*index)[j]];
  return make_op("permute", out_shape, std::move(y), {a}, [index](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t j = 0; j < self.grad.size(); ++j) g[(*index)[j]] += self.grad[j];
  });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_last: no inputs");
  const auto rows = leading_rows(parts[0]);
  std::vector<int> widths;
  int total = 0;
  for (const auto& p : parts) {
    Shape lead(p.shape().begin(), p.shape().end() - 1);
    Shape lead0(parts[0].shape().begin(), parts[0].shape().end() - 1);
    if (lead != lead0) {
      throw ShapeError("concat_last: leading shapes differ " + shape_str(p.shape()) + " vs " +
                       shape_str(parts[0].shape()));
    }
    widths.push_back(last_dim(p));
    total += last_dim(p);
  }
  Buffer y(rows * total);
  int off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    Strided(y.data() + off, as_index(rows), widths[k], Eigen::OuterStride<>(total)) =
        CMat(parts[k].node()->value.data(), as_index(rows), widths[k]);
    off += widths[k];
  }
  Shape shape = parts[0].shape();
  shape.back() = total;
  return make_op("concat_last", std::move(shape), std::move(y), parts,
                 [rows, widths, total](Node& self) {
                   int off = 0;
                   for (std::size_t k = 0; k < self.parents.size(); ++k) {
                     Node& p = *self.parents[k];
                     if (p.requires_grad) {
                       Mat(p.grad_buffer().data(), as_index(rows), widths[k]) +=
                           CStrided(self.grad.data() + off, as_index(rows), widths[k],
                                    Eigen::OuterStride<>(total));
                     }
                     off += widths[k];
                   }
                 });
}

Tensor slice_last(const Tensor& a, int begin, int count) {
  const int width = last_dim(a);
  if (begin < 0 || count <= 0 || begin + count > width) {
    throw ShapeError("slice_last: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                     ") out of range for " + shape_str(a.shape()));
  }
  const auto rows = as_index(leading_rows(a));
  Buffer y(static_cast<std::size_t>(rows) * count);
  Mat(y.data(), rows, count) =
      CStrided(a.node()->value.data() + begin, rows, count, Eigen::OuterStride<>(width));
  Shape shape = a.shape();
  shape.back() = count;
  return make_op("slice_last", std::move(shape), std::move(y), {a},
                 [rows, begin, count, width](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   Strided(p.grad_buffer().data() + begin, rows, count,
                           Eigen::OuterStride<>(width)) += CMat(self.grad.data(), rows, count);
                 });
}

Tensor select_rows(const Tensor& x, int begin, int step, int count) {
  require_rank("select_rows", x, 3);
  const int n = x.dim(0), len = x.dim(1), c = x.dim(2);
  if (begin < 0 || step < 1 || count < 1 || begin + (count - 1) * step >= len) {
    throw ShapeError("select_rows: rows " + std::to_string(begin) + ":" + std::to_string(step) +
                     " x" + std::to_string(count) + " out of range for " + shape_str(x.shape()));
  }
  const auto& xv = x.node()->value;
  Buffer y(static_cast<std::size_t>(n) * count * c);
  auto src = [=](int b, int i) { return (static_cast<std::size_t>(b) * len + begin + i * step) * c; };
  for (int b = 0; b < n; ++b) {
    for (int i = 0; i < count; ++i) {
      std::copy_n(xv.data() + src(b, i), c, y.data() + (static_cast<std::size_t>(b) * count + i) * c);
    }
  }
  return make_op("select_rows", {n, count, c}, std::move(y), {x}, [=](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (int b = 0; b < n; ++b) {
      for (int i = 0; i < count; ++i) {
        const double* gy = self.grad.data() + (static_cast<std::size_t>(b) * count + i) * c;
        double* gx = g.data() + src(b, i);
        for (int k = 0; k < c; ++k) gx[k] += gy[k];
      }
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Buffer y(static_cast<std::size_t>(m) * n);
  Mat(y.data(), m, n).noalias() =
      CMat(a.node()->value.data(), m, k) * CMat(b.node()->value.data(), k, n);
  return make_op("matmul", {m, n}, std::move(y), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    CMat g(self.grad.data(), m, n);
    if (pa.requires_grad) {
      Mat(pa.grad_buffer().data(), m, k).noalias() += g * CMat(pb.value.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      Mat(pb.grad_buffer().data(), k, n).noalias() += CMat(pa.value.data(), m, k).transpose() * g;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank("linear(weight)", w, 2);
  const int in = w.dim(0), out = w.dim(1);
  if (last_dim(x) != in) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(w.shape()));
  }
  if (b.defined() && b.size() != static_cast<std::size_t>(out)) {
    throw ShapeError("linear: bias size mismatch");
  }
  const auto rows = as_index(leading_rows(x));
  Buffer y(static_cast<std::size_t>(rows) * out);
  Mat ym(y.data(), rows, out);
  ym.noalias() = CMat(x.node()->value.data(), rows, in) * CMat(w.node()->value.data(), in, out);
  if (b.defined()) ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.node()->value.data(), out);
  Shape shape = x.shape();
  shape.back() = out;
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  return make_op("linear", std::move(shape), std::move(y), inputs, [rows, in, out](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    CMat g(self.grad.data(), rows, out);
    if (px.requires_grad) {
      Mat(px.grad_buffer().data(), rows, in).noalias() +=
          g * CMat(pw.value.data(), in, out).transpose();
    }
    if (pw.requires_grad) {
      Mat(pw.grad_buffer().data(), in, out).noalias() +=
          CMat(px.value.data(), rows, in).transpose() * g;
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      Eigen::Map<Eigen::RowVectorXd>(self.parents[2]->grad_buffer().data(), out) +=
          g.colwise().sum();
    }
  });
}

Tensor softmax_last(const Tensor& x) {
  const int c = last_dim(x);
  const auto rows = as_index(leading_rows(x));
  Buffer y(x.size());
  Mat ym(y.data(), rows, c);
  ym = CMat(x.node()->value.data(), rows, c);
  ym.colwise() -= ym.rowwise().maxCoeff();
  ym = ym.array().exp().matrix();
  ym.array().colwise() /= ym.array().rowwise().sum();
  return make_op("softmax", x.shape(), std::move(y), {x}, [rows, c](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    CMat ys(self.value.data(), rows, c);
    CMat gy(self.grad.data(), rows, c);
    const Eigen::VectorXd dot = (ys.array() * gy.array()).rowwise().sum();
    Mat(p.grad_buffer().data(), rows, c).array() +=
        ys.array() * (gy.array().colwise() - dot.array());
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const int d = last_dim(x);
  if (gamma.size() != static_cast<std::size_t>(d) || beta.size() != static_cast<std::size_t>(d)) {
    throw ShapeError("layer_norm: affine size mismatch for width " + std::to_string(d));
  }
  const auto rows = as_index(leading_rows(x));
  auto xhat = std::make_shared<Buffer>(x.size());
  auto inv_std = std::make_shared<Eigen::VectorXd>(rows);
  CMat xm(x.node()->value.data(), rows, d);
  Mat xh(xhat->data(), rows, d);
  const Eigen::VectorXd mu = xm.rowwise().mean();
  xh = xm.colwise() - mu;
  const Eigen::VectorXd var = xh.array().square().rowwise().mean();
  *inv_std = (var.array() + eps).rsqrt();
  xh.array().colwise() *= inv_std->array();
  Buffer y(x.size());
  Eigen::Map<const Eigen::RowVectorXd> gm(gamma.node()->value.data(), d);
  Eigen::Map<const Eigen::RowVectorXd> bm(beta.node()->value.data(), d);
  Mat(y.data(), rows, d) = (xh.array().rowwise() * gm.array()).rowwise() + bm.array();
  return make_op("layer_norm", x.shape(), std::move(y), {x, gamma, beta},
                 [rows, d, xhat, inv_std](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pg = *self.parents[1];
                   Node& pb = *self.parents[2];
                   CMat gy(self.grad.data(), rows, d);
                   CMat xh(xhat->data(), rows, d);
                   if (pg.requires_grad) {
                     Eigen::Map<Eigen::RowVectorXd>(pg.grad_buffer().data(), d) +=
                         (gy.array() * xh.array()).colwise().sum().matrix();
                   }
                   if (pb.requires_grad) {
                     Eigen::Map<Eigen::RowVectorXd>(pb.grad_buffer().data(), d) +=
                         gy.colwise().sum();
                   }
                   if (px.requires_grad) {
                     Eigen::Map<const Eigen::RowVectorXd> gm(pg.value.data(), d);
                     const RowMat dxh = gy.array().rowwise() * gm.array();
                     const Eigen::VectorXd m1 = dxh.rowwise().mean();
                     const Eigen::VectorXd m2 = (dxh.array() * xh.array()).rowwise().mean();
                     RowMat dx = dxh;
                     dx.colwise() -= m1;
                     dx.array() -= xh.array().colwise() * m2.array();
                     dx.array().colwise() *= inv_std->array();
                     Mat(px.grad_buffer().data(), rows, d) += dx;
                   }
                 });
}

namespace {

// cols[(n, l), k * cin + ci] = x[n, l + (k - half) * dilation, ci], zero outside.
void im2col(const double* x, int n, int len, int cin, int kernel, int dilation, double* cols) {
  const int half = (kernel - 1) / 2;
  const int width = kernel * cin;
  for (int b = 0; b < n; ++b) {
    for (int l = 0; l < len; ++l) {
      double* row = cols + (static_cast<std::size_t>(b) * len + l) * width;
      for (int k = 0; k < kernel; ++k) {
        const int src = l + (k - half) * dilation;
        double* dst = row + k * cin;
        if (src < 0 || src >= len) {
          std::fill(dst, dst + cin, 0.0);
        } else {
          const double* s = x + (static_cast<std::size_t>(b) * len + src) * cin;
          std::copy(s, s + cin, dst);
        }
      }
    }
  }
}

void col2im_add(const double* cols, int n, int len, int cin, int kernel, int dilation,
                double* gx) {
  const int half = (kernel - 1) / 2;
  const int width = kernel * cin;
  for (int b = 0; b < n; ++b) {
    for (int l = 0; l < len; ++l) {
      const double* row = cols + (static_cast<std::size_t>(b) * len + l) * width;
      for (int k = 0; k < kernel; ++k) {
        const int src = l + (k - half) * dilation;
        if (src < 0 || src >= len) continue;
        double* d = gx + (static_cast<std::size_t>(b) * len + src) * cin;
        const double* s = row + k * cin;
        for (int c = 0; c < cin; ++c) d[c] += s[c];
      }
    }
  }
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int kernel, int dilation) {
  require_rank("conv1d", x, 3);
  require_rank("conv1d(weight)", w, 2);
  if (kernel < 1 || kernel % 2 == 0 || dilation < 1) {
    throw ShapeError("conv1d: kernel must be odd and dilation positive");
  }
  const int n = x.dim(0), len = x.dim(1), cin = x.dim(2), cout = w.dim(1);
  if (w.dim(0) != kernel * cin) {
    throw ShapeError("conv1d: weight " + shape_str(w.shape()) + " does not match kernel " +
                     std::to_string(kernel) + " x " + std::to_string(cin) + " channels");
  }
  if (b.size() != static_cast<std::size_t>(cout)) throw ShapeError("conv1d: bias size mismatch");
  const Eigen::Index rows = static_cast<Eigen::Index>(n) * len;
  Buffer cols(static_cast<std::size_t>(rows) * kernel * cin);
  im2col(x.node()->value.data(), n, len, cin, kernel, dilation, cols.data());
  Buffer y(static_cast<std::size_t>(rows) * cout);
  Mat ym(y.data(), rows, cout);
  ym.noalias() = CMat(cols.data(), rows, kernel * cin) * CMat(w.node()->value.data(), kernel * cin, cout);
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.node()->value.data(), cout);
  return make_op("conv1d", {n, len, cout}, std::move(y), {x, w, b},
                 [n, len, cin, cout, kernel, dilation, rows](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pw = *self.parents[1];
                   Node& pb = *self.parents[2];
                   const int width = kernel * cin;
                   CMat gy(self.grad.data(), rows, cout);
                   if (pb.requires_grad) {
                     Eigen::Map<Eigen::RowVectorXd>(pb.grad_buffer().data(), cout) +=
                         gy.colwise().sum();
                   }
                   if (pw.requires_grad) {
                     Buffer cols(static_cast<std::size_t>(rows) * width);
                     im2col(px.value.data(), n, len, cin, kernel, dilation, cols.data());
                     Mat(pw.grad_buffer().data(), width, cout).noalias() +=
                         CMat(cols.data(), rows, width).transpose() * gy;
                   }
                   if (px.requires_grad) {
                     Buffer gcols(static_cast<std::size_t>(rows) * width);
                     Mat(gcols.data(), rows, width).noalias() =
                         gy * CMat(pw.value.data(), width, cout).transpose();
                     col2im_add(gcols.data(), n, len, cin, kernel, dilation,
                                px.grad_buffer().data());
                   }
                 });
}

namespace {

struct GruTape {
  // Step-major [L][N][H] buffers.
  Buffer r, z, cand, hn, h;  // h holds L + 1 states, h[0] = 0
};

}  // namespace

Tensor gru(const Tensor& x, const Tensor& wx, const Tensor& wh, const Tensor& bx,
           const Tensor& bh) {
  require_rank("gru", x, 3);
  const int n = x.dim(0), len = x.dim(1), in = x.dim(2);
  if (wx.rank() != 2 || wx.dim(0) != in || wx.dim(1) % 3 != 0) {
    throw ShapeError("gru: input weight " + shape_str(wx.shape()) + " does not match input " +
                     shape_str(x.shape()));
  }
  const int h3 = wx.dim(1), hid = h3 / 3;
  if (wh.rank() != 2 || wh.dim(0) != hid || wh.dim(1) != h3 || bx.size() != std::size_t(h3) ||
      bh.size() != std::size_t(h3)) {
    throw ShapeError("gru: recurrent parameter shapes inconsistent with hidden size " +
                     std::to_string(hid));
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(n) * len;
  // Input projections for every (n, l) at once.
  RowMat xg = CMat(x.node()->value.data(), rows, in) * CMat(wx.node()->value.data(), in, h3);
  xg.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bx.node()->value.data(), h3);

  auto tape = std::make_shared<GruTape>();
  const std::size_t step = static_cast<std::size_t>(n) * hid;
  tape->r.resize(step * len);
  tape->z.resize(step * len);
  tape->cand.resize(step * len);
  tape->hn.resize(step * len);
  tape->h.assign(step * (len + 1), 0.0);

  CMat whm(wh.node()->value.data(), hid, h3);
  Eigen::Map<const Eigen::RowVectorXd> bhm(bh.node()->value.data(), h3);
  RowMat hg(n, h3);
  RowMat xs(n, h3);
  Buffer y(static_cast<std::size_t>(rows) * hid);
  for (int l = 0; l < len; ++l) {
    CMat hprev(tape->h.data() + step * l, n, hid);
    hg.noalias() = hprev * whm;
    hg.rowwise() += bhm;
    for (int b = 0; b < n; ++b) xs.row(b) = xg.row(static_cast<Eigen::Index>(b) * len + l);
    Mat r(tape->r.data() + step * l, n, hid);
    Mat z(tape->z.data() + step * l, n, hid);
    Mat c(tape->cand.data() + step * l, n, hid);
    Mat hn(tape->hn.data() + step * l, n, hid);
    Mat hcur(tape->h.data() + step * (l + 1), n, hid);
    r = (0.5 * (1.0 + (0.5 * (xs.leftCols(hid) + hg.leftCols(hid)).array()).tanh())).matrix();
    z = (0.5 * (1.0 + (0.5 * (xs.middleCols(hid, hid) + hg.middleCols(hid, hid)).array()).tanh()))
            .matrix();
    hn = hg.rightCols(hid);
    c = (xs.rightCols(hid).array() + r.array() * hn.array()).tanh().matrix();
    hcur = ((1.0 - z.array()) * c.array() + z.array() * hprev.array()).matrix();
    for (int b = 0; b < n; ++b) {
      std::copy(hcur.row(b).data(), hcur.row(b).data() + hid,
                y.data() + (static_cast<std::size_t>(b) * len + l) * hid);
    }
  }

  return make_op("gru", {n, len, hid}, std::move(y), {x, wx, wh, bx, bh},
                 [n, len, in, hid, h3, rows, tape](Node& self) {
                   Node& px = *self.parents[0];
                   Node& pwx = *self.parents[1];
                   Node& pwh = *self.parents[2];
                   Node& pbx = *self.parents[3];
                   Node& pbh = *self.parents[4];
                   const std::size_t step = static_cast<std::size_t>(n) * hid;
                   CMat whm(pwh.value.data(), hid, h3);
                   RowMat dxg(rows, h3);
                   RowMat dhg(n, h3);
                   RowMat dh(n, hid), dh_next = RowMat::Zero(n, hid);
                   RowMat gwh = RowMat::Zero(hid, h3);
                   Eigen::RowVectorXd gbh = Eigen::RowVectorXd::Zero(h3);
                   for (int l = len - 1; l >= 0; --l) {
                     for (int b = 0; b < n; ++b) {
                       dh.row(b) = Eigen::Map<const Eigen::RowVectorXd>(
                           self.grad.data() + (static_cast<std::size_t>(b) * len + l) * hid, hid);
                     }
                     dh += dh_next;
                     CMat r(tape->r.data() + step * l, n, hid);
                     CMat z(tape->z.data() + step * l, n, hid);
                     CMat c(tape->cand.data() + step * l, n, hid);
                     CMat hn(tape->hn.data() + step * l, n, hid);
                     CMat hprev(tape->h.data() + step * l, n, hid);
                     const Eigen::ArrayXXd dc = dh.array() * (1.0 - z.array());
                     const Eigen::ArrayXXd dz = dh.array() * (hprev.array() - c.array());
                     const Eigen::ArrayXXd dc_pre = dc * (1.0 - c.array().square());
                     const Eigen::ArrayXXd dr = dc_pre * hn.array();
                     const Eigen::ArrayXXd dz_pre = dz * z.array() * (1.0 - z.array());
                     const Eigen::ArrayXXd dr_pre = dr * r.array() * (1.0 - r.array());
                     dhg.leftCols(hid) = dr_pre.matrix();
                     dhg.middleCols(hid, hid) = dz_pre.matrix();
                     dhg.rightCols(hid) = (dc_pre * r.array()).matrix();
                     for (int b = 0; b < n; ++b) {
                       auto row = dxg.row(static_cast<Eigen::Index>(b) * len + l);
                       row.leftCols(hid) = dr_pre.row(b).matrix();
                       row.middleCols(hid, hid) = dz_pre.row(b).matrix();
                       row.rightCols(hid) = dc_pre.row(b).matrix();
                     }
                     gwh.noalias() += hprev.transpose() * dhg;
                     gbh += dhg.colwise().sum();
                     dh_next = (dh.array() * z.array()).matrix();
                     dh_next.noalias() += dhg * whm.transpose();
                   }
                   if (pwh.requires_grad) Mat(pwh.grad_buffer().data(), hid, h3) += gwh;
                   if (pbh.requires_grad) {
                     Eigen::Map<Eigen::RowVectorXd>(pbh.grad_buffer().data(), h3) += gbh;
                   }
                   if (pbx.requires_grad) {
                     Eigen::Map<Eigen::RowVectorXd>(pbx.grad_buffer().data(), h3) +=
                         dxg.colwise().sum();
                   }
                   if (pwx.requires_grad) {
                     Mat(pwx.grad_buffer().data(), in, h3).noalias() +=
                         CMat(px.value.data(), rows, in).transpose() * dxg;
                   }
                   if (px.requires_grad) {
                     Mat(px.grad_buffer().data(), rows, in).noalias() +=
                         dxg * CMat(pwx.value.data(), in, h3).transpose();
                   }
                 });
}

namespace {

void check_attention_inputs(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
  require_rank("attention", q, 3);
  require_same_shape("attention(k)", q, k);
  require_same_shape("attention(v)", q, v);
  if (heads < 1 || q.dim(2) % heads != 0) {
    throw ShapeError("attention: " + std::to_string(heads) + " heads do not divide width " +
                     std::to_string(q.dim(2)));
  }
}

// Head slice h of sequence b, transposed to [dh, L] so that every per-query
// operation below is a contiguous length-L vector op.
void gather_transposed(const double* src, int len, int d, int dh, std::size_t off, RowMat& dst) {
  dst.resize(dh, len);
  for (int j = 0; j < len; ++j) {
    const double* row = src + off + static_cast<std::size_t>(j) * d;
    for (int c = 0; c < dh; ++c) dst(c, j) = row[c];
  }
}

// Fills probs (L x L, row-major) with softmax(scale * Q K^T) and, when out is
// non-null, writes P V into the head slice of out.
void attention_head_forward(const double* q, const RowMat& kt, const RowMat& vt, int len, int d,
                            int dh, std::size_t off, double scale, double* probs, double* out) {
  for (int i = 0; i < len; ++i) {
    const double* qi = q + off + static_cast<std::size_t>(i) * d;
    Eigen::Map<Eigen::RowVectorXd> p(probs + static_cast<std::size_t>(i) * len, len);
    p = kt.row(0) * (qi[0] * scale);
    for (int c = 1; c < dh; ++c) p += kt.row(c) * (qi[c] * scale);
    const double m = p.maxCoeff();
    p = (p.array() - m).exp().matrix();
    p /= p.sum();
    if (out) {
      double* oi = out + off + static_cast<std::size_t>(i) * d;
      for (int c = 0; c < dh; ++c) oi[c] = p.dot(vt.row(c));
    }
  }
}

}  // namespace

std::vector<double> attention_weights(const Tensor& q, const Tensor& k, int heads) {
  check_attention_inputs(q, k, k, heads);
  const int n = q.dim(0), len = q.dim(1), d = q.dim(2), dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  Buffer out(static_cast<std::size_t>(n) * heads * len * len);
  RowMat kt, vt;
  for (int b = 0; b < n; ++b) {
    for (int h = 0; h < heads; ++h) {
      const std::size_t off = static_cast<std::size_t>(b) * len * d + h * dh;
      gather_transposed(k.node()->value.data(), len, d, dh, off, kt);
      attention_head_forward(q.node()->value.data(), kt, vt, len, d, dh, off, sc,
                             out.data() + (static_cast<std::size_t>(b) * heads + h) * len * len,
                             nullptr);
    }
  }
  return std::vector<double>(out.begin(), out.end());
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
  check_attention_inputs(q, k, v, heads);
  const int n = q.dim(0), len = q.dim(1), d = q.dim(2), dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::size_t plane = static_cast<std::size_t>(len) * len;
  // Probabilities are kept for the backward pass only when a graph is built.
  const bool keep = grad_enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
  // Left uninitialised: every entry is written by the forward sweep.
  constexpr std::align_val_t kAlign{64};
  std::shared_ptr<double[]> probs(
      static_cast<double*>(::operator new((keep ? plane * n * heads : plane) * sizeof(double), kAlign)),
      [kAlign](double* p) { ::operator delete(p, kAlign); });
  Buffer y(q.size());
  RowMat kt, vt;
  for (int b = 0; b < n; ++b) {
    for (int h = 0; h < heads; ++h) {
      const std::size_t off = static_cast<std::size_t>(b) * len * d + h * dh;
      gather_transposed(k.node()->value.data(), len, d, dh, off, kt);
      gather_transposed(v.node()->value.data(), len, d, dh, off, vt);
      double* p = probs.get() + (keep ? (static_cast<std::size_t>(b) * heads + h) * plane : 0);
      attention_head_forward(q.node()->value.data(), kt, vt, len, d, dh, off, sc, p, y.data());
    }
  }
  if (!keep) probs.reset();
  return make_op("attention", q.shape(), std::move(y), {q, k, v},
                 [n, len, d, dh, heads, sc, plane, probs](Node& self) {
                   Node& pq = *self.parents[0];
                   Node& pk = *self.parents[1];
                   Node& pv = *self.parents[2];
                   double* gq = pq.requires_grad ? pq.grad_buffer().data() : nullptr;
                   double* gk = pk.requires_grad ? pk.grad_buffer().data() : nullptr;
                   double* gv = pv.requires_grad ? pv.grad_buffer().data() : nullptr;
                   RowMat kt, vt, dkt(dh, len), dvt(dh, len);
                   Eigen::RowVectorXd dp(len);
                   for (int b = 0; b < n; ++b) {
                     for (int h = 0; h < heads; ++h) {
                       const std::size_t off = static_cast<std::size_t>(b) * len * d + h * dh;
                       gather_transposed(pk.value.data(), len, d, dh, off, kt);
                       gather_transposed(pv.value.data(), len, d, dh, off, vt);
                       dkt.setZero();
                       dvt.setZero();
                       const double* pbase = probs.get() + (static_cast<std::size_t>(b) * heads + h) * plane;
                       for (int i = 0; i < len; ++i) {
                         Eigen::Map<const Eigen::RowVectorXd> p(pbase + static_cast<std::size_t>(i) * len, len);
                         const std::size_t row = off + static_cast<std::size_t>(i) * d;
                         const double* go = self.grad.data() + row;
                         const double* qi = pq.value.data() + row;
                         dp = vt.row(0) * go[0];
                         for (int c = 1; c < dh; ++c) dp += vt.row(c) * go[c];
                         for (int c = 0; c < dh; ++c) dvt.row(c) += p * go[c];
                         const double rs = p.dot(dp);
                         dp = (p.array() * (dp.array() - rs)).matrix() * sc;
                         for (int c = 0; c < dh; ++c) {
                           if (gq) gq[row + c] += dp.dot(kt.row(c));
                           dkt.row(c) += dp * qi[c];
                         }
                       }
                       for (int j = 0; j < len; ++j) {
                         const std::size_t row = off + static_cast<std::size_t>(j) * d;
                         for (int c = 0; c < dh; ++c) {
                           if (gk) gk[row + c] += dkt(c, j);
                           if (gv) gv[row + c] += dvt(c, j);
                         }
                       }
                     }
                   }
                 });
}

Tensor complex_mul(const Tensor& a, const Tensor& b) {
  require_same_shape("complex_mul", a, b);
  if (last_dim(a) != 2) throw ShapeError("complex_mul: trailing axis must have size 2");
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  Buffer y(av.size());
  for (std::size_t i = 0; i < av.size(); i += 2) {
    y[i] = av[i] * bv[i] - av[i + 1] * bv[i + 1];
    y[i + 1] = av[i] * bv[i + 1] + av[i + 1] * bv[i];
  }
  return make_op("complex_mul", a.shape(), std::move(y), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); i += 2) {
        ga[i] += g[i] * pb.value[i] + g[i + 1] * pb.value[i + 1];
        ga[i + 1] += -g[i] * pb.value[i + 1] + g[i + 1] * pb.value[i];
      }
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); i += 2) {
        gb[i] += g[i] * pa.value[i] + g[i + 1] * pa.value[i + 1];
        gb[i + 1] += -g[i] * pa.value[i + 1] + g[i + 1] * pa.value[i];
      }
    }
  });
}

Tensor complex_power(const Tensor& a) {
  if (last_dim(a) != 2) throw ShapeError("complex_power: trailing axis must have size 2");
  const auto& av = a.node()->value;
  Buffer y(av.size() / 2);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = av[2 * i] * av[2 * i] + av[2 * i + 1] * av[2 * i + 1];
  }
  Shape shape(a.shape().begin(), a.shape().end() - 1);
  if (shape.empty()) shape = {1};
  return make_op("complex_power", std::move(shape), std::move(y), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      g[2 * i] += 2.0 * p.value[2 * i] * self.grad[i];
      g[2 * i + 1] += 2.0 * p.value[2 * i + 1] * self.grad[i];
    }
  });
}

}  // namespace hlab::nn
