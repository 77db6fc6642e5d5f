// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <vector>

#include "hlab/nn/tensor.hpp"

// Differentiable tensor operations. Layouts are channels-last; "rows" means
// every leading index flattened together.
namespace hlab::nn {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
/// Natural log; inputs must be strictly positive.
Tensor log(const Tensor& a);
/// 0.5 * (1 + tanh(x / 2)); saturates without overflow.
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
/// Per-channel PReLU over the last axis.
Tensor prelu(const Tensor& x, const Tensor& alpha);

/// x + b with b broadcast along the last axis.
Tensor add_bias(const Tensor& x, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& perm);
Tensor concat_last(const std::vector<Tensor>& parts);
Tensor slice_last(const Tensor& a, int begin, int count);
/// Rows begin, begin + step, ... (count of them) along axis 1 of x[N, L, C].
Tensor select_rows(const Tensor& x, int begin, int step, int count);

/// [M,K] x [K,N].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[..., in] . w[in, out] (+ b[out] when defined).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {});

/// Max-shifted softmax over the last axis.
Tensor softmax_last(const Tensor& x);
/// Normalises the last axis; constant rows map to beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Same-padded dilated convolution along axis 1 of x[N, L, Cin].
/// w is [kernel * Cin, Cout] with row index k * Cin + ci; b is [Cout].
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int kernel, int dilation);

/// GRU over axis 1 of x[N, L, In], zero initial state, gate order (r, z, n):
///   r = s(x Wr + bxr + h Ur + bhr), z = s(x Wz + bxz + h Uz + bhz)
///   n = tanh(x Wn + bxn + r * (h Un + bhn)), h' = (1 - z) n + z h.
/// wx [In, 3H], wh [H, 3H], bx [3H], bh [3H]; returns [N, L, H].
Tensor gru(const Tensor& x, const Tensor& wx, const Tensor& wh, const Tensor& bx,
           const Tensor& bh);

/// Scaled dot-product attention per head over axis 1 of [N, L, D] inputs.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads);
/// Softmax weights [N, heads, L, L] of `attention`, for inspection.
std::vector<double> attention_weights(const Tensor& q, const Tensor& k, int heads);

/// (a_r + i a_i)(b_r + i b_i) over a trailing axis of size 2.
Tensor complex_mul(const Tensor& a, const Tensor& b);
/// re^2 + im^2 over a trailing axis of size 2; drops that axis.
Tensor complex_power(const Tensor& a);

}  // namespace hlab::nn
