// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "hlab/common/random.hpp"
#include "hlab/nn/tensor.hpp"

namespace hlab::nn {

/// Ordered (name, parameter) pairs; names are unique within a model.
using NamedParams = std::vector<std::pair<std::string, Tensor>>;

std::vector<Tensor> tensors_of(const NamedParams& params);

/// Uniform(-limit, limit) parameter.
Tensor uniform_parameter(Shape shape, double limit, Rng& rng);
/// Xavier-uniform [fan_in, fan_out] weight.
Tensor xavier_parameter(int fan_in, int fan_out, Rng& rng);

struct Linear {
  Tensor w, b;

  Linear() = default;
  Linear(int in, int out, Rng& rng, bool bias = true);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// Same-padded conv along axis 1 of [N, L, Cin].
struct Conv1d {
  Tensor w, b;
  int kernel = 1;
  int dilation = 1;

  Conv1d() = default;
  Conv1d(int in, int out, int kernel, int dilation, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, NamedParams& out) const;
};

struct LayerNorm {
  Tensor gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(int width);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, NamedParams& out) const;
};

struct PRelu {
  Tensor alpha;

  PRelu() = default;
  explicit PRelu(int channels, double init = 0.25);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// Single-layer GRU over axis 1 of [N, L, In].
struct Gru {
  Tensor wx, wh, bx, bh;

  Gru() = default;
  Gru(int in, int hidden, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// Self-attention over axis 1 of [N, L, D] with output projection.
struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(int width, int heads, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// Post-norm transformer layer over axis 1 of [N, L, D]:
///   h = LN(x + MHA(x)); y = LN(h + FFN(h)),
/// where FFN is Linear(ReLU(Linear)) or, with a recurrent FFN,
/// Linear(ReLU(GRU)).
struct TransformerLayer {
  MultiHeadAttention mha;
  LayerNorm norm1, norm2;
  Linear ffn_in;
  Gru ffn_gru;
  Linear ffn_out;
  bool recurrent = false;

  TransformerLayer() = default;
  TransformerLayer(int width, int heads, int ffn_width, bool recurrent, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, NamedParams& out) const;
};

/// Sinusoidal table [len, width] (sin on even, cos on odd columns).
Tensor positional_encoding(int len, int width);

enum class LayerKind { kDense, kConv1d, kGru, kAttention, kLayerNorm, kPrelu, kSigmoid, kPositional };

struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  int units = 0;  // output width for dense / conv1d / gru
  int heads = 1;
  int kernel = 1;
  int dilation = 1;
  std::string name;

  void validate(int input_width) const;
};

/// Stack of layers over [N, L, C] tensors built from specs.
class Sequential {
 public:
  Sequential(int input_width, std::vector<LayerSpec> specs, Rng& rng);

  /// Errors raised inside a layer are rethrown prefixed with its name.
  Tensor forward(const Tensor& x) const;
  NamedParams parameters() const;
  int output_width() const { return width_; }

 private:
  using Layer = std::variant<Linear, Conv1d, Gru, MultiHeadAttention, LayerNorm, PRelu,
                             std::monostate>;
  std::vector<LayerSpec> specs_;
  std::vector<Layer> layers_;
  int width_;
};

}  // namespace hlab::nn
