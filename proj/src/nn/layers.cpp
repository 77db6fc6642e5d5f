// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/nn/layers.hpp"

#include <cmath>

#include "hlab/common/error.hpp"
#include "hlab/nn/ops.hpp"

namespace hlab::nn {

std::vector<Tensor> tensors_of(const NamedParams& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

Tensor uniform_parameter(Shape shape, double limit, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(-limit, limit);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor xavier_parameter(int fan_in, int fan_out, Rng& rng) {
  return uniform_parameter({fan_in, fan_out}, std::sqrt(6.0 / (fan_in + fan_out)), rng);
}

Linear::Linear(int in, int out, Rng& rng, bool bias) : w(xavier_parameter(in, out, rng)) {
  if (bias) b = Tensor::parameter({out}, std::vector<double>(out, 0.0));
}

Tensor Linear::operator()(const Tensor& x) const { return linear(x, w, b); }

void Linear::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".w", w);
  if (b.defined()) out.emplace_back(prefix + ".b", b);
}

Conv1d::Conv1d(int in, int out, int kernel_, int dilation_, Rng& rng)
    : w(uniform_parameter({kernel_ * in, out}, std::sqrt(6.0 / (kernel_ * in + kernel_ * out)),
                          rng)),
      b(Tensor::parameter({out}, std::vector<double>(out, 0.0))),
      kernel(kernel_),
      dilation(dilation_) {}

Tensor Conv1d::operator()(const Tensor& x) const { return conv1d(x, w, b, kernel, dilation); }

void Conv1d::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

LayerNorm::LayerNorm(int width)
    : gamma(Tensor::parameter({width}, std::vector<double>(width, 1.0))),
      beta(Tensor::parameter({width}, std::vector<double>(width, 0.0))) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }

void LayerNorm::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

PRelu::PRelu(int channels, double init)
    : alpha(Tensor::parameter({channels}, std::vector<double>(channels, init))) {}

Tensor PRelu::operator()(const Tensor& x) const { return prelu(x, alpha); }

void PRelu::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".alpha", alpha);
}

Gru::Gru(int in, int hidden, Rng& rng) {
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
  wx = uniform_parameter({in, 3 * hidden}, k, rng);
  wh = uniform_parameter({hidden, 3 * hidden}, k, rng);
  bx = uniform_parameter({3 * hidden}, k, rng);
  bh = uniform_parameter({3 * hidden}, k, rng);
}

Tensor Gru::operator()(const Tensor& x) const { return gru(x, wx, wh, bx, bh); }

void Gru::collect(const std::string& prefix, NamedParams& out) const {
  out.emplace_back(prefix + ".wx", wx);
  out.emplace_back(prefix + ".wh", wh);
  out.emplace_back(prefix + ".bx", bx);
  out.emplace_back(prefix + ".bh", bh);
}

MultiHeadAttention::MultiHeadAttention(int width, int heads_, Rng& rng)
    : q(width, width, rng), k(width, width, rng), v(width, width, rng), o(width, width, rng),
      heads(heads_) {
  if (heads < 1 || width % heads != 0) {
    throw ShapeError("attention: heads must divide width " + std::to_string(width));
  }
}

Tensor MultiHeadAttention::operator()(const Tensor& x) const {
  return o(attention(q(x), k(x), v(x), heads));
}

void MultiHeadAttention::collect(const std::string& prefix, NamedParams& out) const {
  q.collect(prefix + ".q", out);
  k.collect(prefix + ".k", out);
  v.collect(prefix + ".v", out);
  o.collect(prefix + ".o", out);
}

TransformerLayer::TransformerLayer(int width, int heads, int ffn_width, bool recurrent_, Rng& rng)
    : mha(width, heads, rng), norm1(width), norm2(width), recurrent(recurrent_) {
  if (recurrent) {
    ffn_gru = Gru(width, ffn_width, rng);
  } else {
    ffn_in = Linear(width, ffn_width, rng);
  }
  ffn_out = Linear(ffn_width, width, rng);
}

Tensor TransformerLayer::operator()(const Tensor& x) const {
  Tensor h = norm1(add(x, mha(x)));
  Tensor f = recurrent ? ffn_gru(h) : ffn_in(h);
  return norm2(add(h, ffn_out(relu(f))));
}

void TransformerLayer::collect(const std::string& prefix, NamedParams& out) const {
  mha.collect(prefix + ".mha", out);
  norm1.collect(prefix + ".norm1", out);
  if (recurrent) {
    ffn_gru.collect(prefix + ".ffn_gru", out);
  } else {
    ffn_in.collect(prefix + ".ffn_in", out);
  }
  ffn_out.collect(prefix + ".ffn_out", out);
  norm2.collect(prefix + ".norm2", out);
}

Tensor positional_encoding(int len, int width) {
  std::vector<double> pe(static_cast<std::size_t>(len) * width);
  for (int t = 0; t < len; ++t) {
    for (int i = 0; i < width; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / width);
      pe[static_cast<std::size_t>(t) * width + i] =
          i % 2 == 0 ? std::sin(t * freq) : std::cos(t * freq);
    }
  }
  return Tensor::constant({len, width}, std::move(pe));
}

void LayerSpec::validate(int input_width) const {
  const std::string label = name.empty() ? "layer" : name;
  switch (kind) {
    case LayerKind::kDense:
    case LayerKind::kGru:
      if (units < 1) throw UsageError(label + ": units must be positive");
      break;
    case LayerKind::kConv1d:
      if (units < 1 || kernel < 1 || kernel % 2 == 0 || dilation < 1) {
        throw UsageError(label + ": conv1d needs positive units, odd kernel, dilation >= 1");
      }
      break;
    case LayerKind::kAttention:
      if (heads < 1 || input_width % heads != 0) {
        throw UsageError(label + ": heads must divide width " + std::to_string(input_width));
      }
      break;
    default:
      break;
  }
}

Sequential::Sequential(int input_width, std::vector<LayerSpec> specs, Rng& rng)
    : specs_(std::move(specs)), width_(input_width) {
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    auto& s = specs_[i];
    if (s.name.empty()) s.name = "layer" + std::to_string(i);
    s.validate(width_);
    switch (s.kind) {
      case LayerKind::kDense:
        layers_.emplace_back(Linear(width_, s.units, rng));
        width_ = s.units;
        break;
      case LayerKind::kConv1d:
        layers_.emplace_back(Conv1d(width_, s.units, s.kernel, s.dilation, rng));
        width_ = s.units;
        break;
      case LayerKind::kGru:
        layers_.emplace_back(Gru(width_, s.units, rng));
        width_ = s.units;
        break;
      case LayerKind::kAttention:
        layers_.emplace_back(MultiHeadAttention(width_, s.heads, rng));
        break;
      case LayerKind::kLayerNorm:
        layers_.emplace_back(LayerNorm(width_));
        break;
      case LayerKind::kPrelu:
        layers_.emplace_back(PRelu(width_));
        break;
      case LayerKind::kSigmoid:
      case LayerKind::kPositional:
        layers_.emplace_back(std::monostate{});
        break;
    }
  }
}

Tensor Sequential::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& spec = specs_[i];
    try {
      if (spec.kind == LayerKind::kSigmoid) {
        h = sigmoid(h);
      } else if (spec.kind == LayerKind::kPositional) {
        if (h.rank() != 3) throw ShapeError("expected [N, L, C], got " + shape_str(h.shape()));
        const int n = h.dim(0), len = h.dim(1), c = h.dim(2);
        const Tensor pos = positional_encoding(len, c);
        const auto pe = pos.values();
        std::vector<double> tiled(h.size());
        for (std::size_t j = 0; j < tiled.size(); ++j) tiled[j] = pe[j % pe.size()];
        h = add(h, Tensor::constant({n, len, c}, std::move(tiled)));
      } else {
        h = std::visit(
            [&h](const auto& layer) -> Tensor {
              if constexpr (std::is_same_v<std::decay_t<decltype(layer)>, std::monostate>) {
                return h;
              } else {
                return layer(h);
              }
            },
            layers_[i]);
      }
    } catch (const ShapeError& e) {
      throw ShapeError(spec.name + ": " + e.what());
    }
  }
  return h;
}

NamedParams Sequential::parameters() const {
  NamedParams out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::visit(
        [&](const auto& layer) {
          if constexpr (!std::is_same_v<std::decay_t<decltype(layer)>, std::monostate>) {
            layer.collect(specs_[i].name, out);
          }
        },
        layers_[i]);
  }
  return out;
}

}  // namespace hlab::nn
