// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/enhancer/model.hpp"

#include <algorithm>

#include "hlab/common/error.hpp"
#include "hlab/nn/ops.hpp"
#include "hlab/nn/signal.hpp"

namespace hlab::enhancer {

using nn::Tensor;

void EnhancerConfig::validate() const {
  if (channels < 2 || channels % 2 != 0) throw UsageError("enhancer: channels must be even and >= 2");
  if (blocks < 1) throw UsageError("enhancer: blocks must be >= 1");
  if (heads < 1 || channels % heads != 0) throw UsageError("enhancer: heads must divide channels");
  if (kernel < 1 || kernel % 2 == 0) throw UsageError("enhancer: kernel must be odd");
  if (freq_stride != 1 && freq_stride != 2) throw UsageError("enhancer: freq_stride must be 1 or 2");
  stft.validate();
}

void to_json(nlohmann::json& j, const EnhancerConfig& c) {
  j = {{"channels", c.channels},
       {"blocks", c.blocks},
       {"heads", c.heads},
       {"kernel", c.kernel},
       {"freq_stride", c.freq_stride},
       {"mask", c.mask == MaskMode::kComplex ? "complex" : "elementwise"},
       {"window_length", c.stft.window_length},
       {"hop", c.stft.hop}};
}

void from_json(const nlohmann::json& j, EnhancerConfig& c) {
  c.channels = j.value("channels", c.channels);
  c.blocks = j.value("blocks", c.blocks);
  c.heads = j.value("heads", c.heads);
  c.kernel = j.value("kernel", c.kernel);
  c.freq_stride = j.value("freq_stride", c.freq_stride);
  const auto mask = j.value("mask", std::string("complex"));
  if (mask == "complex") {
    c.mask = MaskMode::kComplex;
  } else if (mask == "elementwise") {
    c.mask = MaskMode::kElementwise;
  } else {
    throw UsageError("enhancer: unknown mask mode '" + mask + "'");
  }
  c.stft.window_length = j.value("window_length", c.stft.window_length);
  c.stft.hop = j.value("hop", c.stft.hop);
}

DilatedDenseBlock::DilatedDenseBlock(int channels, int kernel, Rng& rng) {
  for (int i = 0; i < EnhancerConfig::kDenseLayers; ++i) {
    convs.emplace_back(channels * (i + 1), channels, kernel, 1 << i, rng);
    norms.emplace_back(channels);
    acts.emplace_back(channels);
  }
}

Tensor DilatedDenseBlock::operator()(const Tensor& x) const {
  std::vector<Tensor> feats{x};
  Tensor h = x;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    Tensor in = feats.size() == 1 ? feats[0] : nn::concat_last(feats);
    h = acts[i](norms[i](convs[i](in)));
    feats.push_back(h);
  }
  return h;
}

void DilatedDenseBlock::collect(const std::string& prefix, nn::NamedParams& out) const {
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const auto p = prefix + "." + std::to_string(i);
    convs[i].collect(p + ".conv", out);
    norms[i].collect(p + ".norm", out);
    acts[i].collect(p + ".act", out);
  }
}

DualPathBlock::DualPathBlock(int channels, int heads, Rng& rng)
    : intra(channels, heads, channels, true, rng), inter(channels, heads, channels, true, rng) {}

Tensor DualPathBlock::operator()(const Tensor& x) const {
  // x is [T, F, C]: sequences over F for every frame, then over T per bin.
  Tensor h = intra(x);
  h = nn::permute(h, {1, 0, 2});
  h = inter(h);
  return nn::permute(h, {1, 0, 2});
}

void DualPathBlock::collect(const std::string& prefix, nn::NamedParams& out) const {
  intra.collect(prefix + ".intra", out);
  inter.collect(prefix + ".inter", out);
}

EnhancerModel::EnhancerModel(const EnhancerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int c = cfg_.channels;
  enc_in_ = nn::Conv1d(2, c, 1, 1, rng);
  enc_norm_ = nn::LayerNorm(c);
  enc_act_ = nn::PRelu(c);
  enc_dense_ = DilatedDenseBlock(c, cfg_.kernel, rng);
  if (cfg_.freq_stride == 2) {
    enc_down_ = nn::Conv1d(c, c, 3, 1, rng);
    enc_down_norm_ = nn::LayerNorm(c);
    enc_down_act_ = nn::PRelu(c);
  }
  for (int b = 0; b < cfg_.blocks; ++b) blocks_.emplace_back(c, cfg_.heads, rng);
  dec_dense_ = DilatedDenseBlock(c, cfg_.kernel, rng);
  if (cfg_.freq_stride == 2) {
    dec_up_ = nn::Conv1d(c, 2 * c, 3, 1, rng);
    dec_up_norm_ = nn::LayerNorm(c);
    dec_up_act_ = nn::PRelu(c);
  }
  dec_out_ = nn::Conv1d(c, 2, 1, 1, rng);
  // Start from exactly the identity mask (M_r = 1, M_i = 0): zero weights,
  // unit real bias. A random head puts the initial masks far from 1.
  auto w = dec_out_.w.mutable_values();
  std::fill(w.begin(), w.end(), 0.0);
  dec_out_.b.mutable_values()[0] = 1.0;
}

Tensor EnhancerModel::masks(const Tensor& noisy_spec) const {
  const int bins = cfg_.stft.num_bins();
  if (noisy_spec.rank() != 3 || noisy_spec.dim(1) != bins || noisy_spec.dim(2) != 2) {
    throw ShapeError("enhancer.encoder: expected [T, " + std::to_string(bins) + ", 2], got " +
                     nn::shape_str(noisy_spec.shape()));
  }
  Tensor h = enc_act_(enc_norm_(enc_in_(noisy_spec)));
  h = enc_dense_(h);
  const int frames = noisy_spec.dim(0);
  const int half = (bins + 1) / 2;
  if (cfg_.freq_stride == 2) {
    h = enc_down_act_(enc_down_norm_(nn::select_rows(enc_down_(h), 0, 2, half)));
  }
  for (const auto& b : blocks_) h = b(h);
  h = dec_dense_(h);
  if (cfg_.freq_stride == 2) {
    // Sub-pixel upsampling: each coarse bin emits two fine bins of C channels.
    h = nn::reshape(dec_up_(h), {frames, 2 * half, cfg_.channels});
    h = dec_up_act_(dec_up_norm_(nn::select_rows(h, 0, 1, bins)));
  }
  return dec_out_(h);
}

Tensor EnhancerModel::apply_mask(const Tensor& noisy_spec, const Tensor& m) const {
  if (noisy_spec.shape() != m.shape()) {
    throw ShapeError("enhancer.mask: mask " + nn::shape_str(m.shape()) + " vs spectrum " +
                     nn::shape_str(noisy_spec.shape()));
  }
  return cfg_.mask == MaskMode::kComplex ? nn::complex_mul(noisy_spec, m) : nn::mul(noisy_spec, m);
}

EnhancerModel::Output EnhancerModel::forward(const Tensor& noisy) const {
  Tensor x = nn::stft(noisy, cfg_.stft);
  Output out;
  out.masks = masks(x);
  out.spec = apply_mask(x, out.masks);
  out.wave = nn::istft(out.spec, cfg_.stft);
  return out;
}

EnhanceResult EnhancerModel::enhance(const dsp::Waveform& noisy) const {
  noisy.validate();
  nn::NoGradGuard guard;
  auto out = forward(Tensor::constant({static_cast<int>(noisy.size())}, noisy.samples));
  EnhanceResult r;
  r.wave = dsp::Waveform(std::vector<double>(out.wave.values().begin(), out.wave.values().end()),
                         noisy.sample_rate);
  r.spec = nn::to_spectrogram(out.spec, cfg_.stft, noisy.sample_rate);
  r.masks.frames = out.masks.dim(0);
  r.masks.bins = out.masks.dim(1);
  const auto m = out.masks.values();
  r.masks.real.resize(m.size() / 2);
  r.masks.imag.resize(m.size() / 2);
  for (std::size_t i = 0; i < r.masks.real.size(); ++i) {
    r.masks.real[i] = m[2 * i];
    r.masks.imag[i] = m[2 * i + 1];
  }
  return r;
}

nn::NamedParams EnhancerModel::parameters() const {
  nn::NamedParams out;
  enc_in_.collect("encoder.in", out);
  enc_norm_.collect("encoder.norm", out);
  enc_act_.collect("encoder.act", out);
  enc_dense_.collect("encoder.dense", out);
  if (cfg_.freq_stride == 2) {
    enc_down_.collect("encoder.down", out);
    enc_down_norm_.collect("encoder.down_norm", out);
    enc_down_act_.collect("encoder.down_act", out);
  }
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    blocks_[b].collect("dualpath." + std::to_string(b), out);
  }
  dec_dense_.collect("decoder.dense", out);
  if (cfg_.freq_stride == 2) {
    dec_up_.collect("decoder.up", out);
    dec_up_norm_.collect("decoder.up_norm", out);
    dec_up_act_.collect("decoder.up_act", out);
  }
  dec_out_.collect("decoder.out", out);
  return out;
}

nn::Checkpoint EnhancerModel::to_checkpoint() const {
  nn::Checkpoint ck;
  ck.kind = "enhancer";
  ck.config = cfg_;
  ck.add_params(parameters());
  return ck;
}

EnhancerModel EnhancerModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.kind != "enhancer") throw DataError("checkpoint holds a '" + ckpt.kind + "', not an enhancer");
  EnhancerModel m(ckpt.config.get<EnhancerConfig>(), 0);
  ckpt.restore(m.parameters());
  return m;
}

}  // namespace hlab::enhancer
