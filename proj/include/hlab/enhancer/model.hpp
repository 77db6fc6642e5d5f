// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "hlab/dsp/stft.hpp"
#include "hlab/nn/checkpoint.hpp"
#include "hlab/nn/layers.hpp"

namespace hlab::enhancer {

enum class MaskMode { kComplex, kElementwise };

struct EnhancerConfig {
  int channels = 16;
  int blocks = 2;
  int heads = 2;
  int kernel = 3;  // frequency kernel of the dilated-dense layers
  // 2 halves the frequency axis between the encoder and decoder (strided
  // conv down, sub-pixel conv up); 1 keeps every bin.
  int freq_stride = 2;
  MaskMode mask = MaskMode::kComplex;
  dsp::StftConfig stft;

  static constexpr int kDenseLayers = 4;  // dilations 1, 2, 4, 8

  void validate() const;
};

void to_json(nlohmann::json& j, const EnhancerConfig& c);
void from_json(const nlohmann::json& j, EnhancerConfig& c);

/// T x F real/imaginary mask planes.
struct MaskPair {
  int frames = 0;
  int bins = 0;
  std::vector<double> real;
  std::vector<double> imag;
};

struct EnhanceResult {
  dsp::Waveform wave;
  dsp::ComplexSpectrogram spec;
  MaskPair masks;
};

/// Four dilated convolutions along frequency with dense (concatenated)
/// inputs, each followed by layer norm and PReLU.
struct DilatedDenseBlock {
  std::vector<nn::Conv1d> convs;
  std::vector<nn::LayerNorm> norms;
  std::vector<nn::PRelu> acts;

  DilatedDenseBlock() = default;
  DilatedDenseBlock(int channels, int kernel, Rng& rng);
  nn::Tensor operator()(const nn::Tensor& x) const;
  void collect(const std::string& prefix, nn::NamedParams& out) const;
};

/// Intra-frequency then inter-time transformer over a [T, F, C] map.
struct DualPathBlock {
  nn::TransformerLayer intra;
  nn::TransformerLayer inter;

  DualPathBlock() = default;
  DualPathBlock(int channels, int heads, Rng& rng);
  nn::Tensor operator()(const nn::Tensor& x) const;
  void collect(const std::string& prefix, nn::NamedParams& out) const;
};

class EnhancerModel {
 public:
  EnhancerModel(const EnhancerConfig& cfg, std::uint64_t seed);

  struct Output {
    nn::Tensor masks;     // [T, F, 2]
    nn::Tensor spec;      // enhanced [T, F, 2]
    nn::Tensor wave;      // enhanced [L']
  };

  /// Differentiable stft -> masks -> masking -> istft on a [L] signal.
  Output forward(const nn::Tensor& noisy) const;
  /// [T, F, 2] noisy spectrum -> [T, F, 2] masks.
  nn::Tensor masks(const nn::Tensor& noisy_spec) const;
  nn::Tensor apply_mask(const nn::Tensor& noisy_spec, const nn::Tensor& masks) const;

  /// Inference without graph recording.
  EnhanceResult enhance(const dsp::Waveform& noisy) const;

  const EnhancerConfig& config() const { return cfg_; }
  nn::NamedParams parameters() const;

  nn::Checkpoint to_checkpoint() const;
  static EnhancerModel from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  EnhancerConfig cfg_;
  nn::Conv1d enc_in_;
  nn::LayerNorm enc_norm_;
  nn::PRelu enc_act_;
  DilatedDenseBlock enc_dense_;
  nn::Conv1d enc_down_;
  nn::LayerNorm enc_down_norm_;
  nn::PRelu enc_down_act_;
  std::vector<DualPathBlock> blocks_;
  DilatedDenseBlock dec_dense_;
  nn::Conv1d dec_up_;
  nn::LayerNorm dec_up_norm_;
  nn::PRelu dec_up_act_;
  nn::Conv1d dec_out_;
};

}  // namespace hlab::enhancer
