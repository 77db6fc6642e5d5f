// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "hlab/dsp/stft.hpp"
#include "hlab/nn/tensor.hpp"

namespace hlab::nn {

/// Differentiable STFT of a 1-D signal [L]; returns [T, F, 2] (real, imag).
Tensor stft(const Tensor& wave, const dsp::StftConfig& cfg);

/// Inverse of `stft` for [T, F, 2]; returns [(T - 1) * hop + window_length].
/// Imaginary parts of the DC and Nyquist bins do not contribute.
Tensor istft(const Tensor& spec, const dsp::StftConfig& cfg);

/// log(|spec|^2 . fb^T + eps) for spec [T, F, 2] and a constant [M, F]
/// filterbank; returns [T, M].
Tensor log_mel(const Tensor& spec, const Tensor& filterbank_t, double eps);

Tensor from_spectrogram(const dsp::ComplexSpectrogram& spec);
dsp::ComplexSpectrogram to_spectrogram(const Tensor& t, const dsp::StftConfig& cfg,
                                       int sample_rate);

}  // namespace hlab::nn
