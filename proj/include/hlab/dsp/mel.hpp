// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "hlab/dsp/stft.hpp"
#include "hlab/dsp/waveform.hpp"

namespace hlab::dsp {

inline constexpr double kLogMelEpsilon = 1e-10;

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// n_mels x n_bins triangular filterbank on the HTK mel scale spanning
/// [0, sample_rate / 2]. Every row has a positive sum.
Matrix mel_filterbank(int n_mels, int n_bins, int sample_rate);

/// T x n_mels matrix of log(power . filterbank^T + kLogMelEpsilon).
Matrix log_mel(const ComplexSpectrogram& spec, int n_mels);

}  // namespace hlab::dsp
