// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <vector>

#include "hlab/dsp/stft.hpp"
#include "hlab/dsp/waveform.hpp"

namespace hlab::metrics {

inline constexpr double kSiSdrCapDb = 100.0;

/// Scale-invariant SDR in dB, clamped to [-100, 100].
double si_sdr(const dsp::Waveform& est, const dsp::Waveform& ref);

/// Polyphase rational resampler (Kaiser-windowed sinc, 10 zero crossings
/// per side at the lower of the two rates). Output length ceil(n * up / down).
std::vector<double> resample_poly(const std::vector<double>& x, int up, int down);

/// Short-time objective intelligibility at 10 kHz. Returns the raw mean
/// correlation; callers clip to [0, 1] for reporting.
double stoi(const dsp::Waveform& est, const dsp::Waveform& ref);

inline constexpr double kLsdFloorDb = -80.0;

/// Log-spectral distance in dB between equal-length signals. Each signal's
/// log power is floored 80 dB below its own maximum bin.
double log_spectral_distance(const dsp::Waveform& est, const dsp::Waveform& ref,
                             const dsp::StftConfig& cfg = {});
/// Same, on precomputed spectrograms.
double log_spectral_distance(const dsp::ComplexSpectrogram& est, const dsp::ComplexSpectrogram& ref);

struct HallucinationOptions {
  double margin_db = 6.0;
  double floor_db = -60.0;  // relative to the loudest enhanced bin
};

struct HallucinationMap {
  int frames = 0;
  int bins = 0;
  std::vector<char> flagged;  // frames x bins, row-major
  double energy_ratio = 0.0;

  bool at(int t, int f) const { return flagged[static_cast<std::size_t>(t) * bins + f] != 0; }
  std::size_t count() const;
  /// Flagged fraction of the bins in frames [t0, t1).
  double density(int t0, int t1) const;
};

/// Flags bins where the enhanced power exceeds both the noisy and the clean
/// power by more than the margin and sits above the floor.
HallucinationMap hallucination_map(const dsp::ComplexSpectrogram& noisy,
                                   const dsp::ComplexSpectrogram& clean,
                                   const dsp::ComplexSpectrogram& enhanced,
                                   const HallucinationOptions& opts = {});

/// Frames lying entirely inside the first `seconds` of the signal.
int frames_within(const dsp::StftConfig& cfg, int sample_rate, double seconds);

}  // namespace hlab::metrics
