// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "hlab/dsp/waveform.hpp"

namespace hlab::dsp {

enum class WindowKind { kHann, kRectangular };

/// Framing parameters. Defaults are 32 ms / 16 ms at 16 kHz.
struct StftConfig {
  int window_length = 512;
  int hop = 256;
  WindowKind window = WindowKind::kHann;

  void validate() const;
  int num_bins() const { return window_length / 2 + 1; }
  /// 1 + floor((len - window_length) / hop); no padding.
  int num_frames(std::size_t signal_length) const;
  /// (frames - 1) * hop + window_length.
  std::size_t signal_length(int frames) const;

  bool operator==(const StftConfig&) const = default;
};

/// One-sided T x F spectrogram, real and imaginary planes stored row-major.
struct ComplexSpectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<double> real;
  std::vector<double> imag;
  StftConfig config;
  int sample_rate = kDefaultSampleRate;

  ComplexSpectrogram() = default;
  ComplexSpectrogram(int t, int f, const StftConfig& cfg, int sr);

  std::size_t index(int t, int f) const { return static_cast<std::size_t>(t) * bins + f; }
  double power(int t, int f) const {
    const auto i = index(t, f);
    return real[i] * real[i] + imag[i] * imag[i];
  }
  /// Throws if planes disagree with frames x bins or the config.
  void validate() const;
};

/// Periodic analysis window (COLA for hop = window_length / 2 with Hann).
std::vector<double> analysis_window(const StftConfig& cfg);

/// Overlap-add positions whose normalizer falls below this are zeroed.
inline constexpr double kSynthesisFloor = 1e-10;

/// Per-sample overlap-add normalizer sum_t w^2[n - t*hop] for `frames` frames,
/// raised to its minimum over the fully overlapped interior. Near the ends
/// a single tapered window covers each sample and the raw sum falls to ~1e-9,
/// which would amplify any non-identity mask at the edges by that factor.
/// The interior, where reconstruction is exact, is unchanged.
std::vector<double> synthesis_normalizer(const StftConfig& cfg, int frames);

ComplexSpectrogram stft(const Waveform& wave, const StftConfig& cfg = {});
Waveform istft(const ComplexSpectrogram& spec);

// Real FFT primitives backed by cached FFTW plans; safe to call concurrently.
namespace fft {
/// out[k] = sum_n in[n] e^{-2 pi i k n / N}, k = 0..N/2.
void forward(std::span<const double> in, std::span<std::complex<double>> out);
/// Unnormalized Hermitian inverse: out[n] = sum over the full Hermitian
/// extension of in. Imaginary parts of DC and Nyquist are ignored.
void inverse(std::span<const std::complex<double>> in, std::span<double> out);
}  // namespace fft

}  // namespace hlab::dsp
