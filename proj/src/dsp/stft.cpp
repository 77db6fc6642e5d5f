// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/dsp/stft.hpp"

#include <algorithm>

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

#include "hlab/common/error.hpp"

namespace hlab::dsp {

void Waveform::validate() const {
  if (sample_rate <= 0) throw DataError("waveform: sample_rate must be positive");
  for (double s : samples) {
    if (!std::isfinite(s)) throw DataError("waveform: non-finite sample");
  }
}

double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

void StftConfig::validate() const {
  if (window_length <= 0 || hop <= 0 || hop > window_length) {
    throw UsageError("stft config: require 0 < hop <= window_length");
  }
  if (window_length % hop != 0) {
    throw UsageError("stft config: hop must divide window_length");
  }
}

int StftConfig::num_frames(std::size_t signal_length) const {
  if (signal_length < static_cast<std::size_t>(window_length)) return 0;
  return 1 + static_cast<int>((signal_length - window_length) / hop);
}

std::size_t StftConfig::signal_length(int frames) const {
  if (frames <= 0) return 0;
  return static_cast<std::size_t>(frames - 1) * hop + window_length;
}

ComplexSpectrogram::ComplexSpectrogram(int t, int f, const StftConfig& cfg, int sr)
    : frames(t),
      bins(f),
      real(static_cast<std::size_t>(t) * f, 0.0),
      imag(static_cast<std::size_t>(t) * f, 0.0),
      config(cfg),
      sample_rate(sr) {}

void ComplexSpectrogram::validate() const {
  config.validate();
  const auto n = static_cast<std::size_t>(frames) * bins;
  if (frames <= 0 || bins != config.num_bins() || real.size() != n || imag.size() != n) {
    throw ShapeError("spectrogram: planes inconsistent with " + std::to_string(frames) + "x" +
                     std::to_string(bins) + " and window " +
                     std::to_string(config.window_length));
  }
}

std::vector<double> analysis_window(const StftConfig& cfg) {
  std::vector<double> w(cfg.window_length, 1.0);
  if (cfg.window == WindowKind::kHann) {
    for (int n = 0; n < cfg.window_length; ++n) {
      w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / cfg.window_length);
    }
  }
  return w;
}

std::vector<double> synthesis_normalizer(const StftConfig& cfg, int frames) {
  const auto w = analysis_window(cfg);
  std::vector<double> den(cfg.signal_length(frames), 0.0);
  for (int t = 0; t < frames; ++t) {
    const std::size_t off = static_cast<std::size_t>(t) * cfg.hop;
    for (int n = 0; n < cfg.window_length; ++n) den[off + n] += w[n] * w[n];
  }
  // Interior: samples covered by window_length / hop frames.
  const std::size_t lo = static_cast<std::size_t>(cfg.window_length - cfg.hop);
  const std::size_t hi = den.size() - lo;
  double floor = 0.0;
  if (hi > lo) {
    floor = *std::min_element(den.begin() + static_cast<std::ptrdiff_t>(lo),
                              den.begin() + static_cast<std::ptrdiff_t>(hi));
  } else {
    floor = 0.5 * *std::max_element(den.begin(), den.end());
  }
  for (double& d : den) d = std::max(d, floor);
  return den;
}

namespace fft {
namespace {

struct PlanPair {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
};

// FFTW planning is not thread-safe; execution with the new-array API is.
const PlanPair& plans_for(int n) {
  static std::mutex mu;
  static std::map<int, PlanPair> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> r(n);
  std::vector<fftw_complex> c(n / 2 + 1);
  PlanPair p;
  p.r2c = fftw_plan_dft_r2c_1d(n, r.data(), c.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  p.c2r = fftw_plan_dft_c2r_1d(n, c.data(), r.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  return cache.emplace(n, p).first->second;
}

}  // namespace

void forward(std::span<const double> in, std::span<std::complex<double>> out) {
  const int n = static_cast<int>(in.size());
  if (out.size() != static_cast<std::size_t>(n / 2 + 1)) throw ShapeError("fft: output size");
  const auto& p = plans_for(n);
  // r2c does not modify its input, but the API is not const-qualified.
  fftw_execute_dft_r2c(p.r2c, const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  const int n = static_cast<int>(out.size());
  if (in.size() != static_cast<std::size_t>(n / 2 + 1)) throw ShapeError("ifft: input size");
  const auto& p = plans_for(n);
  // c2r destroys its input.
  std::vector<std::complex<double>> scratch(in.begin(), in.end());
  fftw_execute_dft_c2r(p.c2r, reinterpret_cast<fftw_complex*>(scratch.data()), out.data());
}

}  // namespace fft

ComplexSpectrogram stft(const Waveform& wave, const StftConfig& cfg) {
  cfg.validate();
  if (wave.size() < static_cast<std::size_t>(cfg.window_length)) {
    throw DataError("stft: input too short (" + std::to_string(wave.size()) +
                    " samples, need " + std::to_string(cfg.window_length) + ")");
  }
  const int frames = cfg.num_frames(wave.size());
  const int bins = cfg.num_bins();
  ComplexSpectrogram spec(frames, bins, cfg, wave.sample_rate);
  const auto w = analysis_window(cfg);
  std::vector<double> frame(cfg.window_length);
  std::vector<std::complex<double>> out(bins);
  for (int t = 0; t < frames; ++t) {
    const std::size_t off = static_cast<std::size_t>(t) * cfg.hop;
    for (int n = 0; n < cfg.window_length; ++n) frame[n] = wave.samples[off + n] * w[n];
    fft::forward(frame, out);
    for (int f = 0; f < bins; ++f) {
      spec.real[spec.index(t, f)] = out[f].real();
      spec.imag[spec.index(t, f)] = out[f].imag();
    }
  }
  return spec;
}

Waveform istft(const ComplexSpectrogram& spec) {
  spec.validate();
  const auto& cfg = spec.config;
  const int n_win = cfg.window_length;
  const auto w = analysis_window(cfg);
  const auto den = synthesis_normalizer(cfg, spec.frames);
  std::vector<double> out(den.size(), 0.0);
  std::vector<std::complex<double>> bins(spec.bins);
  std::vector<double> frame(n_win);
  for (int t = 0; t < spec.frames; ++t) {
    for (int f = 0; f < spec.bins; ++f) {
      bins[f] = {spec.real[spec.index(t, f)], spec.imag[spec.index(t, f)]};
    }
    fft::inverse(bins, frame);
    const std::size_t off = static_cast<std::size_t>(t) * cfg.hop;
    for (int n = 0; n < n_win; ++n) out[off + n] += w[n] * frame[n] / n_win;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = den[i] > kSynthesisFloor ? out[i] / den[i] : 0.0;
  }
  return Waveform(std::move(out), spec.sample_rate);
}

}  // namespace hlab::dsp
