// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>

#include "hlab/common/error.hpp"

namespace hlab::metrics {
namespace {

void require_same_length(const char* op, const dsp::Waveform& a, const dsp::Waveform& b) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

double si_sdr(const dsp::Waveform& est, const dsp::Waveform& ref) {
  require_same_length("si_sdr", est, ref);
  const double rr = dot(ref.samples, ref.samples);
  if (!(rr > 0.0)) throw DataError("si_sdr: reference is all zeros");
  const double beta = dot(est.samples, ref.samples) / rr;
  double target = 0.0, err = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double t = beta * ref.samples[i];
    const double e = t - est.samples[i];
    target += t * t;
    err += e * e;
  }
  if (!(target > 0.0)) return -kSiSdrCapDb;
  if (!(err > 0.0)) return kSiSdrCapDb;
  return std::clamp(10.0 * std::log10(target / err), -kSiSdrCapDb, kSiSdrCapDb);
}

std::vector<double> resample_poly(const std::vector<double>& x, int up, int down) {
  if (up < 1 || down < 1) throw UsageError("resample: factors must be positive");
  const int g = std::gcd(up, down);
  up /= g;
  down /= g;
  if (up == 1 && down == 1) return x;
  const int m = std::max(up, down);
  const int half = 10 * m;
  constexpr double kBeta = 5.0;
  // Filter taps in the upsampled domain; cutoff at the lower Nyquist.
  std::vector<double> h(2 * half + 1);
  const double norm = std::cyl_bessel_i(0.0, kBeta);
  for (int n = -half; n <= half; ++n) {
    const double u = static_cast<double>(n) / m;
    const double sinc = n == 0 ? 1.0 : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
    const double r = static_cast<double>(n) / half;
    const double w = std::cyl_bessel_i(0.0, kBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
    h[n + half] = static_cast<double>(up) / m * sinc * w;
  }
  const std::size_t out_len = (x.size() * up + down - 1) / down;
  std::vector<double> y(out_len, 0.0);
  const auto len = static_cast<long long>(x.size());
  for (std::size_t j = 0; j < out_len; ++j) {
    const long long pos = static_cast<long long>(j) * down;  // upsampled index
    // Inputs k with |pos - k * up| <= half.
    const long long k0 = std::max(0LL, (pos - half + up - 1) / up);
    const long long k1 = std::min(len - 1, (pos + half) / up);
    double acc = 0.0;
    for (long long k = k0; k <= k1; ++k) acc += x[k] * h[pos - k * up + half];
    y[j] = acc;
  }
  return y;
}

namespace {

constexpr int kStoiRate = 10000;
constexpr int kStoiFrame = 256;
constexpr int kStoiFft = 512;
constexpr int kStoiHop = 128;
constexpr int kStoiBands = 15;
constexpr double kStoiMinFreq = 150.0;
constexpr int kStoiSegment = 30;
constexpr double kStoiBetaDb = -15.0;
constexpr double kStoiDynRange = 40.0;
constexpr double kEps = std::numeric_limits<double>::epsilon();

// Symmetric Hann without its zero end points.
std::vector<double> stoi_window() {
  std::vector<double> w(kStoiFrame);
  for (int n = 0; n < kStoiFrame; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (n + 1) / (kStoiFrame + 1));
  }
  return w;
}

// Drops frames more than 40 dB below the loudest reference frame from both
// signals and overlap-adds what remains.
void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const auto w = stoi_window();
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i + kStoiFrame < x.size(); i += kStoiHop) starts.push_back(i);
  std::vector<double> energy(starts.size());
  for (std::size_t f = 0; f < starts.size(); ++f) {
    double e = 0.0;
    for (int n = 0; n < kStoiFrame; ++n) e += std::pow(w[n] * x[starts[f] + n], 2);
    energy[f] = 20.0 * std::log10(std::sqrt(e) + kEps);
  }
  const double top = energy.empty() ? 0.0 : *std::max_element(energy.begin(), energy.end());
  std::vector<std::size_t> keep;
  for (std::size_t f = 0; f < starts.size(); ++f) {
    if (top - kStoiDynRange - energy[f] < 0.0) keep.push_back(starts[f]);
  }
  const std::size_t len = keep.empty() ? 0 : (keep.size() - 1) * kStoiHop + kStoiFrame;
  std::vector<double> xs(len, 0.0), ys(len, 0.0);
  for (std::size_t f = 0; f < keep.size(); ++f) {
    for (int n = 0; n < kStoiFrame; ++n) {
      xs[f * kStoiHop + n] += w[n] * x[keep[f] + n];
      ys[f * kStoiHop + n] += w[n] * y[keep[f] + n];
    }
  }
  x = std::move(xs);
  y = std::move(ys);
}

// One-third-octave band envelopes, bands x frames.
std::vector<std::vector<double>> band_envelopes(const std::vector<double>& x) {
  const auto w = stoi_window();
  constexpr int kBins = kStoiFft / 2 + 1;
  // Band edges snapped to the nearest FFT bin.
  std::vector<int> lo(kStoiBands), hi(kStoiBands);
  auto nearest = [](double hz) {
    return static_cast<int>(std::lround(hz * kStoiFft / kStoiRate));
  };
  for (int k = 0; k < kStoiBands; ++k) {
    lo[k] = std::min(nearest(kStoiMinFreq * std::pow(2.0, (2.0 * k - 1.0) / 6.0)), kBins - 1);
    hi[k] = std::min(nearest(kStoiMinFreq * std::pow(2.0, (2.0 * k + 1.0) / 6.0)), kBins - 1);
  }
  std::vector<std::vector<double>> env(kStoiBands);
  std::vector<double> frame(kStoiFft);
  std::vector<std::complex<double>> spec(kBins);
  for (std::size_t i = 0; i + kStoiFrame < x.size(); i += kStoiHop) {
    std::fill(frame.begin(), frame.end(), 0.0);
    for (int n = 0; n < kStoiFrame; ++n) frame[n] = w[n] * x[i + n];
    dsp::fft::forward(frame, spec);
    for (int k = 0; k < kStoiBands; ++k) {
      double p = 0.0;
      for (int b = lo[k]; b < hi[k]; ++b) p += std::norm(spec[b]);
      env[k].push_back(std::sqrt(p));
    }
  }
  return env;
}

}  // namespace

double stoi(const dsp::Waveform& est, const dsp::Waveform& ref) {
  require_same_length("stoi", est, ref);
  auto x = resample_poly(ref.samples, kStoiRate, ref.sample_rate);
  auto y = resample_poly(est.samples, kStoiRate, est.sample_rate);
  remove_silent_frames(x, y);
  const auto xe = band_envelopes(x);
  const auto ye = band_envelopes(y);
  const int frames = static_cast<int>(xe[0].size());
  if (frames < kStoiSegment) {
    throw DataError("stoi: " + std::to_string(frames) + " active frames, need " +
                    std::to_string(kStoiSegment));
  }
  const double clip = std::pow(10.0, -kStoiBetaDb / 20.0);
  double total = 0.0;
  int count = 0;
  std::vector<double> xs(kStoiSegment), ys(kStoiSegment);
  for (int m = kStoiSegment; m <= frames; ++m) {
    for (int k = 0; k < kStoiBands; ++k) {
      double nx = 0.0, ny = 0.0;
      for (int j = 0; j < kStoiSegment; ++j) {
        xs[j] = xe[k][m - kStoiSegment + j];
        ys[j] = ye[k][m - kStoiSegment + j];
        nx += xs[j] * xs[j];
        ny += ys[j] * ys[j];
      }
      const double gain = std::sqrt(nx) / (std::sqrt(ny) + kEps);
      double mx = 0.0, my = 0.0;
      for (int j = 0; j < kStoiSegment; ++j) {
        ys[j] = std::min(ys[j] * gain, xs[j] * (1.0 + clip));
        mx += xs[j];
        my += ys[j];
      }
      mx /= kStoiSegment;
      my /= kStoiSegment;
      double sxy = 0.0, sxx = 0.0, syy = 0.0;
      for (int j = 0; j < kStoiSegment; ++j) {
        const double a = xs[j] - mx, b = ys[j] - my;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
      }
      total += sxy / ((std::sqrt(sxx) + kEps) * (std::sqrt(syy) + kEps));
      ++count;
    }
  }
  return total / count;
}

double log_spectral_distance(const dsp::ComplexSpectrogram& est, const dsp::ComplexSpectrogram& ref) {
  if (est.frames != ref.frames || est.bins != ref.bins) {
    throw ShapeError("lsd: spectrogram shapes differ");
  }
  auto log_power = [](const dsp::ComplexSpectrogram& s) {
    std::vector<double> p(static_cast<std::size_t>(s.frames) * s.bins);
    double peak = 0.0;
    for (int t = 0; t < s.frames; ++t) {
      for (int f = 0; f < s.bins; ++f) peak = std::max(peak, p[s.index(t, f)] = s.power(t, f));
    }
    const double floor = peak > 0.0 ? peak * std::pow(10.0, kLsdFloorDb / 10.0)
                                    : std::numeric_limits<double>::min();
    for (auto& v : p) v = 10.0 * std::log10(std::max(v, floor));
    return p;
  };
  const auto a = log_power(est);
  const auto b = log_power(ref);
  double acc = 0.0;
  for (int t = 0; t < est.frames; ++t) {
    double frame = 0.0;
    for (int f = 0; f < est.bins; ++f) {
      const double d = a[est.index(t, f)] - b[est.index(t, f)];
      frame += d * d;
    }
    acc += frame / est.bins;  // squared per-frame RMS
  }
  return std::sqrt(acc / est.frames);
}

double log_spectral_distance(const dsp::Waveform& est, const dsp::Waveform& ref,
                             const dsp::StftConfig& cfg) {
  require_same_length("lsd", est, ref);
  return log_spectral_distance(dsp::stft(est, cfg), dsp::stft(ref, cfg));
}

std::size_t HallucinationMap::count() const {
  return static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), 1));
}

double HallucinationMap::density(int t0, int t1) const {
  t0 = std::clamp(t0, 0, frames);
  t1 = std::clamp(t1, t0, frames);
  if (t1 == t0 || bins == 0) return 0.0;
  std::size_t n = 0;
  for (int t = t0; t < t1; ++t) {
    for (int f = 0; f < bins; ++f) n += at(t, f) ? 1 : 0;
  }
  return static_cast<double>(n) / (static_cast<double>(t1 - t0) * bins);
}

HallucinationMap hallucination_map(const dsp::ComplexSpectrogram& noisy,
                                   const dsp::ComplexSpectrogram& clean,
                                   const dsp::ComplexSpectrogram& enhanced,
                                   const HallucinationOptions& opts) {
  if (noisy.frames != enhanced.frames || noisy.bins != enhanced.bins ||
      clean.frames != enhanced.frames || clean.bins != enhanced.bins) {
    throw ShapeError("hallucination_map: spectrogram shapes differ");
  }
  HallucinationMap map;
  map.frames = enhanced.frames;
  map.bins = enhanced.bins;
  map.flagged.assign(static_cast<std::size_t>(map.frames) * map.bins, 0);
  double peak = 0.0, total = 0.0;
  for (int t = 0; t < map.frames; ++t) {
    for (int f = 0; f < map.bins; ++f) {
      const double p = enhanced.power(t, f);
      peak = std::max(peak, p);
      total += p;
    }
  }
  if (!(total > 0.0)) return map;
  const double margin = std::pow(10.0, opts.margin_db / 10.0);
  const double floor = peak * std::pow(10.0, opts.floor_db / 10.0);
  double flagged = 0.0;
  for (int t = 0; t < map.frames; ++t) {
    for (int f = 0; f < map.bins; ++f) {
      const double p = enhanced.power(t, f);
      const double ref = std::max(noisy.power(t, f), clean.power(t, f));
      if (p > ref * margin && p > floor) {
        map.flagged[enhanced.index(t, f)] = 1;
        flagged += p;
      }
    }
  }
  map.energy_ratio = flagged / total;
  return map;
}

int frames_within(const dsp::StftConfig& cfg, int sample_rate, double seconds) {
  const double limit = seconds * sample_rate;
  int t = 0;
  while (static_cast<double>(t) * cfg.hop + cfg.window_length <= limit) ++t;
  return t;
}

}  // namespace hlab::metrics
