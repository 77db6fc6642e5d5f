// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "hlab/common/error.hpp"
#include "hlab/common/manifest.hpp"
#include "hlab/common/random.hpp"
#include "hlab/dsp/stft.hpp"
#include "hlab/dsp/wav_io.hpp"

namespace hlab::synth {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Stream indices keep the draws of one clip independent of any other.
constexpr std::uint64_t kCleanStream = 1;
constexpr std::uint64_t kDegradationStream = 1ULL << 40;
constexpr std::uint64_t kNoiseStream = 1ULL << 41;

double rms(const std::vector<double>& x, std::size_t from = 0) {
  if (from >= x.size()) return 0.0;
  double e = 0.0;
  for (std::size_t i = from; i < x.size(); ++i) e += x[i] * x[i];
  return std::sqrt(e / static_cast<double>(x.size() - from));
}

void scale_to_unit_rms(std::vector<double>& x) {
  const double r = rms(x);
  if (r > 0.0) {
    for (auto& v : x) v /= r;
  }
}

// Raised-cosine syllable envelope: bursts of 120-350 ms separated by short
// gaps, starting exactly at `start`.
std::vector<double> syllable_envelope(Rng& rng, std::size_t n, std::size_t start, int sr) {
  std::vector<double> env(n, 0.0);
  const auto attack = static_cast<std::size_t>(0.02 * sr);
  const auto release = static_cast<std::size_t>(0.03 * sr);
  std::size_t pos = start;
  while (pos < n) {
    const auto len = static_cast<std::size_t>(rng.uniform(0.12, 0.35) * sr);
    const double level = rng.uniform(0.5, 1.0);
    for (std::size_t i = 0; i < len && pos + i < n; ++i) {
      double g = 1.0;
      if (i < attack) g = 0.5 - 0.5 * std::cos(std::numbers::pi * i / attack);
      if (i + release > len) g = std::min(g, 0.5 - 0.5 * std::cos(std::numbers::pi * (len - i) / release));
      env[pos + i] = level * g;
    }
    pos += len + static_cast<std::size_t>(rng.uniform(0.03, 0.12) * sr);
  }
  return env;
}

struct Voice {
  double f0;
  int harmonics;
};

// Harmonic complex with formant-shaped amplitudes and sinusoidal pitch drift.
std::vector<double> harmonic_voice(Rng& rng, const Voice& v, double drift, std::size_t n, int sr) {
  const double tilt = rng.uniform(0.5, 1.2);
  const double f1 = rng.uniform(400.0, 900.0);
  const double f2 = rng.uniform(1000.0, 2500.0);
  const double rate = rng.uniform(1.0, 3.0);
  const double drift_phase = rng.uniform(0.0, kTwoPi);
  std::vector<double> amp(v.harmonics), phase(v.harmonics);
  for (int k = 1; k <= v.harmonics; ++k) {
    const double f = k * v.f0;
    const double formant = 1.0 + 2.0 * std::exp(-std::pow((f - f1) / 200.0, 2)) +
                           std::exp(-std::pow((f - f2) / 300.0, 2));
    amp[k - 1] = std::pow(k, -tilt) * formant;
    phase[k - 1] = rng.uniform(0.0, kTwoPi);
  }
  const double nyquist = 0.5 * sr;
  std::vector<double> out(n, 0.0);
  double cycle = 0.0;  // integrated fundamental phase in cycles
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double f = v.f0 * (1.0 + drift * std::sin(kTwoPi * rate * t + drift_phase));
    double s = 0.0;
    for (int k = 1; k <= v.harmonics; ++k) {
      if (k * f >= nyquist) break;
      s += amp[k - 1] * std::sin(kTwoPi * k * cycle + phase[k - 1]);
    }
    out[i] = s;
    cycle += f / sr;
    cycle -= std::floor(cycle);
  }
  return out;
}

Voice draw_voice(Rng& rng, const ClipSpec& spec) {
  Voice v;
  v.f0 = rng.uniform(spec.f0_min, spec.f0_max);
  v.harmonics = spec.harmonics_min +
                static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.harmonics_max - spec.harmonics_min + 1)));
  return v;
}

void apply_notch(std::vector<double>& x, double centre_hz, int sr) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> spec(n / 2 + 1);
  dsp::fft::forward(x, spec);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = static_cast<double>(k) * sr / static_cast<double>(n);
    if (std::abs(f - centre_hz) <= 200.0) spec[k] = 0.0;
  }
  dsp::fft::inverse(spec, x);
  for (auto& v : x) v /= static_cast<double>(n);
}

}  // namespace

void ClipSpec::validate() const {
  if (!(duration > leading_pause) || leading_pause < 0.0) {
    throw UsageError("clip: need duration > leading_pause >= 0");
  }
  if (!(f0_min > 0.0) || f0_max < f0_min) throw UsageError("clip: invalid f0 range");
  if (harmonics_min < 1 || harmonics_max < harmonics_min) throw UsageError("clip: invalid harmonic range");
  if (drift < 0.0 || drift >= 0.5) throw UsageError("clip: drift must be in [0, 0.5)");
  if (sample_rate <= 0) throw UsageError("clip: sample rate must be positive");
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kNone: return "none";
    case NoiseKind::kWhite: return "white";
    case NoiseKind::kPink: return "pink";
    case NoiseKind::kBabble: return "babble";
    case NoiseKind::kTone500: return "tone-500Hz";
  }
  return "none";
}

NoiseKind parse_noise_kind(const std::string& name) {
  for (auto k : {NoiseKind::kNone, NoiseKind::kWhite, NoiseKind::kPink, NoiseKind::kBabble,
                 NoiseKind::kTone500}) {
    if (to_string(k) == name) return k;
  }
  throw DataError("unknown noise kind '" + name + "'");
}

void DegradationSpec::validate() const {
  if (!std::isfinite(snr)) throw UsageError("degradation: snr must be finite");
  if (clip_level && !(*clip_level > 0.0 && *clip_level <= 1.0)) {
    throw UsageError("degradation: clip level must be in (0, 1]");
  }
  if (notch_hz && !(*notch_hz > 0.0)) throw UsageError("degradation: notch frequency must be positive");
}

ClipPitch clip_pitch(const ClipSpec& spec) {
  spec.validate();
  Rng rng = Rng::derive(spec.seed, kCleanStream);
  const Voice v = draw_voice(rng, spec);
  return {v.f0, v.harmonics};
}

dsp::Waveform synth_clean(const ClipSpec& spec) {
  spec.validate();
  Rng rng = Rng::derive(spec.seed, kCleanStream);
  const Voice v = draw_voice(rng, spec);
  const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.sample_rate));
  const auto start = static_cast<std::size_t>(std::llround(spec.leading_pause * spec.sample_rate));
  auto x = harmonic_voice(rng, v, spec.drift, n, spec.sample_rate);
  const auto env = syllable_envelope(rng, n, start, spec.sample_rate);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] *= env[i];
    peak = std::max(peak, std::abs(x[i]));
  }
  const double target = 0.9 * rng.uniform(0.4, 1.0);
  if (peak > 0.0) {
    for (auto& s : x) s *= target / peak;
  }
  return dsp::Waveform(std::move(x), spec.sample_rate);
}

std::vector<double> make_noise(NoiseKind kind, std::size_t n, int sample_rate, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, kNoiseStream);
  std::vector<double> x(n, 0.0);
  switch (kind) {
    case NoiseKind::kNone:
      return x;
    case NoiseKind::kWhite:
      for (auto& v : x) v = rng.normal();
      break;
    case NoiseKind::kPink: {
      for (auto& v : x) v = rng.normal();
      std::vector<std::complex<double>> spec(n / 2 + 1);
      dsp::fft::forward(x, spec);
      spec[0] = 0.0;
      for (std::size_t k = 1; k < spec.size(); ++k) spec[k] /= std::sqrt(static_cast<double>(k));
      dsp::fft::inverse(spec, x);
      break;
    }
    case NoiseKind::kBabble: {
      constexpr int kTalkers = 6;
      ClipSpec talker;
      for (int t = 0; t < kTalkers; ++t) {
        const Voice v = draw_voice(rng, talker);
        const auto voice = harmonic_voice(rng, v, talker.drift, n, sample_rate);
        const auto env = syllable_envelope(rng, n, static_cast<std::size_t>(rng.below(sample_rate / 4)), sample_rate);
        for (std::size_t i = 0; i < n; ++i) x[i] += voice[i] * (0.3 + env[i]);
      }
      break;
    }
    case NoiseKind::kTone500: {
      const double phase = rng.uniform(0.0, kTwoPi);
      for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(kTwoPi * 500.0 * i / sample_rate + phase);
      break;
    }
  }
  scale_to_unit_rms(x);
  return x;
}

dsp::Waveform mix_at_snr(const dsp::Waveform& clean, const DegradationSpec& deg, std::uint64_t seed,
                         std::size_t measure_from) {
  clean.validate();
  deg.validate();
  const double ec = rms(clean.samples, measure_from);
  if (!(ec > 0.0)) throw DataError("mix: clean signal has zero energy in the measured region");
  auto y = clean.samples;
  if (deg.kind != NoiseKind::kNone) {
    const auto noise = make_noise(deg.kind, y.size(), clean.sample_rate, seed);
    const double en = rms(noise, measure_from);
    const double g = ec / (en * std::pow(10.0, deg.snr / 20.0));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += g * noise[i];
  }
  if (deg.clip_level) {
    double peak = 0.0;
    for (double v : y) peak = std::max(peak, std::abs(v));
    const double lim = *deg.clip_level * peak;
    for (auto& v : y) v = std::clamp(v, -lim, lim);
  }
  if (deg.notch_hz) apply_notch(y, *deg.notch_hz, clean.sample_rate);
  return dsp::Waveform(std::move(y), clean.sample_rate);
}

double ProxyMosRule::weight(const DegradationSpec& deg) const {
  double w = 1.0;
  switch (deg.kind) {
    case NoiseKind::kNone: break;
    case NoiseKind::kWhite: w = white; break;
    case NoiseKind::kPink: w = pink; break;
    case NoiseKind::kBabble: w = babble; break;
    case NoiseKind::kTone500: w = tone; break;
  }
  if (deg.clip_level) w *= clipping;
  if (deg.notch_hz) w *= notch;
  return w;
}

double proxy_mos(const ProxyMosRule& rule, const DegradationSpec& deg) {
  deg.validate();
  const double s = 1.0 / (1.0 + std::exp(-(deg.snr - rule.center) / rule.width));
  return std::clamp(1.0 + 4.0 * s * rule.weight(deg), 1.0, 5.0);
}

void CorpusCounts::validate() const {
  for (int c : {predictor_train, predictor_valid, predictor_test, enhancement_train,
                enhancement_valid, enhancement_test}) {
    if (c < 1) throw UsageError("corpus: every split needs at least one clip");
  }
  if (!(duration > 0.5)) throw UsageError("corpus: clip duration must exceed the 0.5 s pause");
}

namespace {

struct Pair {
  dsp::Waveform clean;
  dsp::Waveform noisy;
};

// Mixes and jointly rescales so the mixture peak stays inside 16-bit range.
Pair make_pair(std::uint64_t clip_seed, double duration, const DegradationSpec& deg) {
  ClipSpec spec;
  spec.seed = clip_seed;
  spec.duration = duration;
  Pair p;
  p.clean = synth_clean(spec);
  const auto from = static_cast<std::size_t>(spec.leading_pause * spec.sample_rate);
  p.noisy = mix_at_snr(p.clean, deg, clip_seed, from);
  double peak = 0.0;
  for (double v : p.noisy.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.95) {
    const double g = 0.95 / peak;
    for (auto& v : p.clean.samples) v *= g;
    for (auto& v : p.noisy.samples) v *= g;
  }
  return p;
}

std::string numbered(const std::string& prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", i);
  return prefix + buf;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

constexpr NoiseKind kNoiseKinds[] = {NoiseKind::kWhite, NoiseKind::kPink, NoiseKind::kBabble,
                                     NoiseKind::kTone500};

}  // namespace

CorpusPaths build_corpus(const std::filesystem::path& out, const CorpusCounts& counts,
                         std::uint64_t seed) {
  counts.validate();
  const auto pred_dir = out / "predictor";
  const auto enh_dir = out / "enhancement";
  ensure_dir(pred_dir / "wav");
  ensure_dir(enh_dir / "clean");
  ensure_dir(enh_dir / "noisy");
  const ProxyMosRule rule;
  std::uint64_t clip = 0;

  Manifest pred;
  for (const auto& [split, count] : {std::pair<std::string, int>{"train", counts.predictor_train},
                                     {"valid", counts.predictor_valid},
                                     {"test", counts.predictor_test}}) {
    for (int i = 0; i < count; ++i, ++clip) {
      Rng r = Rng::derive(seed, kDegradationStream + clip);
      DegradationSpec deg;
      if (r.uniform() < 0.15) {
        deg.kind = NoiseKind::kNone;
        deg.snr = 100.0;
      } else {
        deg.kind = kNoiseKinds[r.below(4)];
        deg.snr = r.uniform(-5.0, 25.0);
        if (r.uniform() < 0.1) deg.clip_level = r.uniform(0.3, 0.7);
        if (r.uniform() < 0.1) deg.notch_hz = r.uniform(500.0, 3000.0);
      }
      const auto p = make_pair(Rng::derive(seed, clip).bits(), counts.duration, deg);
      ManifestEntry e;
      e.id = numbered("pred-" + split + "-", i);
      e.wav_path = std::filesystem::path("wav") / (e.id + ".wav");
      e.mos_raw = proxy_mos(rule, deg);
      e.split = split;
      e.set_name = "synthetic";
      e.kind = to_string(deg.kind);
      e.snr = deg.snr;
      dsp::write_wav(pred_dir / e.wav_path, p.noisy);
      pred.entries.push_back(std::move(e));
    }
  }

  Manifest enh;
  for (const auto& [split, count] : {std::pair<std::string, int>{"train", counts.enhancement_train},
                                     {"valid", counts.enhancement_valid},
                                     {"test", counts.enhancement_test}}) {
    for (int i = 0; i < count; ++i, ++clip) {
      Rng r = Rng::derive(seed, kDegradationStream + clip);
      DegradationSpec deg;
      deg.kind = kNoiseKinds[r.below(4)];
      deg.snr = 5.0 * static_cast<double>(r.below(4));
      const auto p = make_pair(Rng::derive(seed, clip).bits(), counts.duration, deg);
      ManifestEntry e;
      e.id = numbered("enh-" + split + "-", i);
      e.wav_path = std::filesystem::path("noisy") / (e.id + ".wav");
      e.clean_path = std::filesystem::path("clean") / (e.id + ".wav");
      e.split = split;
      e.set_name = "enhancement";
      e.kind = to_string(deg.kind);
      e.snr = deg.snr;
      dsp::write_wav(enh_dir / e.wav_path, p.noisy);
      dsp::write_wav(enh_dir / *e.clean_path, p.clean);
      enh.entries.push_back(std::move(e));
    }
  }

  CorpusPaths paths{pred_dir / "manifest.json", enh_dir / "manifest.json"};
  save_manifest(paths.predictor_manifest, pred);
  save_manifest(paths.enhancement_manifest, enh);
  return paths;
}

}  // namespace hlab::synth
