// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "hlab/dsp/waveform.hpp"

namespace hlab::synth {

/// Speech-like clean clip: a harmonic complex with slow pitch drift, cut into
/// syllable-like bursts, preceded by a silent pause.
struct ClipSpec {
  std::uint64_t seed = 0;
  double duration = 2.0;
  double f0_min = 90.0;
  double f0_max = 300.0;
  int harmonics_min = 8;
  int harmonics_max = 20;
  double leading_pause = 0.5;
  double drift = 0.03;  // peak relative pitch deviation
  int sample_rate = dsp::kDefaultSampleRate;

  void validate() const;
};

enum class NoiseKind { kNone, kWhite, kPink, kBabble, kTone500 };

std::string to_string(NoiseKind kind);
/// Accepts the names produced by to_string; DataError otherwise.
NoiseKind parse_noise_kind(const std::string& name);

struct DegradationSpec {
  NoiseKind kind = NoiseKind::kWhite;
  double snr = 10.0;
  std::optional<double> clip_level;  // fraction of the mixture peak
  std::optional<double> notch_hz;    // centre of a 400 Hz wide spectral gap

  void validate() const;
};

/// Fundamental and harmonic count chosen for a spec, for inspection.
struct ClipPitch {
  double f0 = 0.0;
  int harmonics = 0;
};
ClipPitch clip_pitch(const ClipSpec& spec);

dsp::Waveform synth_clean(const ClipSpec& spec);

/// Unit-scale noise of the given kind (kNone gives zeros).
std::vector<double> make_noise(NoiseKind kind, std::size_t n, int sample_rate, std::uint64_t seed);

/// clean + noise with 10 log10(E_clean / E_noise) = snr over samples from
/// `measure_from` on; then the optional clipping and notch extras.
dsp::Waveform mix_at_snr(const dsp::Waveform& clean, const DegradationSpec& deg,
                         std::uint64_t seed, std::size_t measure_from = 0);

/// q = clamp(1 + 4 * sigmoid((snr - 5) / 7) * w, 1, 5), where the weight w in
/// (0, 1] penalises the noise kind and each extra. Strictly increasing in snr.
struct ProxyMosRule {
  double center = 5.0;
  double width = 7.0;
  double white = 0.95;
  double pink = 1.0;
  double babble = 0.9;
  double tone = 0.85;
  double clipping = 0.85;
  double notch = 0.9;

  double weight(const DegradationSpec& deg) const;
};

double proxy_mos(const ProxyMosRule& rule, const DegradationSpec& deg);

struct CorpusCounts {
  int predictor_train = 500;
  int predictor_valid = 50;
  int predictor_test = 100;
  int enhancement_train = 200;
  int enhancement_valid = 20;
  int enhancement_test = 50;
  double duration = 2.0;

  void validate() const;
};

struct CorpusPaths {
  std::filesystem::path predictor_manifest;
  std::filesystem::path enhancement_manifest;
};

/// Writes <out>/predictor/manifest.json and <out>/enhancement/manifest.json
/// with their WAV files. Every clip's randomness derives from (seed, index).
CorpusPaths build_corpus(const std::filesystem::path& out, const CorpusCounts& counts,
                         std::uint64_t seed);

}  // namespace hlab::synth
