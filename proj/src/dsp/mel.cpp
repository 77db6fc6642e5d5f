// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/dsp/mel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hlab/common/error.hpp"

namespace hlab::dsp {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(int n_mels, int n_bins, int sample_rate) {
  if (n_mels < 1) throw UsageError("mel: n_mels must be >= 1");
  if (n_mels > n_bins) {
    throw UsageError("mel: n_mels (" + std::to_string(n_mels) + ") exceeds bin count (" +
                     std::to_string(n_bins) + ")");
  }
  const double nyquist = sample_rate / 2.0;
  const double bin_hz = nyquist / (n_bins - 1);
  const double mel_max = hz_to_mel(nyquist);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) edges[i] = mel_to_hz(mel_max * i / (n_mels + 1));

  Matrix fb(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    double row_sum = 0.0;
    for (int k = 0; k < n_bins; ++k) {
      const double hz = k * bin_hz;
      double w = 0.0;
      if (hz > lo && hz <= mid) {
        w = (hz - lo) / (mid - lo);
      } else if (hz > mid && hz < hi) {
        w = (hi - hz) / (hi - mid);
      }
      fb(m, k) = w;
      row_sum += w;
    }
    // Narrow low-frequency filters can fall between bin centres.
    if (row_sum <= 0.0) {
      const int k = static_cast<int>(std::lround(mid / bin_hz));
      fb(m, std::min(k, n_bins - 1)) = 1.0;
    }
  }
  return fb;
}

Matrix log_mel(const ComplexSpectrogram& spec, int n_mels) {
  spec.validate();
  const Matrix fb = mel_filterbank(n_mels, spec.bins, spec.sample_rate);
  Matrix out(spec.frames, n_mels);
  for (int t = 0; t < spec.frames; ++t) {
    for (int m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      for (int k = 0; k < spec.bins; ++k) acc += fb(m, k) * spec.power(t, k);
      out(t, m) = std::log(acc + kLogMelEpsilon);
    }
  }
  return out;
}

}  // namespace hlab::dsp
