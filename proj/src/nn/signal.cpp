// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/nn/signal.hpp"

#include <complex>
#include <string>

#include "hlab/common/error.hpp"
#include "hlab/nn/ops.hpp"

namespace hlab::nn {

using cplx = std::complex<double>;

Tensor stft(const Tensor& wave, const dsp::StftConfig& cfg) {
  cfg.validate();
  if (wave.rank() != 1) throw ShapeError("stft: expected a 1-D signal, got " + shape_str(wave.shape()));
  const int n_win = cfg.window_length;
  if (wave.size() < static_cast<std::size_t>(n_win)) {
    throw DataError("stft: input too short (" + std::to_string(wave.size()) + " samples)");
  }
  const int frames = cfg.num_frames(wave.size());
  const int bins = cfg.num_bins();
  const auto w = dsp::analysis_window(cfg);
  const auto& x = wave.node()->value;
  Buffer y(static_cast<std::size_t>(frames) * bins * 2);
  std::vector<double> frame(n_win);
  std::vector<cplx> out(bins);
  for (int t = 0; t < frames; ++t) {
    const std::size_t off = static_cast<std::size_t>(t) * cfg.hop;
    for (int n = 0; n < n_win; ++n) frame[n] = x[off + n] * w[n];
    dsp::fft::forward(frame, out);
    double* row = y.data() + static_cast<std::size_t>(t) * bins * 2;
    for (int f = 0; f < bins; ++f) {
      row[2 * f] = out[f].real();
      row[2 * f + 1] = out[f].imag();
    }
  }
  return make_op("stft", {frames, bins, 2}, std::move(y), {wave},
                 [cfg, frames, bins, w](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   auto& gx = p.grad_buffer();
                   const int n_win = cfg.window_length;
                   std::vector<cplx> g(bins);
                   std::vector<double> frame(n_win);
                   for (int t = 0; t < frames; ++t) {
                     const double* row = self.grad.data() + static_cast<std::size_t>(t) * bins * 2;
                     for (int f = 0; f < bins; ++f) {
                       const bool edge = f == 0 || f == bins - 1;
                       g[f] = edge ? cplx(row[2 * f], 0.0)
                                   : cplx(0.5 * row[2 * f], 0.5 * row[2 * f + 1]);
                     }
                     dsp::fft::inverse(g, frame);
                     const std::size_t off = static_cast<std::size_t>(t) * cfg.hop;
                     for (int n = 0; n < n_win; ++n) gx[off + n] += w[n] * frame[n];
                   }
                 });
}

Tensor istft(const Tensor& spec, const dsp::StftConfig& cfg) {
  cfg.validate();
  const int bins = cfg.num_bins();
  if (spec.rank() != 3 || spec.dim(1) != bins || spec.dim(2) != 2) {
    throw ShapeError("istft: expected [T, " + std::to_string(bins) + ", 2], got " +
                     shape_str(spec.shape()));
  }
  const int frames = spec.dim(0);
  const int n_win = cfg.window_length;
  const auto w = dsp::analysis_window(cfg);
  const auto den = dsp::synthesis_normalizer(cfg, frames);
  const auto& s = spec.node()->value;
  Buffer y(den.size(), 0.0);
  std::vector<cplx> b(bins);
  std::vector<double> frame(n_win);
  for (int t = 0; t < frames; ++t) {
    const double* row = s.data() + static_cast<std::size_t>(t) * bins * 2;
    for (int f = 0; f < bins; ++f) b[f] = {row[2 * f], row[2 * f + 1]};
    dsp::fft::inverse(b, frame);
    const std::size_t off = static_cast<std::size_t>(t) * cfg.hop;
    for (int n = 0; n < n_win; ++n) y[off + n] += w[n] * frame[n] / n_win;
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = den[i] > dsp::kSynthesisFloor ? y[i] / den[i] : 0.0;
  }
  const int len = static_cast<int>(y.size());
  return make_op("istft", {len}, std::move(y), {spec},
                 [cfg, frames, bins, w, den](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   auto& gs = p.grad_buffer();
                   const int n_win = cfg.window_length;
                   std::vector<double> frame(n_win);
                   std::vector<cplx> r(bins);
                   for (int t = 0; t < frames; ++t) {
                     const std::size_t off = static_cast<std::size_t>(t) * cfg.hop;
                     for (int n = 0; n < n_win; ++n) {
                       const double d = den[off + n];
                       frame[n] = d > dsp::kSynthesisFloor ? self.grad[off + n] * w[n] / (d * n_win) : 0.0;
                     }
                     dsp::fft::forward(frame, r);
                     double* row = gs.data() + static_cast<std::size_t>(t) * bins * 2;
                     for (int f = 0; f < bins; ++f) {
                       const bool edge = f == 0 || f == bins - 1;
                       const double c = edge ? 1.0 : 2.0;
                       row[2 * f] += c * r[f].real();
                       if (!edge) row[2 * f + 1] += c * r[f].imag();
                     }
                   }
                 });
}

Tensor log_mel(const Tensor& spec, const Tensor& filterbank_t, double eps) {
  Tensor power = complex_power(spec);
  return log(add_scalar(matmul(power, filterbank_t), eps));
}

Tensor from_spectrogram(const dsp::ComplexSpectrogram& spec) {
  spec.validate();
  std::vector<double> v(spec.real.size() * 2);
  for (std::size_t i = 0; i < spec.real.size(); ++i) {
    v[2 * i] = spec.real[i];
    v[2 * i + 1] = spec.imag[i];
  }
  return Tensor::constant({spec.frames, spec.bins, 2}, std::move(v));
}

dsp::ComplexSpectrogram to_spectrogram(const Tensor& t, const dsp::StftConfig& cfg,
                                       int sample_rate) {
  if (t.rank() != 3 || t.dim(2) != 2 || t.dim(1) != cfg.num_bins()) {
    throw ShapeError("to_spectrogram: expected [T, F, 2], got " + shape_str(t.shape()));
  }
  dsp::ComplexSpectrogram spec(t.dim(0), t.dim(1), cfg, sample_rate);
  const auto v = t.values();
  for (std::size_t i = 0; i < spec.real.size(); ++i) {
    spec.real[i] = v[2 * i];
    spec.imag[i] = v[2 * i + 1];
  }
  return spec;
}

}  // namespace hlab::nn
