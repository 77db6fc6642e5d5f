// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/metrics/evaluate.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "hlab/common/error.hpp"
#include "hlab/dsp/wav_io.hpp"

namespace hlab::metrics {
namespace {

struct Triple {
  std::string id;
  dsp::Waveform clean;
  dsp::Waveform noisy;
};

std::vector<Triple> load_triples(const Manifest& manifest, const std::string& split) {
  std::vector<Triple> out;
  for (const auto& e : manifest.split(split)) {
    if (!e.clean_path) throw DataError("evaluation: " + e.id + " has no clean reference");
    Triple t{e.id, dsp::read_wav(manifest.resolve(*e.clean_path)),
             dsp::read_wav(manifest.resolve(e.wav_path))};
    if (t.clean.size() != t.noisy.size()) throw DataError("evaluation: length mismatch for " + e.id);
    out.push_back(std::move(t));
  }
  if (out.empty()) throw DataError("evaluation: split '" + split + "' is empty");
  return out;
}

dsp::Waveform truncated(const dsp::Waveform& w, std::size_t n) {
  return dsp::Waveform(std::vector<double>(w.samples.begin(), w.samples.begin() + n), w.sample_rate);
}

// Scores `est` (with spectrogram `est_spec`) against one triple.
FileMetrics score_file(const Triple& t, const dsp::Waveform& est, const dsp::ComplexSpectrogram& est_spec,
                       const predictor::PredictorModel& predictor, const EvalOptions& opts) {
  const std::size_t n = std::min(est.size(), t.clean.size());
  const auto ref = truncated(t.clean, n);
  const auto out = truncated(est, n);
  const auto& cfg = est_spec.config;
  const auto clean_spec = dsp::stft(t.clean, cfg);
  const auto noisy_spec = dsp::stft(t.noisy, cfg);
  FileMetrics f;
  f.id = t.id;
  f.si_sdr = si_sdr(out, ref);
  f.stoi = std::clamp(stoi(out, ref), 0.0, 1.0);
  f.lsd = log_spectral_distance(est_spec, clean_spec);
  f.predictor_score = predictor.predict(est);
  const auto map = hallucination_map(noisy_spec, clean_spec, est_spec, opts.halluc);
  f.halluc_ratio = map.energy_ratio;
  const int pause = std::min(frames_within(cfg, t.clean.sample_rate, opts.pause_seconds), map.frames);
  for (int tt = 0; tt < map.frames; ++tt) {
    for (int k = 0; k < map.bins; ++k) {
      const bool hit = map.at(tt, k);
      if (tt < pause) {
        f.pause_flagged += hit;
        ++f.pause_bins;
      } else {
        f.rest_flagged += hit;
        ++f.rest_bins;
      }
    }
  }
  return f;
}

MetricRow mean_row(const std::vector<FileMetrics>& files) {
  MetricRow r;
  for (const auto& f : files) {
    r.si_sdr += f.si_sdr;
    r.stoi += f.stoi;
    r.lsd += f.lsd;
    r.predictor_score += f.predictor_score;
    r.halluc_ratio += f.halluc_ratio;
  }
  const double n = static_cast<double>(files.size());
  r.si_sdr /= n;
  r.stoi /= n;
  r.lsd /= n;
  r.predictor_score /= n;
  r.halluc_ratio /= n;
  return r;
}

}  // namespace

double Evaluation::pause_density() const {
  std::size_t hit = 0, total = 0;
  for (const auto& f : files) {
    hit += f.pause_flagged;
    total += f.pause_bins;
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

double Evaluation::rest_density() const {
  std::size_t hit = 0, total = 0;
  for (const auto& f : files) {
    hit += f.rest_flagged;
    total += f.rest_bins;
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

Evaluation evaluate_reference(Reference which, const predictor::PredictorModel& predictor,
                              const Manifest& manifest, const EvalOptions& opts) {
  Evaluation ev;
  for (const auto& t : load_triples(manifest, opts.split)) {
    const auto& sig = which == Reference::kClean ? t.clean : t.noisy;
    ev.files.push_back(score_file(t, sig, dsp::stft(sig), predictor, opts));
  }
  ev.row = mean_row(ev.files);
  ev.row.label = which == Reference::kClean ? "clean" : "noisy";
  return ev;
}

Evaluation evaluate_model(const enhancer::EnhancerModel& model, double alpha,
                          const predictor::PredictorModel& predictor, const Manifest& manifest,
                          const EvalOptions& opts) {
  Evaluation ev;
  for (const auto& t : load_triples(manifest, opts.split)) {
    const auto r = model.enhance(t.noisy);
    ev.files.push_back(score_file(t, r.wave, r.spec, predictor, opts));
  }
  ev.row = mean_row(ev.files);
  ev.row.label = format_alpha(alpha);
  ev.row.alpha = alpha;
  return ev;
}

std::string format_alpha(double alpha) { return fmt::format("{:.2f}", alpha); }

std::string table_csv(const std::vector<MetricRow>& rows) {
  std::string out = "alpha,si_sdr,stoi,lsd,predictor_score,halluc_ratio\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.4f},{:.4f},{:.4f},{:.4f},{:.6f}\n", r.label, r.si_sdr, r.stoi, r.lsd,
                       r.predictor_score, r.halluc_ratio);
  }
  return out;
}

void write_table_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << table_csv(rows);
  if (!os.flush()) throw IoError("write failed for " + path.string());
}

nlohmann::json to_json(const Evaluation& eval) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : eval.files) {
    files.push_back({{"id", f.id},
                     {"si_sdr", f.si_sdr},
                     {"stoi", f.stoi},
                     {"lsd", f.lsd},
                     {"predictor_score", f.predictor_score},
                     {"halluc_ratio", f.halluc_ratio},
                     {"pause_flagged", f.pause_flagged},
                     {"pause_bins", f.pause_bins},
                     {"rest_flagged", f.rest_flagged},
                     {"rest_bins", f.rest_bins}});
  }
  nlohmann::json j = {{"label", eval.row.label},
                      {"si_sdr", eval.row.si_sdr},
                      {"stoi", eval.row.stoi},
                      {"lsd", eval.row.lsd},
                      {"predictor_score", eval.row.predictor_score},
                      {"halluc_ratio", eval.row.halluc_ratio},
                      {"pause_density", eval.pause_density()},
                      {"rest_density", eval.rest_density()},
                      {"files", files}};
  if (eval.row.alpha) j["alpha"] = *eval.row.alpha;
  return j;
}

}  // namespace hlab::metrics
