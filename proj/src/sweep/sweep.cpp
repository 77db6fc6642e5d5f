// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/sweep/sweep.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "hlab/common/error.hpp"
#include "hlab/common/random.hpp"
#include "hlab/dsp/render.hpp"
#include "hlab/dsp/wav_io.hpp"
#include "hlab/nn/checkpoint.hpp"

namespace hlab::sweep {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os.flush()) throw IoError("write failed for " + path.string());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string alpha_dir(double alpha) { return "alpha_" + metrics::format_alpha(alpha); }

std::string relative_to(const fs::path& p, const fs::path& base) {
  return p.lexically_relative(base).generic_string();
}

const ManifestEntry& find_probe(const std::vector<ManifestEntry>& test, const std::string& id) {
  if (id.empty()) return test.front();
  for (const auto& e : test) {
    if (e.id == id) return e;
  }
  throw DataError("sweep: probe clip '" + id + "' is not in the test split");
}

nlohmann::json history_json(const enhancer::TrainHistory& h) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : h.epochs) {
    // NaN is not valid JSON; an absent term is written as null.
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    out.push_back({{"epoch", e.epoch},
                   {"L", num(e.l)},
                   {"L_spec", num(e.l_spec)},
                   {"L_SQ", num(e.l_sq)},
                   {"val_predictor_score", num(e.val_predictor_score)}});
  }
  return out;
}

}  // namespace

std::vector<double> SweepConfig::full_grid() {
  std::vector<double> g;
  for (int i = 10; i >= 0; --i) g.push_back(i / 10.0);
  return g;
}

void SweepConfig::validate() const {
  std::set<double> seen;
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw UsageError(fmt::format("sweep: alpha {} outside [0, 1]", a));
    if (!seen.insert(a).second) throw UsageError(fmt::format("sweep: duplicate alpha {}", a));
  }
  if (epochs < 1) throw UsageError("sweep: epochs must be >= 1");
  if (stimuli_per_condition < 0) throw UsageError("sweep: stimuli_per_condition must be >= 0");
  auto t = train;
  t.epochs = epochs;
  t.validate();
}

void to_json(nlohmann::json& j, const SweepConfig& c) {
  j = {{"alphas", c.alphas},
       {"epochs", c.epochs},
       {"seed", c.seed},
       {"enhancement_manifest", c.enhancement_manifest.generic_string()},
       {"predictor_checkpoint", c.predictor_checkpoint.generic_string()},
       {"out_dir", c.out_dir.generic_string()},
       {"probe_id", c.probe_id},
       {"stimuli_per_condition", c.stimuli_per_condition},
       {"train", c.train}};
}

void from_json(const nlohmann::json& j, SweepConfig& c) {
  if (j.contains("alphas")) c.alphas = j["alphas"].get<std::vector<double>>();
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  if (j.contains("enhancement_manifest")) c.enhancement_manifest = j["enhancement_manifest"].get<std::string>();
  if (j.contains("predictor_checkpoint")) c.predictor_checkpoint = j["predictor_checkpoint"].get<std::string>();
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  c.probe_id = j.value("probe_id", c.probe_id);
  c.stimuli_per_condition = j.value("stimuli_per_condition", c.stimuli_per_condition);
  if (j.contains("train")) j["train"].get_to(c.train);
}

std::vector<metrics::MetricRow> RunReport::rows() const {
  std::vector<metrics::MetricRow> out{clean.row, noisy.row};
  for (const auto& r : runs) out.push_back(r.eval.row);
  return out;
}

std::uint64_t alpha_seed(std::uint64_t seed, double alpha) {
  return Rng::derive(seed, std::bit_cast<std::uint64_t>(alpha)).bits();
}

RunReport run_sweep(const SweepConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  // Every input is checked up front so a bad path never costs a training run.
  const Manifest manifest = load_manifest(cfg.enhancement_manifest);
  const auto predictor = predictor::PredictorModel::from_checkpoint(nn::load_checkpoint(cfg.predictor_checkpoint));
  const auto test = manifest.split(cfg.eval.split);
  if (test.empty()) throw DataError("sweep: split '" + cfg.eval.split + "' is empty");
  const auto train_split = manifest.split("train");
  if (train_split.empty()) throw DataError("sweep: split 'train' is empty");
  const bool needs_clean = std::any_of(cfg.alphas.begin(), cfg.alphas.end(), [](double a) { return a > 0.0; });
  for (const auto& e : train_split) {
    if (needs_clean && !e.clean_path) throw DataError("sweep: " + e.id + " has no clean reference");
  }
  const ManifestEntry& probe = find_probe(test, cfg.probe_id);
  if (!probe.clean_path) throw DataError("sweep: probe clip has no clean reference");
  make_dirs(cfg.out_dir);

  RunReport report;
  report.probe_id = probe.id;
  report.clean = metrics::evaluate_reference(metrics::Reference::kClean, predictor, manifest, cfg.eval);
  report.noisy = metrics::evaluate_reference(metrics::Reference::kNoisy, predictor, manifest, cfg.eval);

  const auto stft_cfg = cfg.train.model.stft;
  const auto probe_clean = dsp::read_wav(manifest.resolve(*probe.clean_path));
  const auto probe_noisy = dsp::read_wav(manifest.resolve(probe.wav_path));
  report.clean_png = cfg.out_dir / "probe_clean.png";
  report.noisy_png = cfg.out_dir / "probe_noisy.png";
  dsp::render_spectrogram(dsp::stft(probe_clean, stft_cfg), report.clean_png);
  dsp::render_spectrogram(dsp::stft(probe_noisy, stft_cfg), report.noisy_png);

  for (double alpha : cfg.alphas) {
    auto tc = cfg.train;
    tc.alpha = alpha;
    tc.epochs = cfg.epochs;
    const fs::path dir = cfg.out_dir / alpha_dir(alpha);
    make_dirs(dir);
    auto trained = enhancer::train_enhancer(manifest, predictor, tc, alpha_seed(cfg.seed, alpha),
                                            [&](const enhancer::EpochRecord& rec) {
                                              if (progress) progress(alpha, rec);
                                            });
    AlphaRun run;
    run.alpha = alpha;
    run.checkpoint = dir / "enhancer.ckpt";
    nn::save_checkpoint(run.checkpoint, trained.model.to_checkpoint());
    enhancer::write_history_csv(dir / "history.csv", trained.history);
    run.eval = metrics::evaluate_model(trained.model, alpha, predictor, manifest, cfg.eval);
    run.probe_png = dir / "probe.png";
    dsp::render_spectrogram(trained.model.enhance(probe_noisy).spec, run.probe_png);
    run.history = std::move(trained.history);
    report.runs.push_back(std::move(run));
  }
  return report;
}

void emit_report(const RunReport& report, const fs::path& out_dir) {
  make_dirs(out_dir);
  const auto rows = report.rows();
  metrics::write_table_csv(out_dir / "results.csv", rows);

  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : report.runs) {
    runs.push_back({{"alpha", r.alpha},
                    {"metrics", metrics::to_json(r.eval)},
                    {"history", history_json(r.history)},
                    {"checkpoint", relative_to(r.checkpoint, out_dir)},
                    {"probe_png", relative_to(r.probe_png, out_dir)}});
  }
  const nlohmann::json doc = {{"columns", {"alpha", "si_sdr", "stoi", "lsd", "predictor_score", "halluc_ratio"}},
                              {"probe_id", report.probe_id},
                              {"clean", metrics::to_json(report.clean)},
                              {"noisy", metrics::to_json(report.noisy)},
                              {"runs", runs}};
  write_text(out_dir / "results.json", doc.dump(2) + "\n");

  std::vector<dsp::Image> panels;
  if (!report.clean_png.empty()) panels.push_back(dsp::read_png(report.clean_png));
  if (!report.noisy_png.empty()) panels.push_back(dsp::read_png(report.noisy_png));
  for (const auto& r : report.runs) panels.push_back(dsp::read_png(r.probe_png));
  if (!panels.empty()) dsp::write_png(out_dir / "spectrogram_grid.png", dsp::stack_vertical(panels));

  std::string md = "# Alpha sweep\n\n";
  md += "Probe clip: `" + report.probe_id + "`. Spectrogram grid (top to bottom): clean, noisy";
  for (const auto& r : report.runs) md += ", alpha " + metrics::format_alpha(r.alpha);
  md += ".\n\n| alpha | si_sdr | stoi | lsd | predictor_score | halluc_ratio |\n|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    md += fmt::format("| {} | {:.2f} | {:.3f} | {:.2f} | {:.3f} | {:.4f} |\n", r.label, r.si_sdr, r.stoi, r.lsd,
                      r.predictor_score, r.halluc_ratio);
  }
  md += "\nHallucination density (flagged bins / bins) inside the leading pause vs. the rest:\n\n";
  md += "| alpha | pause | rest |\n|---|---|---|\n";
  for (const auto& r : report.runs) {
    md += fmt::format("| {} | {:.4f} | {:.4f} |\n", r.eval.row.label, r.eval.pause_density(), r.eval.rest_density());
  }
  md +=
      "\nNot reported: PESQ, CSIG, CBAK, COVL and the DNSMOS predictor columns. The "
      "predictor_score column is the internal quality predictor the enhancers were trained "
      "against, so it is not an independent quality estimate.\n";
  write_text(out_dir / "summary.md", md);
}

void export_stimuli(const SweepConfig& cfg, const RunReport& report) {
  const Manifest manifest = load_manifest(cfg.enhancement_manifest);
  auto test = manifest.split(cfg.eval.split);
  test.resize(std::min<std::size_t>(test.size(), static_cast<std::size_t>(cfg.stimuli_per_condition)));
  const fs::path root = cfg.out_dir / "stimuli";
  make_dirs(root);
  nlohmann::json list = nlohmann::json::array();
  make_dirs(root / "noisy");
  for (const auto& e : test) {
    const fs::path rel = fs::path("noisy") / (e.id + ".wav");
    dsp::write_wav(root / rel, dsp::read_wav(manifest.resolve(e.wav_path)));
    list.push_back({{"id", "noisy-" + e.id}, {"condition", "noisy"}, {"wav", rel.generic_string()}, {"clip", e.id}});
  }
  for (const auto& r : report.runs) {
    const auto model = enhancer::EnhancerModel::from_checkpoint(nn::load_checkpoint(r.checkpoint));
    const std::string dir = alpha_dir(r.alpha);
    make_dirs(root / dir);
    for (const auto& e : test) {
      const fs::path rel = fs::path(dir) / (e.id + ".wav");
      auto wave = model.enhance(dsp::read_wav(manifest.resolve(e.wav_path))).wave;
      // Keep playback safe: enhanced output may exceed full scale.
      double peak = 0.0;
      for (double v : wave.samples) peak = std::max(peak, std::abs(v));
      if (peak > 0.99) {
        for (double& v : wave.samples) v *= 0.99 / peak;
      }
      dsp::write_wav(root / rel, wave);
      list.push_back({{"id", dir + "-" + e.id},
                      {"condition", "alpha=" + metrics::format_alpha(r.alpha)},
                      {"wav", rel.generic_string()},
                      {"clip", e.id}});
    }
  }
  write_text(root / "stimuli.json", list.dump(2) + "\n");
}

}  // namespace hlab::sweep
