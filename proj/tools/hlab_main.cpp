// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// hlab command line: corpus generation, training, the alpha sweep, evaluation
// and the rating server. Exit codes: 0 ok, 1 usage, 2 data/IO, 3 numerical.

#include <malloc.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "hlab/common/error.hpp"
#include "hlab/dsp/render.hpp"
#include "hlab/dsp/wav_io.hpp"
#include "hlab/metrics/evaluate.hpp"
#include "hlab/predictor/train.hpp"
#include "hlab/rating/service.hpp"
#include "hlab/sweep/sweep.hpp"
#include "hlab/synth/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hlab;

namespace {

// Config file sections, all optional:
//   corpus    -> CorpusCounts          predictor -> PredictorConfig
//   enhancer  -> TrainConfig           sweep     -> alphas, epochs, probe_id, ...
//   serve     -> host, port, ui_dir
struct Globals {
  fs::path config;
  std::uint64_t seed = 1;
  fs::path out = "out";
  json cfg = json::object();

  json section(const char* name) const { return cfg.contains(name) ? cfg[name] : json::object(); }
};

synth::CorpusCounts corpus_counts(const json& j) {
  synth::CorpusCounts c;
  c.predictor_train = j.value("predictor_train", c.predictor_train);
  c.predictor_valid = j.value("predictor_valid", c.predictor_valid);
  c.predictor_test = j.value("predictor_test", c.predictor_test);
  c.enhancement_train = j.value("enhancement_train", c.enhancement_train);
  c.enhancement_valid = j.value("enhancement_valid", c.enhancement_valid);
  c.enhancement_test = j.value("enhancement_test", c.enhancement_test);
  c.duration = j.value("duration", c.duration);
  return c;
}

fs::path predictor_manifest(const fs::path& data) { return data / "predictor" / "manifest.json"; }
fs::path enhancement_manifest(const fs::path& data) { return data / "enhancement" / "manifest.json"; }

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os || !(os << text) || !os.flush()) throw IoError("cannot write " + path.string());
}

predictor::PredictorModel load_predictor(const fs::path& p) {
  return predictor::PredictorModel::from_checkpoint(nn::load_checkpoint(p));
}

int cmd_gen_data(const Globals& g) {
  const auto paths = synth::build_corpus(g.out, corpus_counts(g.section("corpus")), g.seed);
  fmt::print("{}\n{}\n", paths.predictor_manifest.string(), paths.enhancement_manifest.string());
  return 0;
}

int cmd_train_predictor(const Globals& g, const fs::path& data) {
  auto cfg = g.section("predictor").get<predictor::PredictorConfig>();
  const auto manifest = load_manifest(predictor_manifest(data));
  make_dirs(g.out);
  auto trained = predictor::train_predictor(manifest, cfg, g.seed, [](const predictor::PredictorEpoch& e) {
    fmt::print(stderr, "epoch {:3d}  train {:.5f}  valid {:.5f}\n", e.epoch, e.train_loss, e.val_loss);
  });
  trained.model.freeze();
  nn::save_checkpoint(g.out / "predictor.ckpt", trained.model.to_checkpoint());
  predictor::write_history_csv(g.out / "history.csv", trained.history);
  const auto eval = predictor::evaluate_predictor(trained.model, manifest, "test");
  predictor::write_evaluation_csv(g.out / "evaluation.csv", eval);
  fmt::print("best epoch {}  test spearman {:.4f}  rmse {:.4f}\n", trained.history.best_epoch,
             eval.mean.spearman_r, eval.mean.rmse);
  return 0;
}

int cmd_train_se(const Globals& g, const fs::path& data, const fs::path& pred, double alpha) {
  auto cfg = g.section("enhancer").get<enhancer::TrainConfig>();
  cfg.alpha = alpha;
  const auto manifest = load_manifest(enhancement_manifest(data));
  const auto predictor = load_predictor(pred);
  make_dirs(g.out);
  const auto trained = enhancer::train_enhancer(manifest, predictor, cfg, sweep::alpha_seed(g.seed, alpha),
                                                [](const enhancer::EpochRecord& e) {
                                                  fmt::print(stderr, "epoch {:3d}  L {:.5f}  val score {:.4f}\n",
                                                             e.epoch, e.l, e.val_predictor_score);
                                                });
  nn::save_checkpoint(g.out / "enhancer.ckpt", trained.model.to_checkpoint());
  enhancer::write_history_csv(g.out / "history.csv", trained.history);
  return 0;
}

sweep::SweepConfig sweep_config(const Globals& g, const fs::path& data, const fs::path& pred) {
  sweep::SweepConfig cfg = g.section("sweep").get<sweep::SweepConfig>();
  if (g.cfg.contains("enhancer")) g.cfg["enhancer"].get_to(cfg.train);
  cfg.seed = g.seed;
  cfg.enhancement_manifest = enhancement_manifest(data);
  cfg.predictor_checkpoint = pred;
  cfg.out_dir = g.out;
  return cfg;
}

int cmd_sweep(const Globals& g, const fs::path& data, const fs::path& pred, bool full_grid,
              const std::vector<double>& alphas, int epochs) {
  auto cfg = sweep_config(g, data, pred);
  if (full_grid) cfg.alphas = sweep::SweepConfig::full_grid();
  if (!alphas.empty()) cfg.alphas = alphas;
  if (epochs > 0) cfg.epochs = epochs;
  const auto report = sweep::run_sweep(cfg, [](double a, const enhancer::EpochRecord& e) {
    fmt::print(stderr, "alpha {:.2f}  epoch {:3d}  L {:.5f}  val score {:.4f}\n", a, e.epoch, e.l,
               e.val_predictor_score);
  });
  sweep::emit_report(report, cfg.out_dir);
  sweep::export_stimuli(cfg, report);
  std::cout << metrics::table_csv(report.rows());
  return 0;
}

int cmd_eval(const Globals& g, const fs::path& data, const fs::path& pred, const fs::path& model_path,
             double alpha) {
  const auto manifest = load_manifest(enhancement_manifest(data));
  const auto predictor = load_predictor(pred);
  const auto model = enhancer::EnhancerModel::from_checkpoint(nn::load_checkpoint(model_path));
  const auto clean = metrics::evaluate_reference(metrics::Reference::kClean, predictor, manifest);
  const auto noisy = metrics::evaluate_reference(metrics::Reference::kNoisy, predictor, manifest);
  const auto ev = metrics::evaluate_model(model, alpha, predictor, manifest);
  make_dirs(g.out);
  const std::vector<metrics::MetricRow> rows{clean.row, noisy.row, ev.row};
  metrics::write_table_csv(g.out / "results.csv", rows);
  const json doc = {{"clean", metrics::to_json(clean)}, {"noisy", metrics::to_json(noisy)}, {"model", metrics::to_json(ev)}};
  write_text(g.out / "results.json", doc.dump(2) + "\n");
  std::cout << metrics::table_csv(rows);
  return 0;
}

int cmd_spectrogram(const Globals& g, const fs::path& wav, const fs::path& model_path) {
  auto wave = dsp::read_wav(wav);
  fs::path out = g.out;
  if (out.extension() != ".png") {
    make_dirs(out);
    out /= wav.stem().string() + ".png";
  }
  if (model_path.empty()) {
    dsp::render_spectrogram(dsp::stft(wave), out);
  } else {
    const auto model = enhancer::EnhancerModel::from_checkpoint(nn::load_checkpoint(model_path));
    dsp::render_spectrogram(model.enhance(wave).spec, out);
  }
  fmt::print("{}\n", out.string());
  return 0;
}

// Markdown table of one or more sweep result directories.
int cmd_report(const Globals& g, const std::vector<fs::path>& runs) {
  std::string md = "| run | alpha | si_sdr | stoi | lsd | predictor_score | halluc_ratio |\n|---|---|---|---|---|---|---|\n";
  for (const auto& run : runs) {
    std::ifstream is(run / "results.csv");
    if (!is) throw IoError("cannot read " + (run / "results.csv").string());
    std::string line;
    std::getline(is, line);
    if (line != "alpha,si_sdr,stoi,lsd,predictor_score,halluc_ratio") {
      throw DataError((run / "results.csv").string() + ": unexpected header");
    }
    while (std::getline(is, line)) {
      std::string cell, row = "| " + run.filename().string();
      std::istringstream ls(line);
      while (std::getline(ls, cell, ',')) row += " | " + cell;
      md += row + " |\n";
    }
  }
  if (g.out.extension() == ".md") write_text(g.out, md);
  std::cout << md;
  return 0;
}

int cmd_serve(const Globals& g, const fs::path& stimuli, int port, const fs::path& ui) {
  const auto s = g.section("serve");
  rating::ServeConfig cfg;
  cfg.host = s.value("host", cfg.host);
  cfg.port = port > 0 ? port : s.value("port", cfg.port);
  cfg.stimuli_dir = stimuli;
  cfg.ui_dir = !ui.empty() ? ui : fs::path(s.value("ui_dir", std::string()));
  cfg.ratings_log = g.out / "ratings.jsonl";
  cfg.seed = g.seed;
  rating::serve(cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // The training loop allocates and frees many mid-sized tensors; keeping
  // them on the heap instead of mmap/munmap saves about a tenth of the time.
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"hlab: speech enhancement against a learned quality predictor"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON config with corpus/predictor/enhancer/sweep/serve sections")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--out", g.out, "output directory (or file where noted)");

  fs::path data = "data", pred, model_path, wav, stimuli, ui;
  double alpha = 1.0;
  bool full_grid = false;
  std::vector<double> alphas;
  int epochs = 0, port = 0;
  std::vector<fs::path> runs;

  auto* gen = app.add_subcommand("gen-data", "write the synthetic predictor and enhancement corpora");
  auto* tp = app.add_subcommand("train-predictor", "train the quality predictor");
  tp->add_option("--data", data, "corpus root written by gen-data");
  auto* tse = app.add_subcommand("train-se", "train one enhancer");
  tse->add_option("--data", data, "corpus root");
  tse->add_option("--predictor", pred, "frozen predictor checkpoint")->required();
  tse->add_option("--alpha", alpha, "weight of the spectral loss")->required()->check(CLI::Range(0.0, 1.0));
  auto* sw = app.add_subcommand("sweep", "train and evaluate one enhancer per alpha");
  sw->add_option("--data", data, "corpus root");
  sw->add_option("--predictor", pred, "frozen predictor checkpoint")->required();
  sw->add_flag("--full-grid", full_grid, "alphas 1.0, 0.9, ..., 0.0");
  sw->add_option("--alphas", alphas, "explicit alpha list")->delimiter(',');
  sw->add_option("--epochs", epochs, "epochs per alpha");
  auto* ev = app.add_subcommand("eval", "score an enhancer on the test split");
  ev->add_option("--data", data, "corpus root");
  ev->add_option("--predictor", pred, "frozen predictor checkpoint")->required();
  ev->add_option("--model", model_path, "enhancer checkpoint")->required();
  ev->add_option("--alpha", alpha, "label for the model row");
  auto* sp = app.add_subcommand("spectrogram", "render a WAV (optionally enhanced) as PNG");
  sp->add_option("--in", wav, "input WAV")->required()->check(CLI::ExistingFile);
  sp->add_option("--model", model_path, "enhancer checkpoint");
  auto* rep = app.add_subcommand("report", "markdown table from sweep output directories");
  rep->add_option("runs", runs, "sweep output directories")->required();
  auto* sv = app.add_subcommand("serve", "run the listening-test server");
  sv->add_option("--stimuli", stimuli, "directory with stimuli.json")->required();
  sv->add_option("--port", port, "TCP port");
  sv->add_option("--ui", ui, "static rating UI directory served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (!g.config.empty()) {
      std::ifstream is(g.config);
      g.cfg = json::parse(is);
      if (!g.cfg.is_object()) throw UsageError("config must be a JSON object");
    }
    if (*gen) return cmd_gen_data(g);
    if (*tp) return cmd_train_predictor(g, data);
    if (*tse) return cmd_train_se(g, data, pred, alpha);
    if (*sw) return cmd_sweep(g, data, pred, full_grid, alphas, epochs);
    if (*ev) return cmd_eval(g, data, pred, model_path, alpha);
    if (*sp) return cmd_spectrogram(g, wav, model_path);
    if (*rep) return cmd_report(g, runs);
    if (*sv) return cmd_serve(g, stimuli, port, ui);
  } catch (const NumericalError& e) {
    fmt::print(stderr, "numerical error: {}\n", e.what());
    return 3;
  } catch (const UsageError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return 1;
}
