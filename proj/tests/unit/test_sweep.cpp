// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hlab/common/error.hpp"
#include "hlab/dsp/render.hpp"
#include "hlab/dsp/wav_io.hpp"
#include "hlab/sweep/sweep.hpp"
#include "hlab/synth/synth.hpp"

using namespace hlab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

predictor::PredictorModel tiny_predictor() {
  predictor::PredictorConfig cfg;
  cfg.n_mels = 8;
  cfg.width = 8;
  cfg.ffn = 8;
  cfg.layers = 1;
  predictor::PredictorModel p(cfg, 3);
  p.freeze();
  return p;
}

// Small corpus plus a saved predictor, shared by the sweep cases.
struct Fixture {
  fs::path root = fs::temp_directory_path() / "hlab_sweep_test";
  sweep::SweepConfig cfg;

  Fixture() {
    fs::remove_all(root);
    const auto paths = synth::build_corpus(root / "data", synth::CorpusCounts{2, 1, 1, 2, 1, 2, 1.5}, 11);
    nn::save_checkpoint(root / "pred.ckpt", tiny_predictor().to_checkpoint());
    cfg.enhancement_manifest = paths.enhancement_manifest;
    cfg.predictor_checkpoint = root / "pred.ckpt";
    cfg.epochs = 1;
    cfg.seed = 5;
    cfg.train.model.channels = 2;
    cfg.train.model.blocks = 1;
    cfg.train.model.heads = 1;
    cfg.train.crop_seconds = 0.5;
    cfg.train.batch_size = 2;
    cfg.stimuli_per_condition = 1;
  }
  ~Fixture() { fs::remove_all(root); }
};

}  // namespace

TEST_CASE("config validation") {
  sweep::SweepConfig c;
  CHECK(c.alphas == std::vector<double>{1.0, 0.5, 0.0});
  const auto grid = sweep::SweepConfig::full_grid();
  REQUIRE(grid.size() == 11);
  CHECK(grid.front() == 1.0);
  CHECK(grid[3] == 0.7);
  CHECK(grid.back() == 0.0);
  c.alphas = {0.5, 0.5};
  CHECK_THROWS_AS(c.validate(), UsageError);
  c.alphas = {1.5};
  CHECK_THROWS_AS(c.validate(), UsageError);
  c.alphas = {};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);

  c.epochs = 4;
  c.alphas = {0.25, 0.0};
  nlohmann::json j = c;
  sweep::SweepConfig back = j.get<sweep::SweepConfig>();
  CHECK(back.alphas == c.alphas);
  CHECK(back.epochs == 4);
  CHECK(sweep::alpha_seed(1, 0.5) == sweep::alpha_seed(1, 0.5));
  CHECK(sweep::alpha_seed(1, 0.5) != sweep::alpha_seed(1, 0.0));
  CHECK(sweep::alpha_seed(1, 0.5) != sweep::alpha_seed(2, 0.5));
}

TEST_CASE("noisy row at 0 dB white noise has si_sdr near zero") {
  // Without a leading pause the SNR and SI-SDR of the mixture coincide up to
  // the small correlation between speech and noise.
  const fs::path root = fs::temp_directory_path() / "hlab_eval_test";
  fs::remove_all(root);
  fs::create_directories(root);
  Manifest m;
  m.root = root;
  for (int i = 0; i < 4; ++i) {
    synth::ClipSpec spec;
    spec.seed = 100 + i;
    spec.leading_pause = 0.0;
    const auto clean = synth::synth_clean(spec);
    const auto noisy = synth::mix_at_snr(clean, {synth::NoiseKind::kWhite, 0.0, {}, {}}, 200 + i);
    const std::string id = "c" + std::to_string(i);
    dsp::write_wav(root / (id + "_clean.wav"), clean);
    dsp::write_wav(root / (id + "_noisy.wav"), noisy);
    m.entries.push_back({id, id + "_noisy.wav", id + "_clean.wav", {}, "test", "t", "white", 0.0});
  }
  const auto pred = tiny_predictor();
  const auto noisy = metrics::evaluate_reference(metrics::Reference::kNoisy, pred, m);
  CHECK(std::abs(noisy.row.si_sdr) <= 0.5);
  CHECK(noisy.files.size() == 4);
  const auto clean = metrics::evaluate_reference(metrics::Reference::kClean, pred, m);
  CHECK(clean.row.si_sdr == 100.0);
  CHECK(clean.row.stoi == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(clean.row.lsd == 0.0);
  CHECK(clean.row.halluc_ratio == 0.0);
  CHECK(clean.row.label == "clean");
  fs::remove_all(root);
}

TEST_CASE("table csv layout") {
  metrics::MetricRow a{"clean", {}, 100, 1, 0, 0.9, 0};
  metrics::MetricRow b{"0.50", 0.5, -1.5, 0.5, 3.25, 0.7, 0.125};
  CHECK(metrics::table_csv({}) == "alpha,si_sdr,stoi,lsd,predictor_score,halluc_ratio\n");
  CHECK(metrics::table_csv({a, b}) ==
        "alpha,si_sdr,stoi,lsd,predictor_score,halluc_ratio\n"
        "clean,100.0000,1.0000,0.0000,0.9000,0.000000\n"
        "0.50,-1.5000,0.5000,3.2500,0.7000,0.125000\n");
}

TEST_CASE("sweep runs, reports and is deterministic") {
  Fixture fx;
  fx.cfg.alphas = {1.0};
  fx.cfg.out_dir = fx.root / "run1";
  const auto r1 = sweep::run_sweep(fx.cfg);
  REQUIRE(r1.rows().size() == 3);
  CHECK(r1.rows()[0].label == "clean");
  CHECK(r1.rows()[1].label == "noisy");
  CHECK(r1.rows()[2].label == "1.00");
  CHECK(r1.runs[0].history.epochs.size() == 1);
  sweep::emit_report(r1, fx.cfg.out_dir);

  const auto csv = slurp(fx.cfg.out_dir / "results.csv");
  CHECK(csv.rfind("alpha,si_sdr,stoi,lsd,predictor_score,halluc_ratio\nclean,", 0) == 0);
  const auto summary = slurp(fx.cfg.out_dir / "summary.md");
  for (const char* col : {"PESQ", "CSIG", "CBAK", "COVL", "DNSMOS"}) CHECK(summary.find(col) != std::string::npos);
  const auto json = nlohmann::json::parse(slurp(fx.cfg.out_dir / "results.json"));
  CHECK(json["runs"].size() == 1);
  CHECK(json["probe_id"] == r1.probe_id);

  // Grid height: three panels of one probe spectrogram each plus two gaps.
  const auto panel = dsp::read_png(r1.clean_png);
  const auto grid = dsp::read_png(fx.cfg.out_dir / "spectrogram_grid.png");
  CHECK(grid.height == 3 * panel.height + 2 * 4);

  fx.cfg.out_dir = fx.root / "run2";
  const auto r2 = sweep::run_sweep(fx.cfg);
  sweep::emit_report(r2, fx.cfg.out_dir);
  CHECK(slurp(fx.root / "run2" / "results.csv") == csv);
  CHECK(slurp(fx.root / "run2" / "results.json").size() > 0);
  CHECK(slurp(r2.clean_png) == slurp(r1.clean_png));

  // The noisy baseline does not depend on which alphas are swept.
  fx.cfg.alphas = {0.0};
  fx.cfg.out_dir = fx.root / "run3";
  const auto r3 = sweep::run_sweep(fx.cfg);
  CHECK(r3.noisy.row.si_sdr == r1.noisy.row.si_sdr);
  CHECK(r3.noisy.row.predictor_score == r1.noisy.row.predictor_score);
  CHECK(r3.probe_id == r1.probe_id);

  sweep::export_stimuli(fx.cfg, r3);
  const auto stim = nlohmann::json::parse(slurp(fx.cfg.out_dir / "stimuli" / "stimuli.json"));
  REQUIRE(stim.size() == 2);
  CHECK(stim[0]["condition"] == "noisy");
  CHECK(stim[1]["condition"] == "alpha=0.00");
  CHECK(fs::exists(fx.cfg.out_dir / "stimuli" / stim[1]["wav"].get<std::string>()));
}

TEST_CASE("empty alpha list reports only baselines") {
  Fixture fx;
  fx.cfg.alphas = {};
  fx.cfg.out_dir = fx.root / "empty";
  const auto r = sweep::run_sweep(fx.cfg);
  sweep::emit_report(r, fx.cfg.out_dir);
  std::istringstream csv(slurp(fx.cfg.out_dir / "results.csv"));
  std::vector<std::string> lines;
  for (std::string line; std::getline(csv, line);) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[1].rfind("clean,", 0) == 0);
  CHECK(lines[2].rfind("noisy,", 0) == 0);
  const auto panel = dsp::read_png(r.clean_png);
  CHECK(dsp::read_png(fx.cfg.out_dir / "spectrogram_grid.png").height == 2 * panel.height + 4);
}

TEST_CASE("missing inputs fail before training") {
  Fixture fx;
  fx.cfg.out_dir = fx.root / "bad";
  auto cfg = fx.cfg;
  cfg.predictor_checkpoint = fx.root / "nope.ckpt";
  CHECK_THROWS_AS(sweep::run_sweep(cfg), DataError);
  cfg = fx.cfg;
  cfg.enhancement_manifest = fx.root / "nope.json";
  CHECK_THROWS_AS(sweep::run_sweep(cfg), DataError);
  cfg = fx.cfg;
  cfg.probe_id = "no-such-clip";
  CHECK_THROWS_AS(sweep::run_sweep(cfg), DataError);
  CHECK_FALSE(fs::exists(fx.cfg.out_dir));
}
