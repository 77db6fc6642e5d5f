// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.
//
//   hlab_acceptance <path-to-hlab-cli> [--work DIR] [--only a,b,...]
//
// The learnability, trend, loss-identity and locus criteria share one
// predictor and one toy sweep, computed on first use.

#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "hlab/common/random.hpp"
#include "hlab/common/stats.hpp"
#include "hlab/dsp/stft.hpp"
#include "hlab/dsp/wav_io.hpp"
#include "hlab/enhancer/train.hpp"
#include "hlab/metrics/metrics.hpp"
#include "hlab/nn/grad_check.hpp"
#include "hlab/nn/ops.hpp"
#include "hlab/nn/signal.hpp"
#include "hlab/predictor/train.hpp"
#include "hlab/rating/service.hpp"
#include "hlab/sweep/sweep.hpp"
#include "hlab/synth/synth.hpp"

namespace fs = std::filesystem;
using namespace hlab;
using nlohmann::json;
using nn::Tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Process CPU seconds.
double cpu_now() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::vector<double> gaussian(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = scale * rng.normal();
  return x;
}

Tensor random_tensor(nn::Shape shape, Rng& rng, bool grad) {
  std::vector<double> v(nn::numel(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return grad ? Tensor::parameter(std::move(shape), std::move(v)) : Tensor::constant(std::move(shape), std::move(v));
}

Tensor weighted_sum(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  return nn::sum(nn::mul(y, random_tensor(y.shape(), rng, false)));
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

Outcome gradient_fidelity() {
  const double t0 = cpu_now();
  nn::GradCheckOptions opts;  // central differences, h = 1e-5, tolerance 1e-4
  std::vector<std::pair<std::string, nn::GradCheckReport>> reports;
  auto check = [&](const std::string& name, const std::function<Tensor()>& loss, const nn::NamedParams& ps,
                   const nn::GradCheckOptions& o) { reports.emplace_back(name, nn::grad_check(loss, ps, o)); };

  Rng rng(1);
  {
    nn::Linear lin(3, 4, rng);
    auto x = random_tensor({2, 5, 3}, rng, true);
    nn::NamedParams ps{{"x", x}};
    lin.collect("dense", ps);
    check("dense", [&] { return weighted_sum(lin(x)); }, ps, opts);
  }
  for (int dilation : {1, 2, 4, 8}) {
    nn::Conv1d conv(3, 2, 3, dilation, rng);
    auto x = random_tensor({2, 9, 3}, rng, true);
    nn::NamedParams ps{{"x", x}};
    conv.collect("conv", ps);
    check(fmt::format("conv1d(d={})", dilation), [&] { return weighted_sum(conv(x)); }, ps, opts);
  }
  {
    nn::LayerNorm ln(5);
    nn::PRelu pr(5);
    auto x = random_tensor({3, 5}, rng, true);
    nn::NamedParams ps{{"x", x}};
    ln.collect("ln", ps);
    pr.collect("prelu", ps);
    for (auto& [n, p] : ps) {
      for (auto& v : p.mutable_values()) v += rng.uniform(-0.3, 0.3);
    }
    check("layernorm+prelu", [&] { return weighted_sum(pr(ln(x))); }, ps, opts);
  }
  {
    nn::Gru gru(3, 4, rng);
    auto x = random_tensor({2, 5, 3}, rng, true);
    nn::NamedParams ps{{"x", x}};
    gru.collect("gru", ps);
    check("gru", [&] { return weighted_sum(gru(x)); }, ps, opts);
  }
  {
    nn::MultiHeadAttention mha(8, 2, rng);
    auto x = random_tensor({1, 6, 8}, rng, true);
    nn::NamedParams ps{{"x", x}};
    mha.collect("mha", ps);
    check("attention", [&] { return weighted_sum(mha(x)); }, ps, opts);
  }
  for (bool recurrent : {false, true}) {
    nn::TransformerLayer layer(4, 2, 4, recurrent, rng);
    auto x = random_tensor({2, 4, 4}, rng, true);
    nn::NamedParams ps{{"x", x}};
    layer.collect("tf", ps);
    check(recurrent ? "transformer(gru-ffn)" : "transformer", [&] { return weighted_sum(layer(x)); }, ps, opts);
  }
  {
    auto a = random_tensor({3, 4}, rng, true);
    auto b = random_tensor({3, 4}, rng, true);
    nn::NamedParams ps{{"a", a}, {"b", b}};
    check(
        "elementwise",
        [&] {
          auto h = nn::add(nn::mul(a, b), nn::sub(nn::tanh(a), nn::sigmoid(b)));
          h = nn::add(h, nn::log(nn::add_scalar(nn::square(a), 1.0)));
          return nn::add(weighted_sum(nn::softmax_last(h)), nn::mean(nn::square(nn::exp(nn::scale(b, 0.5)))));
        },
        ps, opts);
  }
  {
    auto a = random_tensor({3, 4, 2}, rng, true);
    auto b = random_tensor({3, 4, 2}, rng, true);
    nn::NamedParams ps{{"a", a}, {"b", b}};
    check("complex", [&] { return nn::add(weighted_sum(nn::complex_mul(a, b)), weighted_sum(nn::complex_power(a), 3)); },
          ps, opts);
  }
  {
    const dsp::StftConfig cfg{16, 8, dsp::WindowKind::kHann};
    auto x = random_tensor({48}, rng, true);
    nn::NamedParams ps{{"x", x}};
    check("stft", [&] { return weighted_sum(nn::stft(x, cfg)); }, ps, opts);
    auto s = random_tensor({5, 9, 2}, rng, true);
    nn::NamedParams ps2{{"s", s}};
    check("istft", [&] { return weighted_sum(nn::istft(s, cfg)); }, ps2, opts);
  }
  {
    predictor::PredictorConfig pc;
    pc.n_mels = 4;
    pc.width = 4;
    pc.ffn = 4;
    pc.layers = 1;
    pc.stft = dsp::StftConfig{32, 16};
    predictor::PredictorModel pred(pc, 3);
    const auto wave = Tensor::constant({128}, gaussian(128, 4, 0.3));
    check("predictor", [&] { return predictor::predictor_loss(pred.score(wave), 0.7); }, pred.parameters(), opts);
  }

  // Full enhancer + joint loss chain, both strides and spec-loss variants.
  auto chain_opts = opts;
  chain_opts.max_entries_per_param = 6;
  for (int stride : {1, 2}) {
    for (auto variant : {enhancer::SpecLossVariant::kAsPrinted, enhancer::SpecLossVariant::kSumOfAbs}) {
      enhancer::EnhancerConfig cfg;
      cfg.channels = 2;
      cfg.blocks = 1;
      cfg.heads = 1;
      cfg.freq_stride = stride;
      cfg.stft = dsp::StftConfig{32, 16};
      predictor::PredictorConfig pc;
      pc.n_mels = 4;
      pc.width = 4;
      pc.ffn = 4;
      pc.layers = 1;
      pc.stft = cfg.stft;
      predictor::PredictorModel pred(pc, 8);
      pred.freeze();
      const auto wave = Tensor::constant({96}, gaussian(96, 4, 0.3));
      const auto clean = nn::stft(Tensor::constant({96}, gaussian(96, 5, 0.3)), cfg.stft);
      // The zero-initialised output head would zero all upstream gradients,
      // so the weights are perturbed; perturbations that leave a spectrum
      // entry within 1e-4 of an abs() kink are skipped.
      for (std::uint64_t seed = 21;; ++seed) {
        enhancer::EnhancerModel m(cfg, 7);
        Rng jitter(seed);
        for (auto& [n, p] : m.parameters()) {
          for (auto& v : p.mutable_values()) v += jitter.uniform(-0.2, 0.2);
        }
        const auto out = m.forward(wave);
        const auto est = out.spec.values();
        const auto ref = clean.values();
        double margin = 1.0;
        for (std::size_t i = 0; i < est.size(); ++i) {
          margin = std::min({margin, std::abs(est[i]), std::abs(std::abs(est[i]) - std::abs(ref[i]))});
          if (variant == enhancer::SpecLossVariant::kAsPrinted && i % 2 == 1) {
            margin = std::min(margin, std::abs(std::abs(ref[i - 1]) - std::abs(est[i - 1]) + std::abs(ref[i]) -
                                               std::abs(est[i])));
          }
        }
        if (margin <= 1e-4) continue;
        check(fmt::format("enhancer chain (stride {}, {})", stride, enhancer::to_string(variant)),
              [&] {
                const auto o = m.forward(wave);
                return enhancer::joint_loss(0.5, enhancer::spec_loss(clean, o.spec, variant),
                                            enhancer::sq_loss(pred, o.wave));
              },
              m.parameters(), chain_opts);
        break;
      }
    }
  }

  const double secs = cpu_now() - t0;
  bool ok = secs < 120.0;
  double worst = 0.0;
  std::string worst_name, failures;
  for (const auto& [name, r] : reports) {
    ok = ok && r.passed;
    if (!r.passed) failures += " " + name + ": " + r.summary() + ";";
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = name;
    }
  }
  return {ok, fmt::format("{} checks, worst rel err {:.3g} ({}), {:.1f} s (limit 120){}", reports.size(), worst,
                          worst_name, secs, failures)};
}

Outcome stft_correctness() {
  const double t0 = cpu_now();
  // Naive DFT oracle on 64-sample Hann frames.
  const dsp::StftConfig cfg{64, 32, dsp::WindowKind::kHann};
  const auto x = gaussian(64 * 8, 11);
  const dsp::Waveform wave(x, 16000);
  const auto spec = dsp::stft(wave, cfg);
  const auto w = dsp::analysis_window(cfg);
  double dft_err = 0.0;
  for (int t = 0; t < spec.frames; ++t) {
    for (int k = 0; k < spec.bins; ++k) {
      double re = 0.0, im = 0.0;
      for (int n = 0; n < 64; ++n) {
        const double v = x[static_cast<std::size_t>(t) * 32 + n] * w[n];
        const double ph = -2.0 * std::numbers::pi * k * n / 64.0;
        re += v * std::cos(ph);
        im += v * std::sin(ph);
      }
      dft_err = std::max({dft_err, std::abs(re - spec.real[spec.index(t, k)]),
                          std::abs(im - spec.imag[spec.index(t, k)])});
    }
  }
  // Round trip of 1 s white noise, excluding the first and last window.
  const dsp::Waveform noise(gaussian(16000, 12, 0.3), 16000);
  const auto back = dsp::istft(dsp::stft(noise));
  const std::size_t win = 512;
  double es = 0.0, ee = 0.0;
  for (std::size_t i = win; i + win < back.size(); ++i) {
    es += noise.samples[i] * noise.samples[i];
    const double d = noise.samples[i] - back.samples[i];
    ee += d * d;
  }
  const double snr = ee > 0.0 ? 10.0 * std::log10(es / ee) : 400.0;
  const double secs = cpu_now() - t0;
  return {dft_err <= 1e-9 && snr >= 60.0 && secs < 5.0,
          fmt::format("max |DFT diff| {:.2e} (limit 1e-9), round-trip SNR {:.1f} dB (limit 60), {:.2f} s", dft_err, snr,
                      secs)};
}

Outcome spec_loss_cancellation() {
  const auto s = Tensor::constant({1, 1, 2}, {1.0, 1.0});
  const auto e = Tensor::constant({1, 1, 2}, {0.5, 1.5});
  const double printed = enhancer::spec_loss(s, e, enhancer::SpecLossVariant::kAsPrinted).item();
  const double sum_abs = enhancer::spec_loss(s, e, enhancer::SpecLossVariant::kSumOfAbs).item();
  return {printed == 0.0 && sum_abs == 1.0, fmt::format("as-printed {} (want 0), sum-of-abs {} (want 1)", printed, sum_abs)};
}

Outcome metric_oracles() {
  synth::ClipSpec spec;
  spec.seed = 77;
  const auto s = synth::synth_clean(spec);
  const auto noise = gaussian(s.size(), 78, 0.05);
  std::vector<double> est(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) est[i] = s.samples[i] + noise[i];
  const dsp::Waveform e(est, s.sample_rate);

  const double base = metrics::si_sdr(e, s);
  double scale_dev = 0.0;
  for (double k : {0.01, 0.5, 3.0, 100.0}) {
    std::vector<double> scaled(est);
    for (auto& v : scaled) v *= k;
    scale_dev = std::max(scale_dev, std::abs(metrics::si_sdr(dsp::Waveform(scaled, s.sample_rate), s) - base));
  }

  // Noise made exactly orthogonal to s: SI-SDR is then 10 log10(Es / Ee).
  double dot = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    dot += noise[i] * s.samples[i];
    ss += s.samples[i] * s.samples[i];
  }
  std::vector<double> orth(s.size()), mixed(s.size());
  double ee = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    orth[i] = noise[i] - dot / ss * s.samples[i];
    mixed[i] = s.samples[i] + orth[i];
    ee += orth[i] * orth[i];
  }
  const double orth_err = std::abs(metrics::si_sdr(dsp::Waveform(mixed, s.sample_rate), s) - 10.0 * std::log10(ss / ee));

  const double self = metrics::stoi(s, s);
  std::vector<double> grid;
  for (double snr : {-10.0, 0.0, 10.0, 20.0}) {
    const auto x = synth::mix_at_snr(s, {synth::NoiseKind::kWhite, snr, {}, {}}, 79);
    grid.push_back(metrics::stoi(x, s));
  }
  const bool increasing = std::is_sorted(grid.begin(), grid.end(), std::less_equal<>()) &&
                          std::adjacent_find(grid.begin(), grid.end()) == grid.end();
  const bool ok = scale_dev <= 1e-6 && orth_err <= 1e-6 && std::abs(self - 1.0) <= 1e-6 && increasing;
  return {ok, fmt::format("si_sdr scale dev {:.2e}, orthogonal err {:.2e}, stoi(s,s)-1 {:.2e}, stoi over "
                          "-10/0/10/20 dB = {:.4f} {:.4f} {:.4f} {:.4f}",
                          scale_dev, orth_err, self - 1.0, grid[0], grid[1], grid[2], grid[3])};
}

// ---------------------------------------------------------------------------
// Shared experiment: predictor on the default synthetic corpus, then the toy
// alpha sweep against it.

struct Experiment {
  fs::path work;
  std::optional<synth::CorpusPaths> corpus;
  std::optional<predictor::PredictorModel> predictor;
  fs::path predictor_ckpt;
  double predictor_seconds = 0.0;
  std::optional<sweep::RunReport> sweep;
  double sweep_seconds = 0.0;

  void ensure_predictor() {
    if (predictor) return;
    const double t0 = cpu_now();
    corpus = synth::build_corpus(work / "data", synth::CorpusCounts{}, 2026);
    auto trained = predictor::train_predictor(load_manifest(corpus->predictor_manifest), predictor::PredictorConfig{}, 1);
    trained.model.freeze();
    predictor_ckpt = work / "predictor.ckpt";
    nn::save_checkpoint(predictor_ckpt, trained.model.to_checkpoint());
    predictor.emplace(std::move(trained.model));
    predictor_seconds = cpu_now() - t0;
  }

  void ensure_sweep() {
    if (sweep) return;
    ensure_predictor();
    sweep::SweepConfig cfg;
    cfg.alphas = {1.0, 0.5, 0.0};
    cfg.epochs = 30;
    cfg.seed = 1;
    cfg.enhancement_manifest = corpus->enhancement_manifest;
    cfg.predictor_checkpoint = predictor_ckpt;
    cfg.out_dir = work / "sweep";
    cfg.train.crop_seconds = 1.0;
    cfg.train.model.channels = 4;
    cfg.train.model.blocks = 1;
    cfg.train.model.heads = 1;
    cfg.train.model.freq_stride = 2;
    const double t0 = cpu_now();
    auto report = sweep::run_sweep(cfg, [](double a, const enhancer::EpochRecord& e) {
      fmt::print(stderr, "  sweep alpha {:.2f} epoch {:2d}  L {:.5f}  val score {:.4f}\n", a, e.epoch, e.l,
                 e.val_predictor_score);
    });
    sweep::emit_report(report, cfg.out_dir);
    sweep_seconds = cpu_now() - t0;
    sweep.emplace(std::move(report));
  }
};

Outcome predictor_learnability(Experiment& ex) {
  ex.ensure_predictor();
  const auto eval = predictor::evaluate_predictor(*ex.predictor, load_manifest(ex.corpus->predictor_manifest), "test");
  // Clean clips against their own 0 dB mixtures, over all noise kinds.
  const synth::NoiseKind kinds[] = {synth::NoiseKind::kWhite, synth::NoiseKind::kPink, synth::NoiseKind::kBabble,
                                    synth::NoiseKind::kTone500};
  int correct = 0;
  const int pairs = 100;
  const double t0 = cpu_now();
  for (int i = 0; i < pairs; ++i) {
    synth::ClipSpec spec;
    spec.seed = 900000 + static_cast<std::uint64_t>(i);
    const auto clean = synth::synth_clean(spec);
    const auto pause = static_cast<std::size_t>(spec.leading_pause * clean.sample_rate);
    const auto noisy = synth::mix_at_snr(clean, {kinds[i % 4], 0.0, {}, {}}, 910000 + static_cast<std::uint64_t>(i), pause);
    correct += ex.predictor->predict(clean) > ex.predictor->predict(noisy);
  }
  const double secs = ex.predictor_seconds + (cpu_now() - t0);
  const double acc = static_cast<double>(correct) / pairs;
  return {eval.mean.spearman_r >= 0.8 && acc >= 0.9 && secs < 600.0,
          fmt::format("test Spearman {:.4f} (limit 0.8), clean-vs-0dB accuracy {:.0f}% (limit 90%), corpus + training "
                      "{:.0f} s (limit 600)",
                      eval.mean.spearman_r, 100.0 * acc, secs)};
}

const sweep::AlphaRun* run_for(const sweep::RunReport& r, double alpha) {
  for (const auto& run : r.runs) {
    if (run.alpha == alpha) return &run;
  }
  return nullptr;
}

Outcome trend(Experiment& ex) {
  ex.ensure_sweep();
  const auto& r = *ex.sweep;
  const auto* a1 = run_for(r, 1.0);
  const auto* a5 = run_for(r, 0.5);
  const auto* a0 = run_for(r, 0.0);
  const double p1 = a1->eval.row.predictor_score, p5 = a5->eval.row.predictor_score, p0 = a0->eval.row.predictor_score;
  const bool a = p1 < p5 && p5 < p0;
  const bool b = a0->eval.row.si_sdr < r.noisy.row.si_sdr;
  const double h1 = a1->eval.row.halluc_ratio, h0 = a0->eval.row.halluc_ratio;
  const bool c = h0 >= 5.0 * h1 && h0 > 0.0;
  const bool t = ex.sweep_seconds < 1800.0;
  return {a && b && c && t,
          fmt::format("(a) score 1.0/0.5/0.0 = {:.4f}/{:.4f}/{:.4f} {}; (b) si_sdr alpha 0 {:.2f} vs noisy {:.2f} dB {}; "
                      "(c) halluc alpha 0 {:.4g} vs alpha 1 {:.4g} {}; {:.0f} s (limit 1800)",
                      p1, p5, p0, a ? "ok" : "FAIL", a0->eval.row.si_sdr, r.noisy.row.si_sdr, b ? "ok" : "FAIL", h0, h1,
                      c ? "ok" : "FAIL", ex.sweep_seconds)};
}

Outcome loss_identities(Experiment& ex) {
  ex.ensure_sweep();
  const auto* a1 = run_for(*ex.sweep, 1.0);
  const auto* a0 = run_for(*ex.sweep, 0.0);
  double d1 = 0.0, d0 = 0.0;
  for (const auto& s : a1->history.steps) d1 = std::max(d1, std::abs(s.l - s.l_spec));
  for (const auto& s : a0->history.steps) d0 = std::max(d0, std::abs(s.l - s.l_sq));
  const bool ok = d1 <= 1e-12 && d0 <= 1e-12 && !a1->history.steps.empty() && !a0->history.steps.empty() &&
                  std::isfinite(d1) && std::isfinite(d0);
  return {ok, fmt::format("alpha 1: max |L - L_spec| {:.3g} over {} steps; alpha 0: max |L - L_SQ| {:.3g} over {} steps",
                          d1, a1->history.steps.size(), d0, a0->history.steps.size())};
}

Outcome hallucination_locus(Experiment& ex) {
  ex.ensure_sweep();
  const auto* a0 = run_for(*ex.sweep, 0.0);
  const double pause = a0->eval.pause_density(), rest = a0->eval.rest_density();
  return {pause > 0.0 && pause >= 2.0 * rest,
          fmt::format("alpha 0 flagged density: leading 0.5 s {:.4g}, elsewhere {:.4g}, ratio {} (limit 2)", pause, rest,
                      rest > 0.0 ? fmt::format("{:.2f}", pause / rest) : pause > 0.0 ? "inf" : "n/a")};
}

// ---------------------------------------------------------------------------

Outcome determinism(const fs::path& cli, const fs::path& work) {
  const fs::path root = work / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const json config = {
      {"corpus",
       {{"predictor_train", 12},
        {"predictor_valid", 4},
        {"predictor_test", 4},
        {"enhancement_train", 4},
        {"enhancement_valid", 2},
        {"enhancement_test", 2},
        {"duration", 1.5}}},
      {"predictor", {{"n_mels", 8}, {"width", 8}, {"ffn", 8}, {"layers", 1}, {"heads", 1}, {"max_epochs", 3}}},
      {"enhancer",
       {{"epochs", 1}, {"crop_seconds", 0.5}, {"model", {{"channels", 2}, {"blocks", 1}, {"heads", 1}}}}},
      {"sweep", {{"alphas", {1.0, 0.0}}, {"epochs", 1}, {"stimuli_per_condition", 1}}}};
  std::ofstream(root / "config.json") << config.dump(2);

  auto run_all = [&](const fs::path& dir) -> std::string {
    const std::string base = fmt::format("\"{}\" --config \"{}\" --seed 7", cli.string(), (root / "config.json").string());
    const std::string d = dir.string();
    const std::vector<std::string> cmds = {
        fmt::format("{} --out \"{}/data\" gen-data", base, d),
        fmt::format("{} --out \"{}/pred\" train-predictor --data \"{}/data\"", base, d, d),
        fmt::format("{} --out \"{}/se\" train-se --alpha 0.5 --data \"{}/data\" --predictor \"{}/pred/predictor.ckpt\"",
                    base, d, d, d),
        fmt::format("{} --out \"{}/eval\" eval --data \"{}/data\" --predictor \"{}/pred/predictor.ckpt\" --model "
                    "\"{}/se/enhancer.ckpt\" --alpha 0.5",
                    base, d, d, d, d),
        fmt::format("{} --out \"{}/sweep\" sweep --data \"{}/data\" --predictor \"{}/pred/predictor.ckpt\"", base, d, d, d),
        fmt::format("{} --out \"{}/spec.png\" spectrogram --in \"{}/data/enhancement/noisy/enh-test-0000.wav\" --model "
                    "\"{}/se/enhancer.ckpt\"",
                    base, d, d, d),
        fmt::format("{} --out \"{}/report.md\" report \"{}/sweep\" \"{}/eval\"", base, d, d, d),
    };
    for (std::size_t i = 0; i < cmds.size(); ++i) {
      const std::string full = fmt::format("{} > \"{}/stdout_{}.txt\" 2> \"{}/stderr_{}.txt\"", cmds[i], d, i, d, i);
      fs::create_directories(dir);
      if (std::system(full.c_str()) != 0) return "command failed: " + cmds[i];
    }
    return {};
  };
  // Both runs use the same path so printed paths match too.
  for (const char* name : {"a", "b"}) {
    const auto err = run_all(root / "run");
    if (!err.empty()) return {false, err};
    fs::rename(root / "run", root / name);
  }
  std::size_t compared = 0;
  std::vector<std::string> diffs;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), root / "a");
    if (rel.filename().string().rfind("stderr_", 0) == 0) continue;
    ++compared;
    if (slurp(entry.path()) != slurp(root / "b" / rel)) diffs.push_back(rel.generic_string());
  }
  std::size_t csv_json = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    const auto ext = entry.path().extension();
    csv_json += entry.is_regular_file() && (ext == ".csv" || ext == ".json");
  }
  std::string detail = fmt::format("7 CLI commands run twice; {} output files compared ({} CSV/JSON), {} differ", compared,
                                   csv_json, diffs.size());
  for (const auto& d : diffs) detail += " " + d;
  return {diffs.empty() && csv_json > 0, detail};
}

Outcome rating_backend(const fs::path& work) {
  const fs::path dir = work / "rating";
  fs::remove_all(dir);
  fs::create_directories(dir / "wav");
  // Three clips for each of noisy and four alphas, as in the listening test.
  const std::vector<std::string> conditions{"noisy", "alpha=1.00", "alpha=0.50", "alpha=0.10", "alpha=0.00"};
  json list = json::array();
  for (const auto& c : conditions) {
    for (int i = 0; i < 3; ++i) {
      synth::ClipSpec spec;
      spec.seed = 500 + static_cast<std::uint64_t>(i);
      spec.duration = 1.0;
      std::string file = fmt::format("{}-{}", c, i);
      std::replace(file.begin(), file.end(), '=', '_');
      dsp::write_wav(dir / "wav" / (file + ".wav"), synth::synth_clean(spec));
      list.push_back({{"id", file}, {"condition", c}, {"wav", "wav/" + file + ".wav"}});
    }
  }
  std::ofstream(dir / "stimuli.json") << list.dump(2);

  // Scripted rater: noisy keeps the most natural speech, alpha 1.0 removes
  // the most background noise, alpha 0.0 hallucinates and rates worst.
  const std::map<std::string, std::array<int, 3>> profile{{"noisy", {5, 2, 3}},
                                                          {"alpha=1.00", {4, 5, 4}},
                                                          {"alpha=0.50", {3, 4, 3}},
                                                          {"alpha=0.10", {2, 3, 2}},
                                                          {"alpha=0.00", {2, 2, 1}}};
  const int raters = 16;
  std::vector<std::string> problems;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) problems.push_back(what);
  };
  int rejected_range = 0, rejected_dup = 0;
  {
    rating::RatingService svc(rating::default_playlist(rating::load_stimuli(dir)), dir / "ratings.jsonl", 4);
    rating::HttpServer server(svc, {});
    const int port = server.bind("127.0.0.1", 0);
    std::thread th([&] { server.run(); });
    server.wait_until_ready();
    httplib::Client cli("127.0.0.1", port);
    Rng jitter(5);
    for (int r = 0; r < raters; ++r) {
      auto sres = cli.Get("/api/session");
      expect(sres && sres->status == 200, "session");
      if (!sres) break;
      const auto sess = json::parse(sres->body);
      const auto ids = sess["stimuli"].get<std::vector<std::string>>();
      expect(ids.size() == 15, "playlist size");
      for (const auto& id : ids) {
        auto wav = cli.Get("/api/stimulus/" + id);
        expect(wav && wav->status == 200 && wav->get_header_value("Content-Type") == "audio/wav", "stimulus fetch");
        auto s = profile.at(svc.find_stimulus(id)->condition);
        // Small per-rating spread, kept inside 1..5.
        for (auto& v : s) v = std::clamp(v + static_cast<int>(jitter.below(3)) - 1, 1, 5);
        json body = {{"session_id", sess["session_id"]}, {"stimulus_id", id}, {"sig", s[0]}, {"bak", s[1]}, {"ovrl", s[2]}};
        auto res = cli.Post("/api/rating", body.dump(), "application/json");
        expect(res && res->status == 200, "rating accepted");
      }
      json bad = {{"session_id", sess["session_id"]}, {"stimulus_id", ids[0]}, {"sig", 6}, {"bak", 3}, {"ovrl", 3}};
      auto res = cli.Post("/api/rating", bad.dump(), "application/json");
      rejected_range += res && res->status == 400;
      bad["sig"] = 0;
      res = cli.Post("/api/rating", bad.dump(), "application/json");
      rejected_range += res && res->status == 400;
      json dup = {{"session_id", sess["session_id"]}, {"stimulus_id", ids[0]}, {"sig", 1}, {"bak", 1}, {"ovrl", 1}};
      res = cli.Post("/api/rating", dup.dump(), "application/json");
      rejected_dup += res && res->status == 409;
    }
    server.stop();
    th.join();
  }
  expect(rejected_range == 2 * raters, "out-of-range rejections");
  expect(rejected_dup == raters, "duplicate rejections");

  // Restart on the same log and read the table back over HTTP.
  rating::RatingService svc(rating::default_playlist(rating::load_stimuli(dir)), dir / "ratings.jsonl", 4);
  rating::HttpServer server(svc, {});
  const int port = server.bind("127.0.0.1", 0);
  std::thread th([&] { server.run(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Get("/api/results");
  server.stop();
  th.join();
  if (!res) return {false, "results request failed"};
  const auto table = json::parse(res->body);
  expect(table["total"] == raters * 15, "total after restart");
  expect(table["rows"].size() == conditions.size(), "one row per condition");
  std::string best_sig, best_bak;
  double sig_max = 0.0, bak_max = 0.0;
  for (const auto& row : table["rows"]) {
    expect(row["count"] == raters * 3, "count per condition");
    for (const char* scale : {"sig", "bak", "ovrl"}) {
      const double m = row[scale]["mean"], sd = row[scale]["std"];
      expect(m >= 1.0 && m <= 5.0 && sd >= 0.0, "mean/std range");
    }
    if (row["sig"]["mean"].get<double>() > sig_max) sig_max = row["sig"]["mean"], best_sig = row["condition"];
    if (row["bak"]["mean"].get<double>() > bak_max) bak_max = row["bak"]["mean"], best_bak = row["condition"];
  }
  expect(best_sig == "noisy", "noisy SIG highest");
  expect(best_bak == "alpha=1.00", "alpha 1.0 BAK highest");
  std::string detail = fmt::format("{} raters x 15 stimuli, {} ratings after restart, {}/{} out-of-range and {}/{} "
                                   "duplicates rejected, SIG best {}, BAK best {}",
                                   raters, table["total"].get<int>(), rejected_range, 2 * raters, rejected_dup, raters,
                                   best_sig, best_bak);
  for (const auto& p : problems) detail += "; problem: " + p;
  return {problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  if (argc < 2) {
    fmt::print(stderr, "usage: {} <hlab-cli> [--work DIR] [--only a,b,...]\n", argv[0]);
    return 1;
  }
  const fs::path cli = fs::absolute(argv[1]);
  fs::path work = fs::temp_directory_path() / "hlab_acceptance";
  std::set<std::string> only;
  for (int i = 2; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--work") {
      work = argv[i + 1];
    } else if (flag == "--only") {
      std::stringstream ss(argv[i + 1]);
      for (std::string item; std::getline(ss, item, ',');) only.insert(item);
    }
  }
  fs::remove_all(work);
  fs::create_directories(work);
  work = fs::absolute(work);

  Experiment ex;
  ex.work = work;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient-fidelity", gradient_fidelity},
      {"stft-correctness", stft_correctness},
      {"spec-loss-cancellation", spec_loss_cancellation},
      {"metric-oracles", metric_oracles},
      {"rating-backend", [&] { return rating_backend(work); }},
      {"determinism", [&] { return determinism(cli, work); }},
      {"predictor-learnability", [&] { return predictor_learnability(ex); }},
      {"trend", [&] { return trend(ex); }},
      {"loss-identities", [&] { return loss_identities(ex); }},
      {"hallucination-locus", [&] { return hallucination_locus(ex); }},
  };
  int failed = 0, ran = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    ++ran;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    fmt::print("[{}] {}: {}\n", o.pass ? "PASS" : "FAIL", name, o.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of {} acceptance criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
