// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "hlab/common/error.hpp"
#include "hlab/common/random.hpp"
#include "hlab/dsp/stft.hpp"
#include "hlab/enhancer/train.hpp"
#include "hlab/nn/grad_check.hpp"
#include "hlab/nn/ops.hpp"
#include "hlab/nn/signal.hpp"
#include "hlab/synth/synth.hpp"

using namespace hlab;
using namespace hlab::enhancer;
using nn::Tensor;

namespace {

EnhancerConfig tiny_config() {
  EnhancerConfig cfg;
  cfg.channels = 4;
  cfg.blocks = 1;
  cfg.heads = 1;
  return cfg;
}

predictor::PredictorModel tiny_predictor(bool frozen = true) {
  predictor::PredictorConfig cfg;
  cfg.n_mels = 8;
  cfg.width = 8;
  cfg.ffn = 8;
  cfg.layers = 1;
  predictor::PredictorModel p(cfg, 3);
  if (frozen) p.freeze();
  return p;
}

std::vector<double> noise(std::size_t n, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = scale * rng.normal();
  return x;
}

Tensor spec1(double r, double i) { return Tensor::constant({1, 1, 2}, {r, i}); }

void force_mask(EnhancerModel& m, double mr, double mi) {
  for (auto& [name, p] : m.parameters()) {
    if (name == "decoder.out.w") {
      for (auto& v : p.mutable_values()) v = 0.0;
    } else if (name == "decoder.out.b") {
      p.mutable_values()[0] = mr;
      p.mutable_values()[1] = mi;
    }
  }
}

}  // namespace

TEST_CASE("spec loss examples") {
  for (auto v : {SpecLossVariant::kAsPrinted, SpecLossVariant::kSumOfAbs}) {
    CHECK(spec_loss(spec1(1.0, 1.0), spec1(1.0, 1.0), v).item() == 0.0);
    CHECK(spec_loss(spec1(2.0, 0.0), spec1(0.0, 0.0), v).item() == 2.0);
  }
  CHECK(spec_loss(spec1(1.0, 1.0), spec1(0.5, 1.5), SpecLossVariant::kAsPrinted).item() == 0.0);
  CHECK(spec_loss(spec1(1.0, 1.0), spec1(0.5, 1.5), SpecLossVariant::kSumOfAbs).item() == 1.0);
  CHECK_THROWS_AS(spec_loss(spec1(1.0, 1.0), Tensor::zeros({2, 1, 2}), SpecLossVariant::kAsPrinted),
                  ShapeError);
  CHECK(parse_spec_loss_variant("sum-of-abs") == SpecLossVariant::kSumOfAbs);
  CHECK_THROWS_AS(parse_spec_loss_variant("l2"), UsageError);
}

TEST_CASE("spec loss averages over bins") {
  // Two bins: |(1 - 0) + (0 - 0)| = 1 and |(0 - 0) + (3 - 1)| = 2.
  auto s = Tensor::constant({1, 2, 2}, {1.0, 0.0, 0.0, 3.0});
  auto e = Tensor::constant({1, 2, 2}, {0.0, 0.0, 0.0, -1.0});
  CHECK(spec_loss(s, e, SpecLossVariant::kAsPrinted).item() == doctest::Approx(1.5));
}

TEST_CASE("joint loss") {
  const auto a = Tensor::scalar(2.0), b = Tensor::scalar(0.04);
  CHECK(joint_loss(0.5, a, b).item() == doctest::Approx(1.02));
  CHECK(joint_loss(1.0, a, b).item() == 2.0);
  CHECK(joint_loss(0.0, a, b).item() == 0.04);
  const auto x = Tensor::scalar(0.1234567890123), y = Tensor::scalar(9.87654321);
  CHECK(joint_loss(1.0, x, y).item() == x.item());
  CHECK(joint_loss(0.0, x, y).item() == y.item());
  CHECK_THROWS_AS(joint_loss(1.5, a, b), UsageError);
  CHECK_THROWS_AS(joint_loss(-0.1, a, b), UsageError);
}

TEST_CASE("sq loss requires a frozen predictor and spares its parameters") {
  const auto wave = noise(4000, 1);
  auto open = tiny_predictor(false);
  CHECK_THROWS_AS(sq_loss(open, Tensor::constant({4000}, wave)), UsageError);

  const auto pred = tiny_predictor();
  const double d = pred.predict(dsp::Waveform(wave, 16000));
  const auto l = sq_loss(pred, Tensor::constant({4000}, wave));
  CHECK(l.item() == doctest::Approx((1.0 - d) * (1.0 - d)).epsilon(1e-12));

  EnhancerModel m(tiny_config(), 4);
  const auto out = m.forward(Tensor::constant({4000}, wave));
  sq_loss(pred, out.wave).backward();
  for (const auto& [name, p] : pred.parameters()) {
    INFO(name);
    CHECK_FALSE(p.has_grad());
  }
  bool any = false;
  for (const auto& [name, p] : m.parameters()) {
    for (double g : p.grad()) any = any || g != 0.0;
  }
  CHECK(any);
}

TEST_CASE("forced masks give identity and silence") {
  const dsp::Waveform x(noise(6000, 2), 16000);
  EnhancerModel m(tiny_config(), 5);
  force_mask(m, 1.0, 0.0);
  const auto r = m.enhance(x);
  const auto ref = dsp::istft(dsp::stft(x));
  REQUIRE(r.wave.size() == ref.size());
  double worst = 0.0;
  for (std::size_t i = 512; i + 512 < ref.size(); ++i) {
    worst = std::max(worst, std::abs(r.wave.samples[i] - ref.samples[i]));
  }
  CHECK(worst <= 1e-9);
  CHECK(r.masks.frames == dsp::StftConfig{}.num_frames(6000));
  CHECK(r.masks.bins == 257);
  force_mask(m, 0.0, 0.0);
  for (double v : m.enhance(x).wave.samples) CHECK(v == 0.0);
}

TEST_CASE("untrained model applies the identity mask") {
  EnhancerModel m(tiny_config(), 9);
  const auto r = m.enhance(dsp::Waveform(noise(5000, 6), 16000));
  for (double v : r.masks.real) REQUIRE(v == 1.0);
  for (double v : r.masks.imag) REQUIRE(v == 0.0);
}

TEST_CASE("untrained model output is finite for both frequency strides") {
  for (int stride : {1, 2}) {
    auto cfg = tiny_config();
    cfg.freq_stride = stride;
    EnhancerModel m(cfg, 6);
    const auto r = m.enhance(dsp::Waveform(noise(5000, 3), 16000));
    for (double v : r.wave.samples) REQUIRE(std::isfinite(v));
    CHECK(r.masks.real.size() == static_cast<std::size_t>(r.masks.frames) * 257);
  }
  auto bad = tiny_config();
  bad.freq_stride = 3;
  CHECK_THROWS_AS(EnhancerModel(bad, 1), UsageError);
  CHECK_THROWS_AS(EnhancerModel(tiny_config(), 1).masks(Tensor::zeros({4, 100, 2})), ShapeError);
}

TEST_CASE("full chain gradient through masking, istft and the predictor") {
  auto cfg = tiny_config();
  cfg.channels = 2;
  cfg.stft = dsp::StftConfig{32, 16};
  for (int stride : {1, 2}) {
    cfg.freq_stride = stride;
    EnhancerModel m(cfg, 7);
    // The output head starts at zero, which would zero every upstream
    // gradient and make the check vacuous.
    Rng jitter(21);
    for (auto& [name, p] : m.parameters()) {
      for (auto& v : p.mutable_values()) v += jitter.uniform(-0.2, 0.2);
    }
    predictor::PredictorConfig pc;
    pc.n_mels = 4;
    pc.width = 4;
    pc.ffn = 4;
    pc.layers = 1;
    pc.stft = cfg.stft;
    predictor::PredictorModel pred(pc, 8);
    pred.freeze();
    const auto wave = Tensor::constant({96}, noise(96, 4));
    const auto clean = nn::stft(Tensor::constant({96}, noise(96, 5)), cfg.stft);
    {
      // Central differences are only meaningful away from the kinks of the
      // absolute values inside the spectral loss.
      const auto out = m.forward(wave);
      const auto est = out.spec.values();
      const auto ref = clean.values();
      double margin = 1.0;
      for (std::size_t i = 0; i < est.size(); ++i) {
        margin = std::min({margin, std::abs(est[i]), std::abs(std::abs(est[i]) - std::abs(ref[i]))});
      }
      REQUIRE(margin > 1e-4);
    }
    nn::GradCheckOptions opts;
    opts.max_entries_per_param = 6;
    const auto rep = nn::grad_check(
        [&] {
          const auto out = m.forward(wave);
          return joint_loss(0.5, spec_loss(clean, out.spec, SpecLossVariant::kSumOfAbs),
                            sq_loss(pred, out.wave));
        },
        m.parameters(), opts);
    INFO(rep.summary());
    CHECK(rep.passed);
  }
}

TEST_CASE("training contracts on a tiny corpus") {
  const auto root = std::filesystem::temp_directory_path() / "hlab_enh_test";
  std::filesystem::remove_all(root);
  synth::CorpusCounts counts{2, 1, 1, 4, 2, 1, 0.75};
  const auto paths = synth::build_corpus(root, counts, 3);
  auto manifest = load_manifest(paths.enhancement_manifest);
  const auto pred = tiny_predictor();
  const auto before = pred.to_checkpoint();

  TrainConfig cfg;
  cfg.model = tiny_config();
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.crop_seconds = 0.5;
  cfg.alpha = 1.0;
  const auto a1 = train_enhancer(manifest, pred, cfg, 1);
  CHECK(a1.history.epochs.size() == 2);
  CHECK(a1.history.steps.size() == 8);
  for (const auto& s : a1.history.steps) CHECK(s.l == s.l_spec);
  for (const auto& e : a1.history.epochs) {
    CHECK(e.l == e.l_spec);
    CHECK(e.val_predictor_score > 0.0);
  }
  const auto again = train_enhancer(manifest, pred, cfg, 1);
  CHECK(again.history.epochs.back().l == a1.history.epochs.back().l);

  cfg.alpha = 0.0;
  for (auto& e : manifest.entries) e.clean_path.reset();
  const auto a0 = train_enhancer(manifest, pred, cfg, 1);
  for (const auto& s : a0.history.steps) {
    CHECK(s.l == s.l_sq);
    CHECK(std::isnan(s.l_spec));
  }
  cfg.alpha = 0.5;
  CHECK_THROWS_AS(train_enhancer(manifest, pred, cfg, 1), DataError);
  CHECK_THROWS_AS(train_enhancer(manifest, tiny_predictor(false), cfg, 1), UsageError);

  // Frozen predictor is bitwise unchanged by any amount of enhancer training.
  const auto after = pred.to_checkpoint();
  CHECK(before.arrays == after.arrays);
  std::filesystem::remove_all(root);
}
