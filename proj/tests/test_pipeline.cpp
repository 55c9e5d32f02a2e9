#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "adcrowd/amg.hpp"
#include "adcrowd/checkpoint.hpp"
#include "adcrowd/config.hpp"
#include "adcrowd/dme.hpp"
#include "adcrowd/errors.hpp"
#include "adcrowd/imageio.hpp"
#include "adcrowd/metrics.hpp"
#include "adcrowd/rng.hpp"
#include "doctest.h"

using namespace adcrowd;
namespace fs = std::filesystem;

namespace {

Tensor random_image(std::uint64_t seed, int h, int w) {
  SplitMix64 rng = rng_for(seed, "test.pipeline", 0);
  Tensor t({1, 1, h, w});
  for (auto& v : t.v) v = static_cast<float>(rng.uniform(0.0, 1.0));
  return t;
}

SceneSample tiny_scene(std::uint64_t seed, SceneLabel label) {
  CorpusConfig cc;
  cc.image_size = 16;
  cc.heads_min = 2;
  cc.heads_max = 4;
  cc.rng_seed = seed;
  return synth_scene(cc, 0, label);
}

}  // namespace

TEST_CASE("attention bundle contract holds on fuzzed inputs") {
  for (int i = 0; i < 100; ++i) {
    const AmgNet net = build_amg<float>(1000 + i);
    const int size = 16 + 4 * (i % 5);  // 16..32
    const Tensor img = random_image(i, size, size);
    const AttentionBundle b = amg_forward(net, img);
    CHECK(b.attention.shape == std::vector<int>{1, 1, size, size});
    CHECK(b.pc + b.pb == doctest::Approx(1.0).epsilon(1e-6));
    float mn = 1e30f, mx = -1e30f;
    for (float v : b.attention.v) {
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    CHECK(mn >= 0.0f);
    CHECK(mx <= 1.0f);
    CHECK(b.fc.shape == std::vector<int>{1, 1, size / 4, size / 4});
  }
}

TEST_CASE("amg_forward is deterministic") {
  const AmgNet net = build_amg<float>(7);
  const Tensor img = random_image(7, 24, 24);
  const AttentionBundle a = amg_forward(net, img);
  const AttentionBundle b = amg_forward(net, img);
  CHECK(a.attention.v == b.attention.v);
  CHECK(a.pc == b.pc);
}

TEST_CASE("amg_forward rejects undersized or misaligned input") {
  const AmgNet net = build_amg<float>(1);
  CHECK_THROWS(amg_forward(net, random_image(0, 12, 12)));
  CHECK_THROWS(amg_forward(net, random_image(0, 18, 20)));
}

TEST_CASE("build_amg is deterministic and sized as declared") {
  const AmgNet a = build_amg<float>(42);
  const AmgNet b = build_amg<float>(42);
  const AmgNet c = build_amg<float>(43);
  REQUIRE(a.params.param_count() == b.params.param_count());
  bool equal = true, differs_from_c = false;
  for (const auto& p : a.params.entries) {
    const auto& q = b.params.at(p.name).tensor;
    if (p.tensor.v != q.v) equal = false;
    if (p.tensor.v != c.params.at(p.name).tensor.v) differs_from_c = true;
  }
  CHECK(equal);
  CHECK(differs_from_c);

  // conv stack: O*C*k*k + O per layer
  const int declared = (16 * 1 * 9 + 16) + (16 * 16 * 9 + 16) + (32 * 16 * 9 + 32) +
                       (32 * 32 * 9 + 32) + (8 * 32 * 1 + 8) + 3 * (8 * 32 * 9 + 8) +
                       (2 * 32 * 1 + 2);
  int total = 0;
  for (const auto& p : a.params.entries) total += static_cast<int>(p.tensor.numel());
  CHECK(total == declared);
}

TEST_CASE("classify ties break toward crowd and confidence is at least half") {
  AmgNet net = build_amg<float>(3);
  for (auto& v : net.params.at("amg.head.weight").tensor.v) v = 0.0f;
  for (auto& v : net.params.at("amg.head.bias").tensor.v) v = 0.0f;
  const auto [label, conf] = classify(net, random_image(3, 16, 16));
  CHECK(label == SceneLabel::crowd);
  CHECK(conf == doctest::Approx(0.5));

  const AmgNet rnd = build_amg<float>(5);
  const auto [l2, c2] = classify(rnd, random_image(5, 20, 20));
  CHECK(c2 >= 0.5f);
}

TEST_CASE("binarize_attention thresholds, rejects, stays idempotent") {
  Tensor m({1, 1, 1, 4});
  m.v = {0.05f, 0.5f, 0.1f, 0.0f};
  const Tensor t0 = binarize_attention(m, 0.0f);
  CHECK(t0.v == std::vector<float>{1, 1, 1, 1});
  const Tensor t1 = binarize_attention(m, 0.1f);
  CHECK(t1.v == std::vector<float>{0, 1, 1, 0});
  const Tensor twice = binarize_attention(binarize_attention(m, 0.1f), 0.5f);
  CHECK(twice.v == t1.v);
  for (float v : t1.v) CHECK((v == 0.0f || v == 1.0f));
  CHECK_THROWS(binarize_attention(m, -0.1f));
  CHECK_THROWS(binarize_attention(m, 1.5f));
}

TEST_CASE("train_amg with zero learning rate leaves parameters unchanged") {
  const std::vector<SceneSample> pos = {tiny_scene(1, SceneLabel::crowd)};
  const std::vector<SceneSample> neg = {tiny_scene(2, SceneLabel::background)};
  AmgNet net = build_amg<float>(9);
  const AmgNet before = net;
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.epochs = 1;
  tc.batch_size = 2;
  const auto hist = train_amg(net, pos, neg, tc);
  CHECK(hist.size() == 1);
  for (const auto& p : before.params.entries)
    CHECK(net.params.at(p.name).tensor.v == p.tensor.v);
}

TEST_CASE("train_amg rejects an empty class") {
  std::vector<SceneSample> pos = {tiny_scene(1, SceneLabel::crowd)};
  std::vector<SceneSample> none;
  AmgNet net = build_amg<float>(9);
  TrainConfig tc;
  CHECK_THROWS(train_amg(net, pos, none, tc));
  CHECK_THROWS(train_amg(net, none, pos, tc));
}

TEST_CASE("variant names round-trip and unknown names are rejected") {
  for (VariantKind k : {VariantKind::DME, VariantKind::AMG_DME, VariantKind::AMG_bAttn_DME,
                        VariantKind::AMG_attn_DME}) {
    CHECK(variant_from_name(variant_name(k)) == k);
    CHECK(variant_needs_amg(k) == (k != VariantKind::DME));
  }
  CHECK_THROWS(variant_from_name("vgg16"));
}

TEST_CASE("plain DME ignores a supplied AMG bit-for-bit") {
  const DmeNet dme = build_dme<float>(11);
  const AmgNet amg = build_amg<float>(12);
  const Tensor img = random_image(13, 32, 32);
  PipelineVariant v;
  v.kind = VariantKind::DME;
  const DensityMap a = dme_forward(dme, img, v, nullptr);
  const DensityMap b = dme_forward(dme, img, v, &amg);
  CHECK(a.grid.v == b.grid.v);
  CHECK(a.scale == 4);
  CHECK(a.grid.shape == std::vector<int>{1, 1, 8, 8});
}

TEST_CASE("attention variants require an AMG") {
  const DmeNet dme = build_dme<float>(11);
  const Tensor img = random_image(13, 32, 32);
  for (VariantKind k :
       {VariantKind::AMG_DME, VariantKind::AMG_bAttn_DME, VariantKind::AMG_attn_DME}) {
    PipelineVariant v;
    v.kind = k;
    CHECK_THROWS(dme_forward(dme, img, v, nullptr));
  }
}

TEST_CASE("binarized attention at threshold zero reduces to plain DME") {
  const DmeNet dme = build_dme<float>(21);
  const AmgNet amg = build_amg<float>(22);
  const Tensor img = random_image(23, 32, 32);
  PipelineVariant plain, battn;
  plain.kind = VariantKind::DME;
  battn.kind = VariantKind::AMG_bAttn_DME;
  battn.threshold = 0.0f;
  const DensityMap a = dme_forward(dme, img, plain, nullptr);
  const DensityMap b = dme_forward(dme, img, battn, &amg);
  CHECK(a.grid.v == b.grid.v);
}

TEST_CASE("soft attention variant equals DME on the attention-multiplied image") {
  const DmeNet dme = build_dme<float>(31);
  const AmgNet amg = build_amg<float>(32);
  const Tensor img = random_image(33, 32, 32);
  PipelineVariant plain, soft;
  plain.kind = VariantKind::DME;
  soft.kind = VariantKind::AMG_DME;
  const Tensor weighted = apply_attention(img, amg_forward(amg, img).attention);
  const DensityMap a = dme_forward(dme, weighted, plain, nullptr);
  const DensityMap b = dme_forward(dme, img, soft, &amg);
  CHECK(a.grid.v == b.grid.v);
}

TEST_CASE("apply_attention multiplies pixel-wise and rejects shape mismatch") {
  Tensor img({1, 1, 2, 2});
  img.v = {1.0f, 2.0f, 3.0f, 4.0f};
  Tensor att({1, 1, 2, 2});
  att.v = {0.5f, 0.0f, 1.0f, 0.25f};
  const Tensor out = apply_attention(img, att);
  CHECK(out.v == std::vector<float>{0.5f, 0.0f, 3.0f, 1.0f});
  CHECK_THROWS(apply_attention(img, Tensor({1, 1, 2, 3})));
}

TEST_CASE("inject_attention_features resizes then scales every channel") {
  Tensor feat({1, 2, 2, 2});
  feat.v = {1, 2, 3, 4, 10, 20, 30, 40};
  Tensor att({1, 1, 4, 4});
  for (auto& v : att.v) v = 0.5f;
  const Tensor out = inject_attention_features(feat, att);
  for (std::size_t i = 0; i < feat.v.size(); ++i)
    CHECK(out.v[i] == doctest::Approx(feat.v[i] * 0.5f));
  CHECK_THROWS(inject_attention_features(feat, Tensor({2, 1, 4, 4})));
}

TEST_CASE("density loss matches the closed form and rejects bad batch sizes") {
  DensityMap pred{Tensor({1, 1, 2, 2}), 4};
  DensityMap gt{Tensor({1, 1, 2, 2}), 4};
  pred.grid.v = {1.0f, 2.0f, 3.0f, 4.0f};
  gt.grid.v = {0.0f, 2.0f, 5.0f, 1.0f};
  // (1 + 0 + 4 + 9) / (2 * batch)
  CHECK(density_loss(pred, gt, 1).v[0] == doctest::Approx(7.0));
  CHECK(density_loss(pred, gt, 7).v[0] == doctest::Approx(1.0));
  CHECK_THROWS(density_loss(pred, gt, 0));
  DensityMap other_scale{pred.grid, 2};
  CHECK_THROWS(density_loss(pred, other_scale, 1));
}

TEST_CASE("train_dme zero learning rate is a no-op and history has one entry per epoch") {
  // patches are half the scene, and the net wants at least 16x16
  CorpusConfig cc;
  cc.image_size = 32;
  cc.heads_min = 2;
  cc.heads_max = 4;
  cc.rng_seed = 4;
  std::vector<SceneSample> data = {synth_scene(cc, 0, SceneLabel::crowd)};
  DmeNet net = build_dme<float>(40);
  const DmeNet before = net;
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.epochs = 2;
  tc.batch_size = 4;
  PipelineVariant v;
  v.kind = VariantKind::DME;
  const auto hist = train_dme(net, data, v, nullptr, tc);
  CHECK(hist.size() == 2);
  for (const auto& p : before.params.entries)
    CHECK(net.params.at(p.name).tensor.v == p.tensor.v);
  CHECK_THROWS(train_dme(net, {}, v, nullptr, tc));
}

// ---- metrics ----

TEST_CASE("prepare_record clamps, rescales, and preserves the integral") {
  SplitMix64 rng = rng_for(0, "test.metrics", 0);
  for (int trial = 0; trial < 20; ++trial) {
    DensityMap pred{Tensor({1, 1, 8, 8}), 4};
    for (auto& v : pred.grid.v) v = static_cast<float>(rng.uniform(-0.2, 1.0));
    DensityMap gt{Tensor({1, 1, 32, 32}), 1};
    for (auto& v : gt.grid.v) v = static_cast<float>(rng.uniform(0.0, 0.1));
    const EvalRecord rec = prepare_record(pred, gt);

    double clamped_sum = 0.0, gt_sum = 0.0;
    for (float v : pred.grid.v) clamped_sum += std::max(v, 0.0f);
    for (float v : gt.grid.v) gt_sum += v;
    CHECK(rec.predicted_count ==
          doctest::Approx(clamped_sum).epsilon(1e-4));
    CHECK(rec.gt_count == doctest::Approx(gt_sum).epsilon(1e-5));
    CHECK(rec.pred_map_fullres.grid.shape == gt.grid.shape);
    for (float v : rec.pred_map_fullres.grid.v) CHECK(v >= 0.0f);
  }
}

TEST_CASE("prepare_record rejects mismatched coverage and non-fullres GT") {
  DensityMap pred{Tensor({1, 1, 8, 8}), 4};
  DensityMap gt_small{Tensor({1, 1, 16, 16}), 1};
  CHECK_THROWS(prepare_record(pred, gt_small));
  DensityMap gt_scaled{Tensor({1, 1, 32, 32}), 2};
  CHECK_THROWS(prepare_record(pred, gt_scaled));
}

namespace {

EvalRecord record_from_counts(float pred_count, float gt_count) {
  // 16x16 maps with all mass in one pixel; enough for count metrics
  EvalRecord r;
  r.pred_map_fullres = DensityMap{Tensor({1, 1, 16, 16}), 1};
  r.gt_map_fullres = DensityMap{Tensor({1, 1, 16, 16}), 1};
  r.pred_map_fullres.grid.v[0] = pred_count;
  r.gt_map_fullres.grid.v[0] = gt_count;
  r.predicted_count = pred_count;
  r.gt_count = gt_count;
  return r;
}

}  // namespace

TEST_CASE("mae and mse follow their definitions and mse dominates mae") {
  std::vector<EvalRecord> recs = {record_from_counts(13, 10), record_from_counts(9, 10)};
  CHECK(mae(recs) == doctest::Approx(2.0));           // (3 + 1) / 2
  CHECK(mse(recs) == doctest::Approx(std::sqrt(5.0)));  // sqrt((9 + 1) / 2)
  CHECK(mse(recs) >= mae(recs));

  SplitMix64 rng = rng_for(1, "test.metrics", 1);
  std::vector<EvalRecord> fuzz;
  for (int i = 0; i < 50; ++i)
    fuzz.push_back(record_from_counts(static_cast<float>(rng.uniform(0, 60)),
                                      static_cast<float>(rng.uniform(0, 60))));
  CHECK(mse(fuzz) >= mae(fuzz));
  CHECK_THROWS(mae({}));
}

TEST_CASE("psnr caps at 100 for identical maps and drops 20*log10(2) per error doubling") {
  EvalRecord same;
  same.pred_map_fullres = DensityMap{Tensor({1, 1, 12, 12}), 1};
  same.gt_map_fullres = same.pred_map_fullres;
  same.gt_map_fullres.grid.v[5] = 1.0f;
  same.pred_map_fullres.grid.v[5] = 1.0f;
  CHECK(psnr(same) == 100.0f);

  // constant error of half the peak, then the full peak
  EvalRecord half = same, full = same;
  for (auto& v : half.pred_map_fullres.grid.v) v += 0.5f;
  for (auto& v : full.pred_map_fullres.grid.v) v += 1.0f;
  CHECK(psnr(half) - psnr(full) ==
        doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-6));
}

TEST_CASE("psnr matches an independent recomputation") {
  SplitMix64 rng = rng_for(2, "test.metrics", 2);
  EvalRecord r;
  r.pred_map_fullres = DensityMap{Tensor({1, 1, 16, 20}), 1};
  r.gt_map_fullres = DensityMap{Tensor({1, 1, 16, 20}), 1};
  for (auto& v : r.pred_map_fullres.grid.v) v = static_cast<float>(rng.uniform(0.0, 0.3));
  for (auto& v : r.gt_map_fullres.grid.v) v = static_cast<float>(rng.uniform(0.0, 0.3));

  double peak = 0.0;
  for (float v : r.gt_map_fullres.grid.v) peak = std::max(peak, static_cast<double>(v));
  peak = std::max(peak, 1e-8);
  double se = 0.0;
  for (std::size_t i = 0; i < r.pred_map_fullres.grid.v.size(); ++i) {
    const double d = (r.pred_map_fullres.grid.v[i] - r.gt_map_fullres.grid.v[i]) / peak;
    se += d * d;
  }
  const double expect = std::min(100.0, -10.0 * std::log10(se / r.pred_map_fullres.grid.v.size()));
  CHECK(psnr(r) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("ssim is one on identical maps and matches an independent recomputation") {
  SplitMix64 rng = rng_for(3, "test.metrics", 3);
  EvalRecord r;
  r.pred_map_fullres = DensityMap{Tensor({1, 1, 14, 18}), 1};
  r.gt_map_fullres = DensityMap{Tensor({1, 1, 14, 18}), 1};
  for (auto& v : r.pred_map_fullres.grid.v) v = static_cast<float>(rng.uniform(0.0, 1.0));
  for (auto& v : r.gt_map_fullres.grid.v) v = static_cast<float>(rng.uniform(0.0, 1.0));

  EvalRecord same = r;
  same.pred_map_fullres = same.gt_map_fullres;
  CHECK(ssim(same) == doctest::Approx(1.0).epsilon(1e-9));

  const int h = 14, w = 18, half = 5;
  double kernel[121], ksum = 0.0;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) {
      const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
      kernel[(dy + half) * 11 + dx + half] = v;
      ksum += v;
    }
  for (double& v : kernel) v /= ksum;
  double gmin = 1e30, gmax = -1e30;
  for (float v : r.gt_map_fullres.grid.v) {
    gmin = std::min(gmin, static_cast<double>(v));
    gmax = std::max(gmax, static_cast<double>(v));
  }
  const double range = std::max(gmax - gmin, 1e-8);
  const double c1 = 0.01 * range * 0.01 * range, c2 = 0.03 * range * 0.03 * range;
  double total = 0.0;
  int wins = 0;
  for (int y = half; y < h - half; ++y)
    for (int x = half; x < w - half; ++x) {
      double mp = 0, mg = 0, vp = 0, vg = 0, cov = 0;
      for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
          const double k = kernel[(dy + half) * 11 + dx + half];
          const double a = r.pred_map_fullres.grid.v[(y + dy) * w + x + dx];
          const double b = r.gt_map_fullres.grid.v[(y + dy) * w + x + dx];
          mp += k * a;
          mg += k * b;
          vp += k * a * a;
          vg += k * b * b;
          cov += k * a * b;
        }
      vp -= mp * mp;
      vg -= mg * mg;
      cov -= mp * mg;
      total += (2 * mp * mg + c1) * (2 * cov + c2) /
               ((mp * mp + mg * mg + c1) * (vp + vg + c2));
      ++wins;
    }
  CHECK(ssim(r) == doctest::Approx(total / wins).epsilon(1e-6));
  EvalRecord tiny;
  tiny.pred_map_fullres = DensityMap{Tensor({1, 1, 8, 8}), 1};
  tiny.gt_map_fullres = tiny.pred_map_fullres;
  CHECK_THROWS(ssim(tiny));
}

TEST_CASE("game equals mae at level zero and penalizes displaced mass") {
  EvalRecord r;
  r.pred_map_fullres = DensityMap{Tensor({1, 1, 16, 16}), 1};
  r.gt_map_fullres = DensityMap{Tensor({1, 1, 16, 16}), 1};
  r.pred_map_fullres.grid.v[0] = 1.0f;                 // top-left corner
  r.gt_map_fullres.grid.v[16 * 16 - 1] = 1.0f;         // bottom-right corner
  r.predicted_count = 1.0f;
  r.gt_count = 1.0f;
  std::vector<EvalRecord> recs = {r};
  CHECK(game(recs, 0) == doctest::Approx(0.0));  // counts agree globally
  CHECK(game(recs, 1) == doctest::Approx(2.0));
  CHECK(game(recs, 2) == doctest::Approx(2.0));
  CHECK(game(recs, 3) == doctest::Approx(2.0));
  CHECK_THROWS(game(recs, 4));
  CHECK_THROWS(game(recs, -1));

  SplitMix64 rng = rng_for(4, "test.metrics", 4);
  std::vector<EvalRecord> fuzz;
  for (int i = 0; i < 10; ++i) {
    EvalRecord f;
    f.pred_map_fullres = DensityMap{Tensor({1, 1, 24, 24}), 1};
    f.gt_map_fullres = DensityMap{Tensor({1, 1, 24, 24}), 1};
    double ps = 0, gs = 0;
    for (auto& v : f.pred_map_fullres.grid.v) { v = static_cast<float>(rng.uniform(0, 0.1)); ps += v; }
    for (auto& v : f.gt_map_fullres.grid.v) { v = static_cast<float>(rng.uniform(0, 0.1)); gs += v; }
    f.predicted_count = static_cast<float>(ps);
    f.gt_count = static_cast<float>(gs);
    fuzz.push_back(std::move(f));
  }
  CHECK(std::abs(game(fuzz, 0) - mae(fuzz)) <= 1e-4);
  for (int level = 1; level <= 3; ++level)
    CHECK(game(fuzz, level) >= game(fuzz, level - 1) - 1e-5f);
}

TEST_CASE("compute_metrics fills every field and report text lists them") {
  std::vector<EvalRecord> recs;
  SplitMix64 rng = rng_for(5, "test.metrics", 5);
  for (int i = 0; i < 3; ++i) {
    EvalRecord r;
    r.pred_map_fullres = DensityMap{Tensor({1, 1, 16, 16}), 1};
    r.gt_map_fullres = DensityMap{Tensor({1, 1, 16, 16}), 1};
    for (auto& v : r.pred_map_fullres.grid.v) v = static_cast<float>(rng.uniform(0, 0.1));
    for (auto& v : r.gt_map_fullres.grid.v) v = static_cast<float>(rng.uniform(0, 0.1));
    double ps = 0, gs = 0;
    for (float v : r.pred_map_fullres.grid.v) ps += v;
    for (float v : r.gt_map_fullres.grid.v) gs += v;
    r.predicted_count = static_cast<float>(ps);
    r.gt_count = static_cast<float>(gs);
    recs.push_back(std::move(r));
  }
  const MetricsReport rep = compute_metrics(recs);
  CHECK(rep.n_samples == 3);
  CHECK(rep.game.size() == 4);
  CHECK(std::isfinite(rep.mae));
  CHECK(std::isfinite(rep.mse));
  CHECK(std::isfinite(rep.mean_psnr));
  CHECK(std::isfinite(rep.mean_ssim));
  const std::string text = report_to_text(rep);
  for (const char* key : {"n_samples=", "mae=", "mse=", "psnr=", "ssim=", "game0=", "game3="})
    CHECK(text.find(key) != std::string::npos);
}

// ---- run configuration ----

TEST_CASE("config files parse, record consumption, and reject leftovers") {
  RunConfig cfg = RunConfig::from_text("alpha=3\nbeta=0.5\n# comment\n\ngamma=x\n");
  CHECK(cfg.get_int("alpha", "1") == 3);
  CHECK(cfg.get_double("beta", "1.0") == doctest::Approx(0.5));
  CHECK(cfg.get_str("missing", "fallback") == "fallback");
  CHECK_THROWS_AS(cfg.finish(), FormatError);  // gamma never consumed
  CHECK(cfg.get_str("gamma", "") == "x");
  CHECK_NOTHROW(cfg.finish());
  const std::string resolved = cfg.resolved_text();
  CHECK(resolved.find("alpha=3") != std::string::npos);
  CHECK(resolved.find("missing=fallback") != std::string::npos);
}

TEST_CASE("config rejects malformed lines and bad numbers with positions") {
  CHECK_THROWS_AS(RunConfig::from_text("ok=1\nbroken line\n"), FormatError);
  try {
    RunConfig::from_text("ok=1\nbroken line\n");
  } catch (const FormatError& e) {
    CHECK(e.offset == 5);  // the line after "ok=1\n"
  }
  RunConfig cfg = RunConfig::from_text("n=abc\n");
  CHECK_THROWS_AS(cfg.get_int("n", "0"), FormatError);
  RunConfig cfg2 = RunConfig::from_text("x=1.5\n");
  CHECK_THROWS_AS(cfg2.get_int("x", "0"), FormatError);
  RunConfig dupe = RunConfig::from_text("");
  CHECK(dupe.get_flag("quiet", "0") == false);
  RunConfig bad_flag = RunConfig::from_text("quiet=maybe\n");
  CHECK_THROWS_AS(bad_flag.get_flag("quiet", "0"), FormatError);
}

TEST_CASE("duplicate config keys are rejected") {
  CHECK_THROWS_AS(RunConfig::from_text("a=1\na=2\n"), FormatError);
}

TEST_CASE("flag overrides beat file values") {
  RunConfig cfg = RunConfig::from_text("rng_seed=1\n");
  cfg.set("rng_seed", "99");
  CHECK(cfg.get_u64("rng_seed", "0") == 99);
}

// ---- CLI exit codes ----

namespace {

int run_cli(const std::string& args) {
  const char* cli = std::getenv("ADCROWD_CLI");
  REQUIRE(cli != nullptr);
  const int rc = std::system((std::string(cli) + " " + args + " >/dev/null 2>&1").c_str());
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("cli maps outcomes to its exit-code contract") {
  const fs::path dir = fs::temp_directory_path() / "adcrowd_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string d = dir.string();

  std::ofstream(dir / "tiny.cfg") << "image_size=32\ntrain_crowd=3\ntrain_background=2\n"
                                  << "test_crowd=2\ntest_background=1\nheads_min=2\nheads_max=5\n"
                                  << "out_dir=" << d << "/corpus\n";
  CHECK(run_cli("synth --config " + d + "/tiny.cfg") == 0);
  CHECK(fs::exists(dir / "corpus" / "manifest_train.txt"));

  // unknown config key
  std::ofstream(dir / "bad.cfg") << "imge_size=16\n";
  CHECK(run_cli("synth --config " + d + "/bad.cfg") == 2);

  // unknown subcommand / flag
  CHECK(run_cli("transmogrify") == 2);

  // missing corpus and missing checkpoint
  std::ofstream(dir / "eval_nodata.cfg") << "data_dir=" << d << "/nowhere\nvariant=dme\n";
  CHECK(run_cli("eval --config " + d + "/eval_nodata.cfg --out " + d + "/e1") == 3);
  std::ofstream(dir / "eval_nockpt.cfg")
      << "data_dir=" << d << "/corpus\nvariant=dme\ndme_checkpoint=" << d << "/absent.ckpt\n";
  CHECK(run_cli("eval --config " + d + "/eval_nockpt.cfg --out " + d + "/e2") == 3);

  // zero-epoch training still writes a loadable checkpoint
  std::ofstream(dir / "dme0.cfg") << "data_dir=" << d << "/corpus\nvariant=dme\nepochs=0\n"
                                  << "out_dir=" << d << "/dme0\n";
  CHECK(run_cli("train-dme --config " + d + "/dme0.cfg") == 0);
  CHECK(fs::exists(dir / "dme0" / "dme.ckpt"));

  // wrong-network checkpoint is a mismatch, not an I/O error
  std::ofstream(dir / "amg0.cfg") << "data_dir=" << d << "/corpus\nepochs=0\n"
                                  << "out_dir=" << d << "/amg0\n";
  CHECK(run_cli("train-amg --config " + d + "/amg0.cfg") == 0);
  std::ofstream(dir / "eval_swap.cfg")
      << "data_dir=" << d << "/corpus\nvariant=dme\ndme_checkpoint=" << d
      << "/amg0/amg.ckpt\n";
  CHECK(run_cli("eval --config " + d + "/eval_swap.cfg --out " + d + "/e3") == 4);

  // eval with the real checkpoint works
  std::ofstream(dir / "eval_ok.cfg")
      << "data_dir=" << d << "/corpus\nvariant=dme\ndme_checkpoint=" << d
      << "/dme0/dme.ckpt\n";
  CHECK(run_cli("eval --config " + d + "/eval_ok.cfg --out " + d + "/e4") == 0);
  CHECK(fs::exists(dir / "e4" / "report.txt"));

  // malformed image file
  std::ofstream(dir / "junk.pgm") << "P5 not a real header";
  CHECK(run_cli("infer " + d + "/junk.pgm --config " + d + "/eval_ok.cfg --out " + d + "/i1") ==
        2);

  fs::remove_all(dir);
}
