// Acceptance gates. One PASS/FAIL line per criterion, nonzero exit when any
// gate fails. Criteria 6-8 train real networks, so a full run takes around
// 45 minutes on a single core; everything before them finishes in seconds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "adcrowd/amg.hpp"
#include "adcrowd/checkpoint.hpp"
#include "adcrowd/commands.hpp"
#include "adcrowd/config.hpp"
#include "adcrowd/deform.hpp"
#include "adcrowd/density_map.hpp"
#include "adcrowd/dme.hpp"
#include "adcrowd/gradcheck_suite.hpp"
#include "adcrowd/kernels.hpp"
#include "adcrowd/metrics.hpp"
#include "adcrowd/rng.hpp"
#include "adcrowd/synthdata.hpp"
#include "adcrowd/tensor.hpp"

namespace fs = std::filesystem;
using namespace adcrowd;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

std::string fmt(const char* f, ...) {
  char buf[768];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

void gate(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

void note(const std::string& text) {
  std::printf("    %s\n", text.c_str());
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream o;
  o << f.rdbuf();
  return o.str();
}

bool dirs_identical(const fs::path& a, const fs::path& b) {
  auto listing = [](const fs::path& root) {
    std::vector<std::string> rel;
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file()) rel.push_back(fs::relative(e.path(), root).string());
    std::sort(rel.begin(), rel.end());
    return rel;
  };
  const std::vector<std::string> ra = listing(a), rb = listing(b);
  if (ra != rb) return false;
  for (const std::string& r : ra)
    if (slurp(a / r) != slurp(b / r)) return false;
  return !ra.empty();
}

std::vector<EvalRecord> score_all(const DmeNet& net, const std::vector<SceneSample>& scenes,
                                  const PipelineVariant& variant, const AmgNet* amg) {
  std::vector<EvalRecord> recs;
  recs.reserve(scenes.size());
  for (const auto& s : scenes)
    recs.push_back(prepare_record(dme_forward(net, s.image, variant, amg), s.gt_density));
  return recs;
}

// Same index layout write_corpus uses: train crowd, train background, test
// crowd, test background.
std::vector<SceneSample> synth_split(const CorpusConfig& c, bool test) {
  std::vector<SceneSample> v;
  int base = test ? c.train_crowd + c.train_background : 0;
  const int n_crowd = test ? c.test_crowd : c.train_crowd;
  const int n_bg = test ? c.test_background : c.train_background;
  for (int i = 0; i < n_crowd; ++i) v.push_back(synth_scene(c, base + i, SceneLabel::crowd));
  base += n_crowd;
  for (int i = 0; i < n_bg; ++i) v.push_back(synth_scene(c, base + i, SceneLabel::background));
  return v;
}

}  // namespace

int main() {
  std::printf("acceptance suite: 10 gates; 6-8 train networks, expect ~45 min on one core\n");
  std::fflush(stdout);

  const fs::path tmp = fs::absolute("accept_tmp");
  const fs::path cwd0 = fs::current_path();
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp / "s1");
  fs::create_directories(tmp / "s2");

  // Canonical corpus, produced through the same command the CLI runs. A
  // relative out_dir keeps the resolved config file free of absolute paths
  // so criterion 10 can demand byte identity across the two runs.
  fs::current_path(tmp / "s1");
  {
    RunConfig cfg;
    cfg.set("out_dir", "corpus");
    cmd_synth(cfg);
  }
  fs::current_path(cwd0);
  const std::string corpus1 = (tmp / "s1" / "corpus").string();

  std::vector<SceneSample> train = load_split(corpus1, "train");
  const std::vector<SceneSample> test = load_split(corpus1, "test");
  std::vector<SceneSample> train_pos, train_neg;
  for (auto& s : train) (s.label == SceneLabel::crowd ? train_pos : train_neg).push_back(s);

  // 1: every differentiable op against central finite differences, 64-bit.
  try {
    constexpr double kBudgetSec = 120.0;
    const auto t0 = Clock::now();
    const std::vector<OpCheck> checks = gradcheck_suite();
    const double dt = seconds_since(t0);
    double worst = 0.0;
    bool all = !checks.empty();
    for (const auto& c : checks) {
      worst = std::max(worst, c.max_rel_err);
      all = all && c.pass;
    }
    gate(1, all && dt < kBudgetSec,
         fmt("gradient oracle: %zu ops, worst rel err %.2e (tol 1e-4), %.1fs (< %.0fs)",
             checks.size(), worst, dt, kBudgetSec));
  } catch (const std::exception& e) {
    gate(1, false, fmt("gradient oracle: exception: %s", e.what()));
  }

  // 2: with zero offsets the deformable path must reproduce plain conv2d.
  try {
    constexpr float kTol = 1e-5f;
    float worst = 0.0f;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      SplitMix64 rng = rng_for(seed, "accept.deform", 0);
      for (int k : {3, 5}) {
        const int n = 2, c = 3, o = 4, h = 13, w = 11, pad = k / 2;
        Tensor x({n, c, h, w});
        for (auto& v : x.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        DeformConvLayerT<float> layer = make_deform_layer<float>(rng, o, c, k, 1, pad);
        for (auto& v : layer.bias.v) v = static_cast<float>(rng.uniform(-0.5, 0.5));
        const Tensor got = deform_conv2d(x, layer);
        kern::ConvDims d{n, c, h, w, o, k, k, 1, pad, 1};
        Tensor want({n, o, d.oh(), d.ow()});
        kern::conv2d_forward(x.data(), layer.weight.data(), layer.bias.data(), want.data(), d);
        for (std::size_t i = 0; i < want.v.size(); ++i)
          worst = std::max(worst, std::abs(got.v[i] - want.v[i]));
      }
    }
    gate(2, worst <= kTol,
         fmt("deform degeneracy: zero offsets vs conv2d, k in {3,5}, 20 seeds, max |diff| %.2e (tol 1e-5)",
             static_cast<double>(worst)));
  } catch (const std::exception& e) {
    gate(2, false, fmt("deform degeneracy: exception: %s", e.what()));
  }

  // 3: density maps integrate to the head count and survive the resolution
  // plumbing with their sums intact.
  try {
    constexpr double kTolCount = 1e-3, kTolSum = 1e-4;
    double worst_count = 0.0, worst_down = 0.0, worst_rec = 0.0;
    SplitMix64 rng = rng_for(42, "accept.heads", 0);
    const int sizes[3] = {32, 48, 64};
    for (int it = 0; it < 1000; ++it) {
      const int hw = sizes[it % 3];
      const int n = 1 + static_cast<int>(rng.uniform_int(60));
      std::vector<std::pair<float, float>> heads(n);
      for (auto& p : heads)
        p = {static_cast<float>(rng.uniform(0.0, hw - 1.0)),
             static_cast<float>(rng.uniform(0.0, hw - 1.0))};
      const DensityMap full = gt_density(heads, hw, hw, 2.0);
      double s = 0.0;
      for (float v : full.grid.v) s += v;
      worst_count = std::max(worst_count, std::abs(s - n) / n);
      const DensityMap down = downsample_density(full, 4);
      double sd = 0.0;
      for (float v : down.grid.v) sd += v;
      worst_down = std::max(worst_down, std::abs(sd - s) / s);
      const EvalRecord rec = prepare_record(down, full);
      const double clamped = count_from_density(down);
      worst_rec = std::max(worst_rec, std::abs(rec.predicted_count - clamped) / clamped);
      worst_rec = std::max(worst_rec, std::abs(rec.gt_count - s) / s);
    }
    gate(3, worst_count <= kTolCount && worst_down <= kTolSum && worst_rec <= kTolSum,
         fmt("count conservation: 1000 head sets, sum err %.2e (tol 1e-3), downsample %.2e / prepare_record %.2e (tol 1e-4)",
             worst_count, worst_down, worst_rec));
  } catch (const std::exception& e) {
    gate(3, false, fmt("count conservation: exception: %s", e.what()));
  }

  // 4: metric identities on maps quantized to multiples of 1/1024, so the
  // double map sums cast to float without rounding and game(.,0) can match
  // mae to 1e-9.
  try {
    constexpr double kEq = 1e-9, kPsnrTol = 1e-6, kMono = 1e-6, kMseSlack = 1e-6;
    SplitMix64 rng = rng_for(42, "accept.metrics", 0);
    auto qmap = [&rng](int hw) {
      DensityMap m{Tensor({1, 1, hw, hw}), 1};
      for (auto& v : m.grid.v)
        v = static_cast<float>(std::floor(rng.uniform(0.0, 64.0)) / 1024.0);
      return m;
    };
    auto direct = [](const DensityMap& p, const DensityMap& g) {
      EvalRecord r;
      double sp = 0.0, sg = 0.0;
      for (float v : p.grid.v) sp += v;
      for (float v : g.grid.v) sg += v;
      r.predicted_count = static_cast<float>(sp);
      r.gt_count = static_cast<float>(sg);
      r.pred_map_fullres = p;
      r.gt_map_fullres = g;
      return r;
    };
    std::vector<EvalRecord> recs;
    for (int i = 0; i < 24; ++i) recs.push_back(direct(qmap(16), qmap(16)));
    const float m_mae = mae(recs), m_mse = mse(recs);
    const double d_g0 = std::abs(static_cast<double>(game(recs, 0)) - m_mae);
    bool mono = true;
    double prev = game(recs, 0);
    for (int level = 1; level <= 3; ++level) {
      const double g = game(recs, level);
      mono = mono && g + kMono >= prev;
      prev = g;
    }
    const DensityMap one = qmap(16);
    const EvalRecord ident = direct(one, one);
    const double d_ssim = std::abs(static_cast<double>(ssim(ident)) - 1.0);
    const double d_psnr = std::abs(static_cast<double>(psnr(ident)) - 100.0);
    DensityMap gt = qmap(16);
    gt.grid.v[0] = 1.0f;  // pins the peak so the error-to-peak ratio is exact
    DensityMap pa = gt, pb = gt;
    for (auto& v : pa.grid.v) v += 0.25f;
    for (auto& v : pb.grid.v) v += 0.5f;
    const double drop = static_cast<double>(psnr(direct(pa, gt))) -
                        static_cast<double>(psnr(direct(pb, gt)));
    const double d_drop = std::abs(drop - 20.0 * std::log10(2.0));
    gate(4,
         d_g0 <= kEq && mono && m_mse + kMseSlack >= m_mae && d_ssim <= kEq &&
             d_psnr <= kEq && d_drop <= kPsnrTol,
         fmt("metric identities: |game0-mae| %.1e, game monotone %s, mse %.3f >= mae %.3f, "
             "|ssim(x,x)-1| %.1e, |psnr(x,x)-100| %.1e, doubling drop err %.1e",
             d_g0, mono ? "yes" : "NO", m_mse, m_mae, d_ssim, d_psnr, d_drop));
  } catch (const std::exception& e) {
    gate(4, false, fmt("metric identities: exception: %s", e.what()));
  }

  // 5: attention output contract under random parameters and inputs.
  try {
    constexpr float kProbTol = 1e-6f;
    bool shapes = true, range = true, probs = true;
    float worst_prob = 0.0f;
    for (int i = 0; i < 100; ++i) {
      SplitMix64 rng = rng_for(7, "accept.attn", static_cast<std::uint64_t>(i));
      const int h = 16 + 4 * static_cast<int>(rng.uniform_int(5));
      const int w = 16 + 4 * static_cast<int>(rng.uniform_int(5));
      const AmgNet net = build_amg<float>(1000 + i);
      Tensor img({1, 1, h, w});
      for (auto& v : img.v) v = static_cast<float>(rng.uniform(0.0, 1.0));
      const AttentionBundle b = amg_forward(net, img);
      shapes = shapes && b.attention.shape == img.shape;
      for (float v : b.attention.v) range = range && v >= 0.0f && v <= 1.0f;
      worst_prob = std::max(worst_prob, std::abs(b.pc + b.pb - 1.0f));
      probs = probs && worst_prob <= kProbTol;
    }
    gate(5, shapes && range && probs,
         fmt("attention contract: 100 inputs, shape %s, range [0,1] %s, |Pc+Pb-1| %.1e (tol 1e-6)",
             shapes ? "ok" : "BAD", range ? "ok" : "BAD", static_cast<double>(worst_prob)));
  } catch (const std::exception& e) {
    gate(5, false, fmt("attention contract: exception: %s", e.what()));
  }

  // 6: the classifier separates crowd from background on held-out scenes.
  AmgNet amg;
  try {
    constexpr double kAcc = 0.95, kBudgetSec = 600.0;
    TrainConfig tc;
    tc.learning_rate = 1e-5;
    tc.batch_size = 8;
    tc.epochs = 20;
    tc.rng_seed = 42;
    amg = build_amg<float>(tc.rng_seed);
    const auto t0 = Clock::now();
    train_amg(amg, train_pos, train_neg, tc);
    const double dt = seconds_since(t0);
    int correct = 0;
    for (const auto& s : test) correct += classify(amg, s.image).first == s.label;
    const double acc = static_cast<double>(correct) / test.size();
    gate(6, acc >= kAcc && dt < kBudgetSec,
         fmt("amg learning: held-out accuracy %d/%zu = %.1f%% (need >= 95%%), %.0fs (< 600s)",
             correct, test.size(), 100.0 * acc, dt));
  } catch (const std::exception& e) {
    gate(6, false, fmt("amg learning: exception: %s", e.what()));
  }

  // 7: training moves the estimator well below its random-init error, and
  // the 5-epoch-smoothed loss never stalls.
  DmeNet dme_net = build_dme<float>(42);
  try {
    constexpr double kRatio = 0.5, kBudgetSec = 1800.0;
    const float mae_untrained = mae(score_all(dme_net, test, PipelineVariant{}, nullptr));
    TrainConfig tc;
    tc.epochs = 30;
    tc.rng_seed = 42;
    const auto t0 = Clock::now();
    const std::vector<double> loss = train_dme(dme_net, train, PipelineVariant{}, nullptr, tc);
    const double dt = seconds_since(t0);
    const float mae_trained = mae(score_all(dme_net, test, PipelineVariant{}, nullptr));
    std::vector<double> smooth;
    for (std::size_t i = 0; i + 5 <= loss.size(); ++i) {
      double m = 0.0;
      for (std::size_t j = 0; j < 5; ++j) m += loss[i + j];
      smooth.push_back(m / 5.0);
    }
    bool decreasing = loss.size() == 30;
    for (std::size_t i = 1; i < smooth.size(); ++i)
      decreasing = decreasing && smooth[i] < smooth[i - 1];
    const double ratio = mae_trained / std::max(mae_untrained, 1e-9f);
    gate(7, ratio <= kRatio && decreasing && dt < kBudgetSec,
         fmt("dme learning: held-out mae %.2f -> %.2f, ratio %.3f (<= 0.5), smoothed loss %s, %.0fs (< 1800s)",
             mae_untrained, mae_trained, ratio,
             decreasing ? "strictly decreasing" : "STALLS", dt));
  } catch (const std::exception& e) {
    gate(7, false, fmt("dme learning: exception: %s", e.what()));
  }

  // 8: on a clutter-boosted test split the attention-masked pipeline should
  // beat the bare estimator for most seeds. Smaller corpus (fresh seed, so
  // nothing overlaps what the AMG trained on) keeps the 12 trainings cheap.
  DmeNet battn_net;
  std::vector<SceneSample> rtest;
  try {
    constexpr int kEpochs = 6;
    CorpusConfig rc;
    rc.train_crowd = 40;
    rc.train_background = 16;
    rc.test_crowd = 20;
    rc.test_background = 8;
    rc.rng_seed = 7;
    const std::vector<SceneSample> rtrain = synth_split(rc, false);
    rtest = synth_split(rc, true);
    int wins = 0;
    double mean_mae[2] = {0.0, 0.0}, mean_mse[2] = {0.0, 0.0};
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      TrainConfig tc;
      tc.epochs = kEpochs;
      tc.rng_seed = seed;
      DmeNet plain = build_dme<float>(seed);
      train_dme(plain, rtrain, PipelineVariant{}, nullptr, tc);
      const auto rp = score_all(plain, rtest, PipelineVariant{}, nullptr);
      DmeNet att = build_dme<float>(seed);
      train_dme(att, rtrain, PipelineVariant{VariantKind::AMG_DME}, &amg, tc);
      const auto ra = score_all(att, rtest, PipelineVariant{VariantKind::AMG_DME}, &amg);
      const float mp = mae(rp), ma = mae(ra);
      wins += ma <= mp;
      mean_mae[0] += mp / 5.0;
      mean_mse[0] += mse(rp) / 5.0;
      mean_mae[1] += ma / 5.0;
      mean_mse[1] += mse(ra) / 5.0;
      per_seed += fmt(" s%llu %.1f/%.1f", static_cast<unsigned long long>(seed), mp, ma);
    }
    TrainConfig t1;
    t1.epochs = kEpochs;
    t1.rng_seed = 1;
    battn_net = build_dme<float>(1);
    train_dme(battn_net, rtrain, PipelineVariant{VariantKind::AMG_bAttn_DME, 0.1f}, &amg, t1);
    const auto rb = score_all(battn_net, rtest, PipelineVariant{VariantKind::AMG_bAttn_DME, 0.1f}, &amg);
    DmeNet attn = build_dme<float>(1);
    train_dme(attn, rtrain, PipelineVariant{VariantKind::AMG_attn_DME}, &amg, t1);
    const auto rj = score_all(attn, rtest, PipelineVariant{VariantKind::AMG_attn_DME}, &amg);
    note(fmt("%-14s %8s %8s   (distractor-heavy split, %d epochs; first two rows mean of 5 seeds)",
             "variant", "mae", "mse", kEpochs));
    note(fmt("%-14s %8.2f %8.2f", "dme", mean_mae[0], mean_mse[0]));
    note(fmt("%-14s %8.2f %8.2f", "amg-dme", mean_mae[1], mean_mse[1]));
    note(fmt("%-14s %8.2f %8.2f", "amg-battn-dme", static_cast<double>(mae(rb)),
             static_cast<double>(mse(rb))));
    note(fmt("%-14s %8.2f %8.2f", "amg-attn-dme", static_cast<double>(mae(rj)),
             static_cast<double>(mse(rj))));
    gate(8, wins >= 3,
         fmt("ablation direction: amg-dme mae <= dme mae on %d/5 seeds (need >= 3); per-seed dme/amg-dme:%s",
             wins, per_seed.c_str()));
  } catch (const std::exception& e) {
    gate(8, false, fmt("ablation direction: exception: %s", e.what()));
  }

  // 9: one binary-attention checkpoint swept over the three thresholds.
  try {
    bool finite = !rtest.empty();
    for (float t : {0.2f, 0.1f, 0.0f}) {
      const MetricsReport r = compute_metrics(
          score_all(battn_net, rtest, PipelineVariant{VariantKind::AMG_bAttn_DME, t}, &amg));
      bool row = std::isfinite(r.mae) && std::isfinite(r.mse) && std::isfinite(r.mean_psnr) &&
                 std::isfinite(r.mean_ssim);
      for (const auto& [level, v] : r.game) row = row && std::isfinite(v);
      note(fmt("t=%.1f  mae %7.2f  mse %7.2f  psnr %6.2f  ssim %6.4f  game0-3 %.2f/%.2f/%.2f/%.2f%s",
               t, r.mae, r.mse, r.mean_psnr, r.mean_ssim, r.game.at(0), r.game.at(1),
               r.game.at(2), r.game.at(3), row ? "" : "  NOT FINITE"));
      finite = finite && row;
    }
    gate(9, finite,
         "threshold sweep: battn checkpoint at t 0.2/0.1/0.0, three rows, all metrics finite");
  } catch (const std::exception& e) {
    gate(9, false, fmt("threshold sweep: exception: %s", e.what()));
  }

  // 10: bitwise-reproducible synthesis, identical reports on re-evaluation.
  try {
    fs::current_path(tmp / "s2");
    {
      RunConfig cfg;
      cfg.set("out_dir", "corpus");
      cmd_synth(cfg);
    }
    fs::current_path(cwd0);
    const bool synth_same = dirs_identical(tmp / "s1" / "corpus", tmp / "s2" / "corpus");
    save_checkpoint(amg.params, (tmp / "amg.ckpt").string());
    save_checkpoint(dme_net.params, (tmp / "dme.ckpt").string());
    auto run_eval = [&](const std::string& out) {
      RunConfig cfg;
      cfg.set("data_dir", corpus1);
      cfg.set("variant", "amg-dme");
      cfg.set("amg_checkpoint", (tmp / "amg.ckpt").string());
      cfg.set("dme_checkpoint", (tmp / "dme.ckpt").string());
      cfg.set("out_dir", out);
      cmd_eval(cfg);
      return slurp(fs::path(out) / "report.txt");
    };
    const std::string r1 = run_eval((tmp / "e1").string());
    const std::string r2 = run_eval((tmp / "e2").string());
    const bool eval_same = !r1.empty() && r1 == r2;
    gate(10, synth_same && eval_same,
         fmt("reproducibility: synth twice %s, eval twice %s",
             synth_same ? "byte-identical" : "DIFFERS",
             eval_same ? "identical reports" : "DIFFERS"));
  } catch (const std::exception& e) {
    fs::current_path(cwd0);
    gate(10, false, fmt("reproducibility: exception: %s", e.what()));
  }

  if (g_failures)
    std::printf("%d of 10 criteria failed\n", g_failures);
  else
    std::printf("all 10 criteria passed\n");
  return g_failures ? 1 : 0;
}
