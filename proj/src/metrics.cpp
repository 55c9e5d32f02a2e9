#include "adcrowd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "adcrowd/kernels.hpp"
#include "adcrowd/tensor.hpp"

namespace adcrowd {

namespace {

double map_sum(const Tensor& t) {
  double s = 0.0;
  for (float v : t.v) s += v;
  return s;
}

void require_records(const std::vector<EvalRecord>& records, const char* who) {
  check_shape(!records.empty(), std::string(who) + ": need at least one record");
}

}  // namespace

EvalRecord prepare_record(const DensityMap& pred, const DensityMap& gt_fullres) {
  const auto& ps = pred.grid.shape;
  const auto& gs = gt_fullres.grid.shape;
  check_shape(ps.size() == 4 && gs.size() == 4, "prepare_record: maps must be [1,1,H,W]");
  check_shape(gt_fullres.scale == 1, "prepare_record: GT must be at scale 1");
  check_shape(ps[2] * pred.scale == gs[2] && ps[3] * pred.scale == gs[3],
              "prepare_record: prediction " + shape_str(ps) + " at scale " +
                  std::to_string(pred.scale) + " does not cover GT " + shape_str(gs));

  Tensor clamped = pred.grid;
  for (float& v : clamped.v) v = std::max(v, 0.0f);
  const double sum_before = map_sum(clamped);

  EvalRecord rec;
  rec.gt_map_fullres = gt_fullres;
  if (pred.scale == 1) {
    rec.pred_map_fullres = DensityMap{std::move(clamped), 1};
  } else {
    Tensor full({1, 1, gs[2], gs[3]});
    kern::bilinear_resize_forward(clamped.data(), full.data(), 1, 1, ps[2], ps[3], gs[2],
                                  gs[3]);
    const double sum_after = map_sum(full);
    if (sum_after > 0.0) {
      const float k = static_cast<float>(sum_before / sum_after);
      for (float& v : full.v) v *= k;
    }
    rec.pred_map_fullres = DensityMap{std::move(full), 1};
  }
  rec.predicted_count = static_cast<float>(map_sum(rec.pred_map_fullres.grid));
  rec.gt_count = static_cast<float>(map_sum(rec.gt_map_fullres.grid));
  return rec;
}

float mae(const std::vector<EvalRecord>& records) {
  require_records(records, "mae");
  double s = 0.0;
  for (const auto& r : records) s += std::abs(static_cast<double>(r.predicted_count) - r.gt_count);
  return static_cast<float>(s / static_cast<double>(records.size()));
}

float mse(const std::vector<EvalRecord>& records) {
  require_records(records, "mse");
  double s = 0.0;
  for (const auto& r : records) {
    const double d = static_cast<double>(r.predicted_count) - r.gt_count;
    s += d * d;
  }
  return static_cast<float>(std::sqrt(s / static_cast<double>(records.size())));
}

float psnr(const EvalRecord& record) {
  const Tensor& p = record.pred_map_fullres.grid;
  const Tensor& g = record.gt_map_fullres.grid;
  check_shape(p.same_shape(g) && p.numel() > 0, "psnr: maps must share a nonzero shape");
  double peak = 0.0;
  for (float v : g.v) peak = std::max(peak, static_cast<double>(v));
  const double inv = 1.0 / std::max(peak, 1e-8);
  double se = 0.0;
  for (std::size_t i = 0; i < p.v.size(); ++i) {
    const double d = (p.v[i] - g.v[i]) * inv;
    se += d * d;
  }
  const double mse_pix = se / static_cast<double>(p.v.size());
  if (mse_pix <= 0.0) return 100.0f;
  return static_cast<float>(std::min(100.0, -10.0 * std::log10(mse_pix)));
}

float ssim(const EvalRecord& record) {
  const Tensor& p = record.pred_map_fullres.grid;
  const Tensor& g = record.gt_map_fullres.grid;
  check_shape(p.same_shape(g), "ssim: maps must share a shape");
  const int h = p.shape[2], w = p.shape[3];
  constexpr int win = 11, half = 5;
  check_shape(h >= win && w >= win, "ssim: maps must be at least 11x11");

  double kernel[win * win];
  double ksum = 0.0;
  const double sigma = 1.5;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) {
      const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      kernel[(dy + half) * win + (dx + half)] = v;
      ksum += v;
    }
  for (double& v : kernel) v /= ksum;

  double gmin = g.v[0], gmax = g.v[0];
  for (float v : g.v) {
    gmin = std::min(gmin, static_cast<double>(v));
    gmax = std::max(gmax, static_cast<double>(v));
  }
  const double range = std::max(gmax - gmin, 1e-8);
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  const float* pp = p.data();
  const float* gp = g.data();
  double total = 0.0;
  std::int64_t windows = 0;
  for (int y = half; y < h - half; ++y)
    for (int x = half; x < w - half; ++x) {
      double mp = 0, mg = 0, vp = 0, vg = 0, cov = 0;
      for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
          const double k = kernel[(dy + half) * win + (dx + half)];
          const double a = pp[(y + dy) * w + (x + dx)];
          const double b = gp[(y + dy) * w + (x + dx)];
          mp += k * a;
          mg += k * b;
          vp += k * a * a;
          vg += k * b * b;
          cov += k * a * b;
        }
      vp -= mp * mp;
      vg -= mg * mg;
      cov -= mp * mg;
      total += ((2 * mp * mg + c1) * (2 * cov + c2)) /
               ((mp * mp + mg * mg + c1) * (vp + vg + c2));
      ++windows;
    }
  return static_cast<float>(total / static_cast<double>(windows));
}

float game(const std::vector<EvalRecord>& records, int level) {
  require_records(records, "game");
  check_shape(level >= 0 && level <= 3, "game: level must be in 0..3");
  const int cells = 1 << level;
  double total = 0.0;
  for (const auto& r : records) {
    const Tensor& p = r.pred_map_fullres.grid;
    const Tensor& g = r.gt_map_fullres.grid;
    check_shape(p.same_shape(g), "game: maps must share a shape");
    const int h = p.shape[2], w = p.shape[3];
    const int bh = h / cells, bw = w / cells;
    check_shape(bh >= 1 && bw >= 1, "game: maps too small for the grid");
    double rec_err = 0.0;
    for (int cy = 0; cy < cells; ++cy) {
      const int y0 = cy * bh;
      const int y1 = (cy == cells - 1) ? h : y0 + bh;
      for (int cx = 0; cx < cells; ++cx) {
        const int x0 = cx * bw;
        const int x1 = (cx == cells - 1) ? w : x0 + bw;
        double cp = 0.0, cg = 0.0;
        for (int y = y0; y < y1; ++y)
          for (int x = x0; x < x1; ++x) {
            cp += p.data()[y * w + x];
            cg += g.data()[y * w + x];
          }
        rec_err += std::abs(cp - cg);
      }
    }
    total += rec_err;
  }
  return static_cast<float>(total / static_cast<double>(records.size()));
}

MetricsReport compute_metrics(const std::vector<EvalRecord>& records) {
  require_records(records, "compute_metrics");
  MetricsReport rep;
  rep.n_samples = static_cast<int>(records.size());
  rep.mae = mae(records);
  rep.mse = mse(records);
  double sp = 0.0, ss = 0.0;
  for (const auto& r : records) {
    sp += psnr(r);
    ss += ssim(r);
  }
  rep.mean_psnr = static_cast<float>(sp / static_cast<double>(records.size()));
  rep.mean_ssim = static_cast<float>(ss / static_cast<double>(records.size()));
  for (int level = 0; level <= 3; ++level) rep.game[level] = game(records, level);
  return rep;
}

std::string report_to_text(const MetricsReport& report) {
  char buf[64];
  std::string out;
  auto line = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s=%.6f\n", key, v);
    out += buf;
  };
  out += "n_samples=" + std::to_string(report.n_samples) + "\n";
  line("mae", report.mae);
  line("mse", report.mse);
  line("psnr", report.mean_psnr);
  line("ssim", report.mean_ssim);
  for (const auto& [level, v] : report.game) {
    std::snprintf(buf, sizeof(buf), "game%d=%.6f\n", level, v);
    out += buf;
  }
  return out;
}

}  // namespace adcrowd
