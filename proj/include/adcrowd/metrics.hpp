#pragma once

#include <map>
#include <string>
#include <vector>

#include "adcrowd/density_map.hpp"

namespace adcrowd {

// One scored sample. Maps are held at full input resolution; counts are the
// sums of the respective maps (prediction clamped at zero first).
struct EvalRecord {
  float predicted_count = 0.0f;
  float gt_count = 0.0f;
  DensityMap pred_map_fullres;  // scale 1
  DensityMap gt_map_fullres;    // scale 1
};

struct MetricsReport {
  float mae = 0.0f;
  float mse = 0.0f;
  float mean_psnr = 0.0f;
  float mean_ssim = 0.0f;
  std::map<int, float> game;  // levels 0..3
  int n_samples = 0;
};

// Clamps the prediction at zero, resizes it to the GT resolution, then
// rescales so the resize does not change its integral.
EvalRecord prepare_record(const DensityMap& pred, const DensityMap& gt_fullres);

float mae(const std::vector<EvalRecord>& records);

// Root of the mean squared count error (the counting-benchmark convention,
// not a per-pixel quantity).
float mse(const std::vector<EvalRecord>& records);

// Both maps are normalized by the GT peak (floored at 1e-8); identical maps
// return the cap value 100.0 dB.
float psnr(const EvalRecord& record);

// Mean local SSIM, 11x11 Gaussian window sigma=1.5, K1=0.01, K2=0.03,
// dynamic range = max(gt)-min(gt). Valid windows only, so maps must be at
// least 11x11.
float ssim(const EvalRecord& record);

// Grid Average Mean absolute Error: 2^level x 2^level cells, remainder
// pixels absorbed by the last row/column of cells. game(r, 0) == mae(r).
float game(const std::vector<EvalRecord>& records, int level);

MetricsReport compute_metrics(const std::vector<EvalRecord>& records);

// "metric=value" lines, one per metric, plus game0..game3.
std::string report_to_text(const MetricsReport& report);

}  // namespace adcrowd
