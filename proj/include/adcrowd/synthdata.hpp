#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "adcrowd/density_map.hpp"
#include "adcrowd/tensor.hpp"

namespace adcrowd {

enum class SceneLabel { crowd, background };

inline const char* label_name(SceneLabel l) {
  return l == SceneLabel::crowd ? "crowd" : "background";
}

struct SceneSample {
  Tensor image;  // [1,1,H,W], values in [0,1]
  std::vector<std::pair<float, float>> heads;  // (y, x)
  DensityMap gt_density;                       // scale 1
  SceneLabel label = SceneLabel::background;
};

struct CorpusConfig {
  int image_size = 64;  // H = W, multiple of 4
  int train_crowd = 200;
  int train_background = 80;
  int test_crowd = 50;
  int test_background = 20;
  int heads_min = 5;
  int heads_max = 60;
  double head_radius_min = 2.0;  // pixels, at the bottom of the image
  double head_radius_max = 4.0;  // at the top
  double distractor_density = 1.0;
  double test_distractor_boost = 1.8;  // clutter multiplier on the test split
  double noise_amplitude = 0.02;
  double sigma = 2.0;  // GT density Gaussian, pixels
  std::uint64_t rng_seed = 42;
};

// Scene index layout (train/test disjoint by construction):
//   [0, train_crowd)                            train crowd
//   [train_crowd, +train_background)            train background
//   [.., +test_crowd)                           test crowd
//   [.., +test_background)                      test background
inline int corpus_total(const CorpusConfig& c) {
  return c.train_crowd + c.train_background + c.test_crowd + c.test_background;
}
inline bool corpus_index_is_test(const CorpusConfig& c, int index) {
  return index >= c.train_crowd + c.train_background;
}

// Deterministic in (rng_seed, index, label).
SceneSample synth_scene(const CorpusConfig& config, int index, SceneLabel label);

// Per-head truncated-and-renormalized Gaussians: each head contributes
// exactly 1.0 to the sum no matter how much of its kernel leaves the image.
DensityMap gt_density(const std::vector<std::pair<float, float>>& heads, int h, int w,
                      double sigma);

// 4 quarters + 5 fixed pseudo-random windows, then the horizontal mirror of
// each: 18 patches of H/2 x W/2. Patch GT is a crop of the map, so the four
// quarters partition the full sum.
std::vector<SceneSample> crop_patches(const SceneSample& sample);

struct ManifestEntry {
  int index = 0;
  SceneLabel label = SceneLabel::background;
  std::string path_image;
  std::string path_dmap;
};

// Writes PGM images, DMAP ground truths, manifest_train.txt and
// manifest_test.txt ("index,label,path_image,path_dmap" lines) plus the
// per-sample files under images/ and density/.
void write_corpus(const CorpusConfig& config, const std::string& dir);

std::vector<ManifestEntry> read_manifest(const std::string& dir, const std::string& split);

// Loads image + GT from disk; heads are not stored, so the list comes back
// empty and the label from the manifest.
SceneSample load_sample(const std::string& dir, const ManifestEntry& e);

}  // namespace adcrowd
