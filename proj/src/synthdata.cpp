#include "adcrowd/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adcrowd/errors.hpp"
#include "adcrowd/imageio.hpp"
#include "adcrowd/kernels.hpp"
#include "adcrowd/rng.hpp"

namespace adcrowd {

namespace {

// Smooth light field: a coarse random grid bilinearly upsampled.
Tensor background_field(SplitMix64& rng, int h, int w) {
  Tensor coarse({1, 1, 5, 5});
  for (auto& v : coarse.v) v = static_cast<float>(rng.uniform(0.70, 0.80));
  Tensor out({1, 1, h, w});
  kern::bilinear_resize_forward(coarse.data(), out.data(), 1, 1, 5, 5, h, w);
  return out;
}

// Canopy-like cluster of soft bright bumps. Brighter than the field where
// heads are darker, so clutter and heads sit on opposite sides of it.
void draw_distractor(Tensor& img, SplitMix64& rng, int h, int w) {
  const double cy = rng.uniform(3.0, h - 4.0);
  const double cx = rng.uniform(3.0, w - 4.0);
  const int n_bumps = 3 + static_cast<int>(rng.uniform_int(3));
  for (int i = 0; i < n_bumps; ++i) {
    const float by = static_cast<float>(cy + rng.uniform(-4.0, 4.0));
    const float bx = static_cast<float>(cx + rng.uniform(-4.0, 4.0));
    const float r = static_cast<float>(rng.uniform(1.5, 3.0));
    const float amp = static_cast<float>(rng.uniform(0.06, 0.12));
    const float feather = 2.0f;
    const int y0 = std::max(0, static_cast<int>(std::floor(by - r - feather)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(by + r + feather)));
    const int x0 = std::max(0, static_cast<int>(std::floor(bx - r - feather)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(bx + r + feather)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const float dy = y - by, dx = x - bx;
        const float d = std::sqrt(dy * dy + dx * dx);
        const float a = std::clamp((r + feather - d) / feather, 0.0f, 1.0f);
        img.v[static_cast<std::size_t>(y * w + x)] += amp * a;
      }
  }
}

void draw_head(Tensor& img, int h, int w, float cy, float cx, float r, float tone) {
  const float feather = 1.5f;
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - feather)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + r + feather)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - feather)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + r + feather)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const float dy = y - cy, dx = x - cx;
      const float d = std::sqrt(dy * dy + dx * dx);
      const float a = std::clamp((r + feather - d) / feather, 0.0f, 1.0f);
      if (a <= 0.0f) continue;
      float& px = img.v[static_cast<std::size_t>(y * w + x)];
      px = px * (1.0f - a) + tone * a;
    }
}

}  // namespace

SceneSample synth_scene(const CorpusConfig& config, int index, SceneLabel label) {
  const int h = config.image_size, w = config.image_size;
  check_shape(h % 4 == 0 && h >= 16, "synth_scene: image_size must be >= 16 and a multiple of 4");
  SplitMix64 rng = rng_for(config.rng_seed,
                           label == SceneLabel::crowd ? "scene.crowd" : "scene.background",
                           static_cast<std::uint64_t>(index));

  SceneSample s;
  s.label = label;
  s.image = background_field(rng, h, w);

  for (auto& v : s.image.v)
    v += static_cast<float>(rng.uniform(-config.noise_amplitude, config.noise_amplitude));

  const double boost = corpus_index_is_test(config, index) ? config.test_distractor_boost : 1.0;
  const double jitter = rng.uniform(0.6, 1.6);  // per-scene clutter spread
  const int n_distract =
      static_cast<int>(std::lround(config.distractor_density * jitter * boost * 3.0)) +
      static_cast<int>(rng.uniform_int(3));
  for (int i = 0; i < n_distract; ++i) draw_distractor(s.image, rng, h, w);

  if (label == SceneLabel::crowd) {
    const int n_heads =
        config.heads_min +
        static_cast<int>(rng.uniform_int(
            static_cast<std::uint64_t>(config.heads_max - config.heads_min + 1)));
    const int n_clusters = 1 + static_cast<int>(rng.uniform_int(4));
    std::vector<std::pair<double, double>> centers(n_clusters);
    const double margin = config.head_radius_max + 1.0;
    for (auto& c : centers) {
      c.first = rng.uniform(margin, h - 1 - margin);
      c.second = rng.uniform(margin, w - 1 - margin);
    }
    const double spread = config.image_size / 7.0;
    for (int i = 0; i < n_heads; ++i) {
      const auto& c = centers[rng.uniform_int(static_cast<std::uint64_t>(n_clusters))];
      const double y = std::clamp(c.first + rng.normal() * spread, margin, h - 1 - margin);
      const double x = std::clamp(c.second + rng.normal() * spread, margin, w - 1 - margin);
      s.heads.emplace_back(static_cast<float>(y), static_cast<float>(x));
    }
    // radius shrinks down the image to mimic perspective
    for (const auto& [hy, hx] : s.heads) {
      const double t = hy / std::max(1, h - 1);
      const float r = static_cast<float>(config.head_radius_max +
                                         (config.head_radius_min - config.head_radius_max) * t);
      const float tone = static_cast<float>(rng.uniform(0.02, 0.08));
      draw_head(s.image, h, w, hy, hx, r, tone);
    }
    s.gt_density = gt_density(s.heads, h, w, config.sigma);
  } else {
    s.gt_density = DensityMap{Tensor({1, 1, h, w}), 1};
  }

  for (auto& v : s.image.v) v = std::clamp(v, 0.0f, 1.0f);
  return s;
}

DensityMap gt_density(const std::vector<std::pair<float, float>>& heads, int h, int w,
                      double sigma) {
  check_shape(sigma > 0.0, "gt_density: sigma must be positive");
  DensityMap m{Tensor({1, 1, h, w}), 1};
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const int rad = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> wbuf;
  for (const auto& [cy, cx] : heads) {
    check_shape(cy >= 0 && cy < h && cx >= 0 && cx < w,
                "gt_density: head outside the image");
    const int y0 = std::max(0, static_cast<int>(std::floor(cy)) - rad);
    const int y1 = std::min(h - 1, static_cast<int>(std::floor(cy)) + rad);
    const int x0 = std::max(0, static_cast<int>(std::floor(cx)) - rad);
    const int x1 = std::min(w - 1, static_cast<int>(std::floor(cx)) + rad);
    wbuf.assign(static_cast<std::size_t>(y1 - y0 + 1) * (x1 - x0 + 1), 0.0);
    double total = 0.0;
    std::size_t i = 0;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x, ++i) {
        const double dy = y - cy, dx = x - cx;
        wbuf[i] = std::exp(-(dy * dy + dx * dx) * inv2s2);
        total += wbuf[i];
      }
    i = 0;
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x, ++i)
        m.grid.v[static_cast<std::size_t>(y * w + x)] += static_cast<float>(wbuf[i] / total);
  }
  return m;
}

std::vector<SceneSample> crop_patches(const SceneSample& sample) {
  const auto& s = sample.image.shape;
  const int h = s[2], w = s[3];
  check_shape(h % 2 == 0 && w % 2 == 0, "crop_patches: H and W must be even");
  const int hp = h / 2, wp = w / 2;

  std::vector<std::pair<int, int>> at = {{0, 0}, {0, wp}, {hp, 0}, {hp, wp}};
  // Five extra windows at fixed pseudo-random positions; the window set is
  // shared across samples so patching stays a pure function of the sample.
  SplitMix64 rng = rng_for(0, "crop_patches", 0);
  for (int i = 0; i < 5; ++i) {
    const int oy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h - hp + 1)));
    const int ox = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w - wp + 1)));
    at.emplace_back(oy, ox);
  }

  std::vector<SceneSample> out;
  out.reserve(18);
  for (const auto& [oy, ox] : at) {
    SceneSample p;
    p.image = Tensor({1, 1, hp, wp});
    p.gt_density = DensityMap{Tensor({1, 1, hp, wp}), 1};
    for (int y = 0; y < hp; ++y)
      for (int x = 0; x < wp; ++x) {
        p.image.v[static_cast<std::size_t>(y * wp + x)] =
            sample.image.v[static_cast<std::size_t>((oy + y) * w + ox + x)];
        p.gt_density.grid.v[static_cast<std::size_t>(y * wp + x)] =
            sample.gt_density.grid.v[static_cast<std::size_t>((oy + y) * w + ox + x)];
      }
    for (const auto& [hy, hx] : sample.heads)
      if (hy >= oy && hy < oy + hp && hx >= ox && hx < ox + wp)
        p.heads.emplace_back(hy - oy, hx - ox);
    p.label = p.heads.empty() ? SceneLabel::background : SceneLabel::crowd;
    out.push_back(std::move(p));
  }
  for (int i = 0; i < 9; ++i) {
    const SceneSample& src = out[static_cast<std::size_t>(i)];
    SceneSample m;
    m.image = Tensor({1, 1, hp, wp});
    m.gt_density = DensityMap{Tensor({1, 1, hp, wp}), 1};
    for (int y = 0; y < hp; ++y)
      for (int x = 0; x < wp; ++x) {
        m.image.v[static_cast<std::size_t>(y * wp + x)] =
            src.image.v[static_cast<std::size_t>(y * wp + (wp - 1 - x))];
        m.gt_density.grid.v[static_cast<std::size_t>(y * wp + x)] =
            src.gt_density.grid.v[static_cast<std::size_t>(y * wp + (wp - 1 - x))];
      }
    for (const auto& [hy, hx] : src.heads)
      m.heads.emplace_back(hy, static_cast<float>(wp - 1) - hx);
    m.label = src.label;
    out.push_back(std::move(m));
  }
  return out;
}

namespace {

std::string sample_stem(const CorpusConfig& c, int index, SceneLabel label) {
  const bool test = corpus_index_is_test(c, index);
  std::ostringstream ss;
  ss << (test ? "test" : "train") << "_" << label_name(label) << "_";
  ss.width(4);
  ss.fill('0');
  ss << index;
  return ss.str();
}

}  // namespace

void write_corpus(const CorpusConfig& config, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  fs::create_directories(fs::path(dir) / "density", ec);
  if (ec) throw std::runtime_error("cannot create corpus directories under " + dir);

  struct Group {
    int begin, count;
    SceneLabel label;
    const char* split;
  };
  const int tc = config.train_crowd, tb = config.train_background, ec2 = config.test_crowd;
  const std::vector<Group> groups = {
      {0, tc, SceneLabel::crowd, "train"},
      {tc, tb, SceneLabel::background, "train"},
      {tc + tb, ec2, SceneLabel::crowd, "test"},
      {tc + tb + ec2, config.test_background, SceneLabel::background, "test"},
  };

  std::ostringstream man_train, man_test;
  for (const auto& g : groups) {
    for (int i = 0; i < g.count; ++i) {
      const int index = g.begin + i;
      const SceneSample s = synth_scene(config, index, g.label);
      const std::string stem = sample_stem(config, index, g.label);
      const std::string img_rel = "images/" + stem + ".pgm";
      const std::string gt_rel = "density/" + stem + ".dmap";
      write_file((fs::path(dir) / img_rel).string(), write_pgm(s.image));
      write_file((fs::path(dir) / gt_rel).string(), write_dmap(s.gt_density));
      std::ostringstream& man = (std::string(g.split) == "train") ? man_train : man_test;
      man << index << "," << label_name(g.label) << "," << img_rel << "," << gt_rel << "\n";
    }
  }
  write_file((fs::path(dir) / "manifest_train.txt").string(), man_train.str());
  write_file((fs::path(dir) / "manifest_test.txt").string(), man_test.str());
}

std::vector<ManifestEntry> read_manifest(const std::string& dir, const std::string& split) {
  namespace fs = std::filesystem;
  const std::string path = (fs::path(dir) / ("manifest_" + split + ".txt")).string();
  std::ifstream f(path);
  if (!f) throw MissingArtifact("manifest not found: " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string idx, label, img, dmap;
    if (!std::getline(ss, idx, ',') || !std::getline(ss, label, ',') ||
        !std::getline(ss, img, ',') || !std::getline(ss, dmap))
      throw FormatError("bad manifest line " + std::to_string(lineno) + " in " + path, 0);
    ManifestEntry e;
    e.index = std::stoi(idx);
    if (label == "crowd")
      e.label = SceneLabel::crowd;
    else if (label == "background")
      e.label = SceneLabel::background;
    else
      throw FormatError("bad label '" + label + "' in " + path, 0);
    e.path_image = img;
    e.path_dmap = dmap;
    out.push_back(std::move(e));
  }
  return out;
}

SceneSample load_sample(const std::string& dir, const ManifestEntry& e) {
  namespace fs = std::filesystem;
  SceneSample s;
  s.image = read_pgm(read_file((fs::path(dir) / e.path_image).string()));
  s.gt_density = read_dmap(read_file((fs::path(dir) / e.path_dmap).string()));
  s.label = e.label;
  return s;
}

}  // namespace adcrowd
