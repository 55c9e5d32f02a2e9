#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "adcrowd/errors.hpp"
#include "adcrowd/imageio.hpp"
#include "adcrowd/synthdata.hpp"

using namespace adcrowd;

namespace {

CorpusConfig tiny_config() {
  CorpusConfig c;
  c.image_size = 32;
  c.train_crowd = 4;
  c.train_background = 2;
  c.test_crowd = 2;
  c.test_background = 1;
  return c;
}

double tsum(const Tensor& t) {
  double s = 0;
  for (float v : t.v) s += v;
  return s;
}

}  // namespace

TEST_CASE("synth_scene deterministic and bounded") {
  CorpusConfig c;
  const SceneSample a = synth_scene(c, 3, SceneLabel::crowd);
  const SceneSample b = synth_scene(c, 3, SceneLabel::crowd);
  CHECK(a.image.v == b.image.v);
  CHECK(a.heads == b.heads);
  CHECK(a.gt_density.grid.v == b.gt_density.grid.v);

  const SceneSample bg = synth_scene(c, 3, SceneLabel::background);
  CHECK(bg.heads.empty());
  for (float v : bg.gt_density.grid.v) CHECK(v == 0.0f);
}

TEST_CASE("synth_scene pixel range over 1000 fuzz indices") {
  CorpusConfig c;
  c.image_size = 32;
  for (int i = 0; i < 1000; ++i) {
    const auto label = (i % 3 == 0) ? SceneLabel::background : SceneLabel::crowd;
    const SceneSample s = synth_scene(c, i, label);
    for (float v : s.image.v) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
    }
  }
}

TEST_CASE("gt_density sums to head count") {
  {
    DensityMap m = gt_density({{32.0f, 32.0f}}, 64, 64, 2.0);
    CHECK(tsum(m.grid) == doctest::Approx(1.0).epsilon(1e-6));
  }
  {
    DensityMap m = gt_density({{0.0f, 0.0f}}, 64, 64, 2.0);
    CHECK(tsum(m.grid) == doctest::Approx(1.0).epsilon(1e-6));
  }
  {
    DensityMap m = gt_density({}, 16, 16, 2.0);
    for (float v : m.grid.v) CHECK(v == 0.0f);
  }
  CHECK_THROWS_AS(gt_density({{70.0f, 3.0f}}, 64, 64, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(gt_density({{3.0f, 3.0f}}, 64, 64, 0.0), std::invalid_argument);
}

TEST_CASE("crop_patches geometry and mass") {
  CorpusConfig c;
  const SceneSample s = synth_scene(c, 0, SceneLabel::crowd);
  const auto patches = crop_patches(s);
  REQUIRE(patches.size() == 18);
  for (const auto& p : patches) {
    CHECK(p.image.shape == std::vector<int>{1, 1, 32, 32});
    CHECK(p.gt_density.grid.shape == std::vector<int>{1, 1, 32, 32});
  }

  double quarters = 0;
  for (int i = 0; i < 4; ++i) quarters += tsum(patches[i].gt_density.grid);
  CHECK(quarters == doctest::Approx(tsum(s.gt_density.grid)).epsilon(1e-6));

  // second half mirrors the first horizontally
  for (int i = 0; i < 9; ++i) {
    const auto& orig = patches[i].image;
    const auto& mir = patches[i + 9].image;
    for (int r = 0; r < 32; ++r)
      for (int col = 0; col < 32; ++col)
        CHECK(mir.at(0, 0, r, col) == orig.at(0, 0, r, 31 - col));
  }

  SceneSample odd;
  odd.image = Tensor({1, 1, 31, 31});
  odd.gt_density = DensityMap{Tensor({1, 1, 31, 31}), 1};
  CHECK_THROWS_AS(crop_patches(odd), std::invalid_argument);
}

TEST_CASE("downsample_density block sums") {
  DensityMap m{Tensor::full({1, 1, 8, 8}, 0.5f), 1};
  DensityMap d = downsample_density(m, 4);
  CHECK(d.scale == 4);
  CHECK(d.grid.shape == std::vector<int>{1, 1, 2, 2});
  for (float v : d.grid.v) CHECK(v == doctest::Approx(8.0f));
  CHECK(tsum(d.grid) == doctest::Approx(tsum(m.grid)).epsilon(1e-6));
  CHECK(count_from_density(d) == doctest::Approx(count_from_density(m)).epsilon(1e-6));

  DensityMap bad{Tensor({1, 1, 6, 6}), 1};
  CHECK_THROWS_AS(downsample_density(bad, 4), std::invalid_argument);
}

TEST_CASE("pgm round-trip within quantization") {
  SceneSample s = synth_scene(tiny_config(), 1, SceneLabel::crowd);
  const std::string bytes = write_pgm(s.image);
  const Tensor back = read_pgm(bytes);
  REQUIRE(back.shape == s.image.shape);
  for (std::size_t i = 0; i < back.v.size(); ++i)
    CHECK(std::abs(back.v[i] - s.image.v[i]) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("pgm parse errors carry byte offsets") {
  {
    try {
      read_pgm("P6 2 2 255 xxxx");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset == 0);
    }
  }
  CHECK_THROWS_AS(read_pgm("P5\n2 2\n65536\n"), FormatError);
  CHECK_THROWS_AS(read_pgm("P5\n2 2\n255\nab"), FormatError);  // truncated pixels
}

TEST_CASE("dmap round-trip is exact") {
  DensityMap m{Tensor({1, 1, 3, 5}), 4};
  for (std::size_t i = 0; i < m.grid.v.size(); ++i) m.grid.v[i] = float(i) * 0.337f - 1.0f;
  const std::string bytes = write_dmap(m);
  const DensityMap back = read_dmap(bytes);
  CHECK(back.scale == 4);
  CHECK(back.grid.shape == m.grid.shape);
  CHECK(back.grid.v == m.grid.v);

  CHECK_THROWS_AS(read_dmap(bytes.substr(0, bytes.size() - 2)), FormatError);
  CHECK_THROWS_AS(read_dmap("DMAx" + bytes.substr(4)), FormatError);
}

TEST_CASE("corpus write, manifest, reload") {
  const std::string dir = "t_corpus_unit";
  std::filesystem::remove_all(dir);
  const CorpusConfig c = tiny_config();
  write_corpus(c, dir);

  const auto train = read_manifest(dir, "train");
  const auto test = read_manifest(dir, "test");
  CHECK(train.size() == 6);
  CHECK(test.size() == 3);

  int crowd = 0;
  for (const auto& e : train) crowd += (e.label == SceneLabel::crowd);
  CHECK(crowd == 4);

  const SceneSample disk = load_sample(dir, train[0]);
  const SceneSample fresh = synth_scene(c, train[0].index, train[0].label);
  CHECK(disk.gt_density.grid.v == fresh.gt_density.grid.v);
  for (std::size_t i = 0; i < disk.image.v.size(); ++i)
    CHECK(std::abs(disk.image.v[i] - fresh.image.v[i]) <= 0.5f / 255.0f + 1e-6f);

  CHECK_THROWS_AS(read_manifest(dir, "validation"), MissingArtifact);
  std::filesystem::remove_all(dir);
}

TEST_CASE("write_corpus twice is byte-identical") {
  const std::string a = "t_corpus_a", b = "t_corpus_b";
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
  const CorpusConfig c = tiny_config();
  write_corpus(c, a);
  write_corpus(c, b);
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a);
    CHECK(read_file(entry.path().string()) ==
          read_file((std::filesystem::path(b) / rel).string()));
  }
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}
