#pragma once

#include <algorithm>

#include "adcrowd/tensor.hpp"

namespace adcrowd {

// Single-channel grid whose sum is the object count. scale is the
// downsampling factor relative to the source image (1 = full resolution).
struct DensityMap {
  Tensor grid;  // [1, 1, h, w]
  int scale = 1;
};

// Sum of entries with negatives clamped to zero (predictions may dip below
// zero; ground truth never does).
inline double count_from_density(const DensityMap& m) {
  double s = 0.0;
  for (float v : m.grid.v) s += std::max(v, 0.0f);
  return s;
}

// Sum-preserving block pooling, full-res GT -> network output scale.
inline DensityMap downsample_density(const DensityMap& m, int factor = 4) {
  const auto& s = m.grid.shape;
  check_shape(s.size() == 4 && s[0] == 1 && s[1] == 1,
              "downsample_density: grid must be [1,1,h,w]");
  check_shape(factor >= 1 && s[2] % factor == 0 && s[3] % factor == 0,
              "downsample_density: dims " + shape_str(s) + " not divisible by " +
                  std::to_string(factor));
  const int h = s[2], w = s[3], oh = h / factor, ow = w / factor;
  DensityMap out{Tensor({1, 1, oh, ow}), m.scale * factor};
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      float acc = 0.0f;
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx)
          acc += m.grid.v[static_cast<std::size_t>((oy * factor + dy) * w + ox * factor + dx)];
      out.grid.v[static_cast<std::size_t>(oy * ow + ox)] = acc;
    }
  return out;
}

}  // namespace adcrowd
