#pragma once

#include <string>

#include "adcrowd/density_map.hpp"
#include "adcrowd/tensor.hpp"

namespace adcrowd {

// PGM (binary P5, maxval 255). Images are [1,1,H,W] with values in [0,1];
// bytes are produced by nearest rounding of v*255. Malformed input raises
// FormatError carrying the byte offset.
std::string write_pgm(const Tensor& image);
Tensor read_pgm(const std::string& bytes);

// DMAP: "DMAP", u32-LE height, u32-LE width, u32-LE scale, then row-major
// 32-bit LE floats. Round-trips exactly.
std::string write_dmap(const DensityMap& map);
DensityMap read_dmap(const std::string& bytes);

void write_file(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace adcrowd
