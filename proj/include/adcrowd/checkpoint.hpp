#pragma once

#include <iosfwd>
#include <string>

#include "adcrowd/params.hpp"

namespace adcrowd {

// Checkpoint format: magic "ADCN", u32-LE version (= 1), u32-LE tensor
// count; per tensor: u32-LE name length, UTF-8 name, u32-LE rank, each dim
// u32-LE, then the values as row-major 32-bit LE floats. Adam moments and
// step_count are not stored.

void save_checkpoint(const NetworkParamsT<float>& params, std::ostream& out);
void save_checkpoint(const NetworkParamsT<float>& params, const std::string& path);

// Loads into an already-built parameter set. Every file tensor must match an
// existing entry by name and shape, and every entry must be present in the
// file; otherwise CheckpointMismatch. Malformed bytes raise FormatError.
void load_checkpoint(NetworkParamsT<float>& params, std::istream& in);
void load_checkpoint(NetworkParamsT<float>& params, const std::string& path);

}  // namespace adcrowd
