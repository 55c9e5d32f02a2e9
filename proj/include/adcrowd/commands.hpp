#pragma once

#include <string>
#include <vector>

#include "adcrowd/config.hpp"
#include "adcrowd/metrics.hpp"

namespace adcrowd {

// Subcommand bodies. They throw on failure (FormatError, MissingArtifact,
// CheckpointMismatch, std::invalid_argument); the binary maps exceptions to
// exit codes. Each writes its fully resolved config next to its outputs.

void cmd_synth(RunConfig& cfg);
void cmd_train_amg(RunConfig& cfg);
void cmd_train_dme(RunConfig& cfg);

// Returns the computed report (also written to <out_dir>/report.txt).
MetricsReport cmd_eval(RunConfig& cfg);

// Prints the count (and the AMG label when the variant has one); writes
// pred.dmap plus attention.pgm.
void cmd_infer(RunConfig& cfg);

// Prints the per-op table; returns true iff every check passed.
bool cmd_gradcheck(bool with_corrupt_fixture = false);

// Manifest-driven sample loading for one split ("train" or "test").
std::vector<SceneSample> load_split(const std::string& dir, const std::string& split);

}  // namespace adcrowd
