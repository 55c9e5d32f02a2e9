#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace adcrowd {

// Malformed or truncated file content. Carries the byte offset where parsing
// gave up; the CLI maps this to exit code 2.
struct FormatError : std::runtime_error {
  std::int64_t offset;  // -1 when no position applies
  explicit FormatError(const std::string& msg) : std::runtime_error(msg), offset(-1) {}
  FormatError(const std::string& msg, std::size_t off)
      : std::runtime_error(msg + " (at byte " + std::to_string(off) + ")"),
        offset(static_cast<std::int64_t>(off)) {}
};

// Checkpoint does not fit the network: unknown tensor name or wrong shape.
// The CLI maps this to exit code 4.
struct CheckpointMismatch : std::runtime_error {
  explicit CheckpointMismatch(const std::string& msg) : std::runtime_error(msg) {}
};

// A required input artifact (checkpoint, corpus) is absent. Exit code 3.
struct MissingArtifact : std::runtime_error {
  explicit MissingArtifact(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace adcrowd
