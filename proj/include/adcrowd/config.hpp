#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "adcrowd/params.hpp"
#include "adcrowd/synthdata.hpp"

namespace adcrowd {

// Flat key=value run configuration. Getters take the default as a string so
// the resolved file echoes defaults exactly as written here. Every key read
// is recorded; finish() rejects file keys that no getter asked for.
class RunConfig {
 public:
  RunConfig() = default;
  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text);

  // flag override (--seed, --out); wins over the file value
  void set(const std::string& key, const std::string& value);

  std::string get_str(const std::string& key, const std::string& def);
  int get_int(const std::string& key, const std::string& def);
  std::uint64_t get_u64(const std::string& key, const std::string& def);
  double get_double(const std::string& key, const std::string& def);
  bool get_flag(const std::string& key, const std::string& def);  // 0 or 1

  bool has(const std::string& key) const { return raw_.count(key) != 0; }

  // throws if the file contained keys nothing consumed
  void finish() const;

  // sorted key=value lines of everything consumed, with final values
  std::string resolved_text() const;

 private:
  const std::string& pick(const std::string& key, const std::string& def);

  std::map<std::string, std::string> raw_;
  std::map<std::string, std::string> resolved_;
  std::set<std::string> consumed_;
};

// Shared key blocks. Each reads its keys (with defaults) from the config.
CorpusConfig corpus_from_config(RunConfig& cfg);
TrainConfig train_from_config(RunConfig& cfg, const std::string& def_epochs,
                              const std::string& def_batch);

}  // namespace adcrowd
