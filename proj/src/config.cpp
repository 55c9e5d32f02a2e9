#include "adcrowd/config.hpp"

#include <cerrno>
#include <cstdlib>

#include "adcrowd/errors.hpp"
#include "adcrowd/imageio.hpp"

namespace adcrowd {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return s.substr(a, b - a);
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const MissingArtifact&) {
    throw FormatError("config file not found: " + path);
  }
  return from_text(text);
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = trim(text.substr(pos, eol - pos));
    if (!line.empty() && line[0] != '#') {
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw FormatError("config line has no '='", static_cast<std::int64_t>(pos));
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw FormatError("config line has an empty key", static_cast<std::int64_t>(pos));
      if (!cfg.raw_.emplace(key, value).second)
        throw FormatError("duplicate config key '" + key + "'",
                          static_cast<std::int64_t>(pos));
    }
    pos = eol + 1;
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  raw_[key] = value;
}

const std::string& RunConfig::pick(const std::string& key, const std::string& def) {
  consumed_.insert(key);
  const auto it = raw_.find(key);
  resolved_[key] = (it != raw_.end()) ? it->second : def;
  return resolved_[key];
}

std::string RunConfig::get_str(const std::string& key, const std::string& def) {
  return pick(key, def);
}

int RunConfig::get_int(const std::string& key, const std::string& def) {
  const std::string& s = pick(key, def);
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (errno != 0 || end == s.c_str() || *end != '\0' || v < INT32_MIN || v > INT32_MAX)
    throw FormatError("config key '" + key + "': expected integer, got '" + s + "'");
  return static_cast<int>(v);
}

std::uint64_t RunConfig::get_u64(const std::string& key, const std::string& def) {
  const std::string& s = pick(key, def);
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (errno != 0 || end == s.c_str() || *end != '\0' || s.find('-') != std::string::npos)
    throw FormatError("config key '" + key + "': expected unsigned integer, got '" + s + "'");
  return static_cast<std::uint64_t>(v);
}

double RunConfig::get_double(const std::string& key, const std::string& def) {
  const std::string& s = pick(key, def);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || end == s.c_str() || *end != '\0')
    throw FormatError("config key '" + key + "': expected number, got '" + s + "'");
  return v;
}

bool RunConfig::get_flag(const std::string& key, const std::string& def) {
  const std::string& s = pick(key, def);
  if (s == "0") return false;
  if (s == "1") return true;
  throw FormatError("config key '" + key + "': expected 0 or 1, got '" + s + "'");
}

void RunConfig::finish() const {
  for (const auto& [key, value] : raw_)
    if (consumed_.count(key) == 0)
      throw FormatError("unknown config key '" + key + "'");
}

std::string RunConfig::resolved_text() const {
  std::string out;
  for (const auto& [key, value] : resolved_) out += key + "=" + value + "\n";
  return out;
}

CorpusConfig corpus_from_config(RunConfig& cfg) {
  CorpusConfig c;
  c.image_size = cfg.get_int("image_size", "64");
  c.train_crowd = cfg.get_int("train_crowd", "200");
  c.train_background = cfg.get_int("train_background", "80");
  c.test_crowd = cfg.get_int("test_crowd", "50");
  c.test_background = cfg.get_int("test_background", "20");
  c.heads_min = cfg.get_int("heads_min", "5");
  c.heads_max = cfg.get_int("heads_max", "60");
  c.head_radius_min = cfg.get_double("head_radius_min", "2.0");
  c.head_radius_max = cfg.get_double("head_radius_max", "4.0");
  c.distractor_density = cfg.get_double("distractor_density", "1.0");
  c.test_distractor_boost = cfg.get_double("test_distractor_boost", "1.8");
  c.noise_amplitude = cfg.get_double("noise_amplitude", "0.02");
  c.sigma = cfg.get_double("sigma", "2.0");
  c.rng_seed = cfg.get_u64("rng_seed", "42");
  return c;
}

TrainConfig train_from_config(RunConfig& cfg, const std::string& def_epochs,
                              const std::string& def_batch) {
  TrainConfig t;
  t.learning_rate = cfg.get_double("learning_rate", "1e-5");
  t.batch_size = cfg.get_int("batch_size", def_batch);
  t.epochs = cfg.get_int("epochs", def_epochs);
  t.rng_seed = cfg.get_u64("rng_seed", "42");
  check_shape(t.batch_size >= 1 && t.epochs >= 0 && t.learning_rate > 0,
              "train config: batch_size >= 1, epochs >= 0, learning_rate > 0");
  return t;
}

}  // namespace adcrowd
