#include "adcrowd/imageio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "adcrowd/errors.hpp"

namespace adcrowd {

namespace {

struct ByteReader {
  const std::string& b;
  std::size_t pos = 0;

  bool eof() const { return pos >= b.size(); }
  unsigned char peek() const { return static_cast<unsigned char>(b[pos]); }

  void need(std::size_t n, const char* what) {
    if (pos + n > b.size())
      throw FormatError(std::string("truncated reading ") + what, pos);
  }

  // whitespace and '#' comments between PGM header tokens
  void skip_space() {
    while (!eof()) {
      if (std::isspace(peek())) {
        ++pos;
      } else if (peek() == '#') {
        while (!eof() && peek() != '\n') ++pos;
      } else {
        break;
      }
    }
  }

  int pgm_int(const char* what) {
    skip_space();
    if (eof() || !std::isdigit(peek()))
      throw FormatError(std::string("expected integer for ") + what, pos);
    long v = 0;
    while (!eof() && std::isdigit(peek())) {
      v = v * 10 + (peek() - '0');
      if (v > 1 << 20) throw FormatError(std::string("implausible ") + what, pos);
      ++pos;
    }
    return static_cast<int>(v);
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos])) |
                      (static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 1])) << 8) |
                      (static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 2])) << 16) |
                      (static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 3])) << 24);
    pos += 4;
    return v;
  }
};

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

}  // namespace

std::string write_pgm(const Tensor& image) {
  const auto& s = image.shape;
  check_shape(s.size() == 4 && s[0] == 1 && s[1] == 1, "write_pgm: image must be [1,1,H,W]");
  const int h = s[2], w = s[3];
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(h) * w);
  for (float v : image.v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
  }
  return out;
}

Tensor read_pgm(const std::string& bytes) {
  ByteReader r{bytes};
  r.need(2, "magic");
  if (bytes[0] != 'P' || bytes[1] != '5')
    throw FormatError("PGM magic mismatch, expected \"P5\"", 0);
  r.pos = 2;
  const int w = r.pgm_int("width");
  const int h = r.pgm_int("height");
  const std::size_t maxval_at = r.pos;
  const int maxval = r.pgm_int("maxval");
  if (maxval != 255)
    throw FormatError("unsupported PGM maxval " + std::to_string(maxval), maxval_at);
  if (r.eof() || !std::isspace(r.peek()))
    throw FormatError("expected single whitespace before PGM pixel data", r.pos);
  ++r.pos;
  r.need(static_cast<std::size_t>(h) * w, "pixel data");
  Tensor img({1, 1, h, w});
  for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i)
    img.v[i] = static_cast<float>(static_cast<unsigned char>(bytes[r.pos + i])) / 255.0f;
  return img;
}

std::string write_dmap(const DensityMap& map) {
  const auto& s = map.grid.shape;
  check_shape(s.size() == 4 && s[0] == 1 && s[1] == 1, "write_dmap: grid must be [1,1,h,w]");
  std::string out = "DMAP";
  put_u32(out, static_cast<std::uint32_t>(s[2]));
  put_u32(out, static_cast<std::uint32_t>(s[3]));
  put_u32(out, static_cast<std::uint32_t>(map.scale));
  for (float f : map.grid.v) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(out, v);
  }
  return out;
}

DensityMap read_dmap(const std::string& bytes) {
  ByteReader r{bytes};
  r.need(4, "magic");
  if (bytes.compare(0, 4, "DMAP") != 0)
    throw FormatError("DMAP magic mismatch", 0);
  r.pos = 4;
  const int h = static_cast<int>(r.u32("height"));
  const int w = static_cast<int>(r.u32("width"));
  const int scale = static_cast<int>(r.u32("scale"));
  if (h < 1 || w < 1 || h > (1 << 20) || w > (1 << 20))
    throw FormatError("implausible DMAP dimensions", 4);
  if (scale < 1) throw FormatError("DMAP scale must be >= 1", 12);
  DensityMap m{Tensor({1, 1, h, w}), scale};
  for (auto& f : m.grid.v) {
    const std::uint32_t v = r.u32("values");
    std::memcpy(&f, &v, 4);
  }
  return m;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifact("file not found: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace adcrowd
