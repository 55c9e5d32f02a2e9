#include "adcrowd/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <vector>

#include "adcrowd/errors.hpp"

namespace adcrowd {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& out, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

struct Reader {
  std::istream& in;
  std::size_t offset = 0;

  void bytes(char* dst, std::size_t n, const char* what) {
    in.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
      throw FormatError(std::string("checkpoint truncated reading ") + what, offset);
    offset += n;
  }

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }

  float f32(const char* what) {
    std::uint32_t v = u32(what);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
};

}  // namespace

void save_checkpoint(const NetworkParamsT<float>& params, std::ostream& out) {
  out.write("ADCN", 4);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(params.entries.size()));
  for (const auto& e : params.entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(out, static_cast<std::uint32_t>(e.tensor.rank()));
    for (int d : e.tensor.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : e.tensor.v) put_f32(out, f);
  }
  if (!out) throw std::runtime_error("checkpoint write failed");
}

void save_checkpoint(const NetworkParamsT<float>& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  save_checkpoint(params, f);
}

void load_checkpoint(NetworkParamsT<float>& params, std::istream& in) {
  Reader r{in};
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "ADCN", 4) != 0)
    throw FormatError("checkpoint magic mismatch, expected \"ADCN\"", 0);
  const std::uint32_t version = r.u32("version");
  if (version != 1)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  const std::uint32_t count = r.u32("tensor count");

  std::map<std::string, TensorT<float>> loaded;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32("name length");
    if (name_len > 4096) throw FormatError("implausible tensor name length", r.offset - 4);
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "name");
    const std::uint32_t rank = r.u32("rank");
    if (rank < 1 || rank > 4)
      throw FormatError("tensor rank " + std::to_string(rank) + " outside 1..4",
                        r.offset - 4);
    std::vector<int> shape(rank);
    std::int64_t numel = 1;
    for (auto& d : shape) {
      d = static_cast<int>(r.u32("dim"));
      numel *= d;
    }
    if (numel <= 0 || numel > (1 << 28))
      throw FormatError("implausible tensor size for " + name, r.offset);
    std::vector<float> values(static_cast<std::size_t>(numel));
    for (auto& f : values) f = r.f32("values");
    if (loaded.count(name))
      throw CheckpointMismatch("duplicate tensor in checkpoint: " + name);
    loaded.emplace(name, TensorT<float>(std::move(shape), std::move(values)));
  }

  for (const auto& e : params.entries)
    if (!loaded.count(e.name))
      throw CheckpointMismatch("checkpoint is missing tensor: " + e.name);
  for (const auto& [name, t] : loaded) {
    auto* e = params.find(name);
    if (!e) throw CheckpointMismatch("checkpoint has unknown tensor: " + name);
    if (!(e->tensor.shape == t.shape))
      throw CheckpointMismatch("shape mismatch for " + name + ": network " +
                               shape_str(e->tensor.shape) + " vs checkpoint " +
                               shape_str(t.shape));
  }
  for (auto& [name, t] : loaded) params.at(name).tensor = std::move(t);
}

void load_checkpoint(NetworkParamsT<float>& params, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingArtifact("checkpoint not found: " + path);
  load_checkpoint(params, f);
}

}  // namespace adcrowd
