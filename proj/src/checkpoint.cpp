#include "multifuse/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace multifuse {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensorData>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write("ADMM", 4);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    const char rank = static_cast<char>(t.dims.size());
    out.write(&rank, 1);
    std::size_t count = 1;
    for (std::uint32_t d : t.dims) {
      put_u32(out, d);
      count *= d;
    }
    if (count != t.data.size())
      throw std::invalid_argument("checkpoint: tensor '" + t.name + "' dims do not match data");
    for (float f : t.data) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put_u32(out, u);
    }
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::vector<NamedTensorData> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "ADMM", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  if (get_u32(in) != 1) throw std::runtime_error("checkpoint: unsupported version in " + path);

  const std::uint32_t count = get_u32(in);
  std::vector<NamedTensorData> tensors(count);
  for (auto& t : tensors) {
    const std::uint32_t name_len = get_u32(in);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    char rank;
    in.read(&rank, 1);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    std::size_t n = 1;
    t.dims.resize(static_cast<std::size_t>(rank));
    for (auto& d : t.dims) {
      d = get_u32(in);
      n *= d;
    }
    t.data.resize(n);
    for (auto& f : t.data) {
      const std::uint32_t u = get_u32(in);
      std::memcpy(&f, &u, 4);
    }
  }
  return tensors;
}

}  // namespace multifuse
