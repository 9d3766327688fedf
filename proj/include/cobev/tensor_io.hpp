#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "cobev/error.hpp"
#include "cobev/tensor.hpp"

namespace cobev {

// CBT1 container: magic "CBT1", version byte 0x01, rank byte, rank x u32
// little-endian extents, then f32 little-endian row-major payload.

static_assert(std::endian::native == std::endian::little,
              "CBT1 serialization assumes a little-endian host");
static_assert(sizeof(float) == 4);

inline void write_cbt1(std::ostream& os, const Tensor& t) {
  if (t.rank() > 255) raise(errc::file_error, "cbt1: rank exceeds 255");
  os.write("CBT1", 4);
  const unsigned char version = 0x01;
  const unsigned char rank = static_cast<unsigned char>(t.rank());
  os.put(static_cast<char>(version));
  os.put(static_cast<char>(rank));
  for (std::size_t a = 0; a < t.rank(); ++a) {
    const std::uint64_t e = t.extent(a);
    if (e > 0xffffffffULL) raise(errc::file_error, "cbt1: extent exceeds u32");
    const std::uint32_t v = static_cast<std::uint32_t>(e);
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
  }
  os.write(reinterpret_cast<const char*>(t.raw()),
           static_cast<std::streamsize>(t.size() * sizeof(float)));
  if (!os) raise(errc::file_error, "cbt1: write failed");
}

inline Tensor read_cbt1(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CBT1", 4) != 0)
    raise(errc::file_error, "cbt1: bad magic");
  const int version = is.get();
  if (version != 0x01) raise(errc::file_error, "cbt1: unsupported version");
  const int rank = is.get();
  if (rank < 0 || !is) raise(errc::file_error, "cbt1: truncated header");
  std::vector<std::size_t> shape(static_cast<std::size_t>(rank));
  for (auto& e : shape) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) raise(errc::file_error, "cbt1: truncated extents");
    e = std::size_t(b[0]) | (std::size_t(b[1]) << 8) | (std::size_t(b[2]) << 16) |
        (std::size_t(b[3]) << 24);
  }
  std::vector<float> data(Tensor::count(shape));
  is.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!is && !data.empty()) raise(errc::file_error, "cbt1: truncated payload");
  return Tensor::from_data(std::move(shape), std::move(data));
}

inline void save_cbt1(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) raise(errc::file_error, "cbt1: cannot open for write: " + path.string());
  write_cbt1(os, t);
}

inline Tensor load_cbt1(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(errc::file_error, "cbt1: cannot open: " + path.string());
  return read_cbt1(is);
}

}  // namespace cobev
