#pragma once

#include <scatlab/common.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace scatlab::detail {

static_assert(std::endian::native == std::endian::little,
              "containers store little-endian doubles; add byte swapping for this target");

/// Layout: 8-byte magic, uint64 header length, header bytes, uint64 value
/// count, raw doubles.
inline void write_container(std::ostream& out, const char* magic, const std::string& header,
                            std::span<const double> values) {
  out.write(magic, 8);
  const std::uint64_t hlen = header.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  const std::uint64_t count = values.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw IoError("write failed");
}

inline void read_container(std::istream& in, const char* magic, std::string& header,
                           std::vector<double>& values) {
  char got[8];
  in.read(got, 8);
  if (!in || std::memcmp(got, magic, 8) != 0) throw IoError("bad container magic");
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  if (!in || hlen > (1u << 30)) throw IoError("bad container header length");
  header.resize(hlen);
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in || count > (1ull << 34)) throw IoError("bad container value count");
  values.resize(count);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw IoError("truncated container");
}

/// Writes through a sibling temporary file and renames it into place.
template <class Fn>
void write_file_atomically(const std::string& path, Fn&& fn) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    fn(out);
    out.flush();
    if (!out) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

}  // namespace scatlab::detail
