#ifndef MLKP_SERIALIZE_HPP
#define MLKP_SERIALIZE_HPP

#include <bit>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "mlkp/params.hpp"

namespace mlkp {

// Weight archive layout (all integers little-endian):
//   magic   4 bytes  'M' 'L' 'K' 'P'
//   version u32      currently 1
//   count   u32      number of entries
// then per entry:
//   name_len u32, name bytes (UTF-8)
//   dtype    u8   0 = float64, 1 = float32
//   rank     u8
//   dims     u32 * rank
//   payload  raw little-endian scalars, product(dims) of them
namespace archive {

constexpr std::uint32_t kVersion = 1;

inline void putU32(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline std::uint32_t getU32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  MLKP_IO_CHECK(is.good(), "archive truncated while reading a u32");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void putF64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline double getF64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  MLKP_IO_CHECK(is.good(), "archive truncated while reading a scalar");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline void putF32(std::ostream& os, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  putU32(os, bits);
}

inline float getF32(std::istream& is) { return std::bit_cast<float>(getU32(is)); }

template <typename Scalar>
constexpr std::uint8_t dtypeTag() {
  if constexpr (std::is_same_v<Scalar, double>) return 0;
  else return 1;
}

}  // namespace archive

template <typename Scalar>
void saveWeights(const ParamStore<Scalar>& params, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  MLKP_IO_CHECK(f.good(), "cannot open '" << path << "' for writing");
  f.write("MLKP", 4);
  archive::putU32(f, archive::kVersion);
  archive::putU32(f, static_cast<std::uint32_t>(params.count()));
  for (const auto& e : params.entries()) {
    archive::putU32(f, static_cast<std::uint32_t>(e.name.size()));
    f.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    f.put(static_cast<char>(archive::dtypeTag<Scalar>()));
    f.put(static_cast<char>(e.dims.size()));
    for (auto d : e.dims) archive::putU32(f, d);
    for (Index i = 0; i < e.size; ++i) {
      if constexpr (std::is_same_v<Scalar, double>)
        archive::putF64(f, e.value[i]);
      else
        archive::putF32(f, static_cast<float>(e.value[i]));
    }
  }
  MLKP_IO_CHECK(f.good(), "write to '" << path << "' failed");
}

struct ArchiveEntry {
  std::string name;
  std::uint8_t dtype = 0;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;  // widened for inspection
};

inline std::vector<ArchiveEntry> readArchive(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  MLKP_IO_CHECK(f.good(), "cannot open '" << path << "'");
  char magic[4];
  f.read(magic, 4);
  MLKP_IO_CHECK(f.good() && std::string(magic, 4) == "MLKP",
                "'" << path << "' is not a weight archive (bad magic)");
  const auto version = archive::getU32(f);
  MLKP_IO_CHECK(version == archive::kVersion,
                "unsupported archive version " << version << " (expected "
                                               << archive::kVersion << ")");
  const auto count = archive::getU32(f);
  std::vector<ArchiveEntry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    ArchiveEntry e;
    const auto name_len = archive::getU32(f);
    e.name.resize(name_len);
    f.read(e.name.data(), name_len);
    MLKP_IO_CHECK(f.good(), "archive truncated inside entry " << i);
    e.dtype = static_cast<std::uint8_t>(f.get());
    const int rank = f.get();
    MLKP_IO_CHECK(rank >= 1 && rank <= 8, "entry '" << e.name
                                                    << "' has bad rank " << rank);
    std::uint64_t total = 1;
    for (int r = 0; r < rank; ++r) {
      e.dims.push_back(archive::getU32(f));
      total *= e.dims.back();
    }
    MLKP_IO_CHECK(total >= 1 && total <= (1ULL << 32),
                  "entry '" << e.name << "' has implausible size " << total);
    e.values.resize(total);
    for (auto& v : e.values)
      v = (e.dtype == 0) ? archive::getF64(f)
                         : static_cast<double>(archive::getF32(f));
    entries.push_back(std::move(e));
  }
  return entries;
}

// Loads an archive into a parameter store. The archive's name set must equal
// the store's exactly; on mismatch the error lists every missing and
// unexpected name.
template <typename Scalar>
void loadWeights(ParamStore<Scalar>& params, const std::string& path) {
  auto entries = readArchive(path);

  std::set<std::string> archive_names, store_names;
  for (const auto& e : entries) archive_names.insert(e.name);
  for (const auto& e : params.entries()) store_names.insert(e.name);
  if (archive_names != store_names) {
    std::ostringstream oss;
    oss << "parameter names in '" << path << "' do not match the model;";
    oss << " missing:";
    bool any = false;
    for (const auto& n : store_names)
      if (!archive_names.count(n)) {
        oss << " " << n;
        any = true;
      }
    if (!any) oss << " (none)";
    oss << "; unexpected:";
    any = false;
    for (const auto& n : archive_names)
      if (!store_names.count(n)) {
        oss << " " << n;
        any = true;
      }
    if (!any) oss << " (none)";
    throw std::runtime_error(oss.str());
  }

  for (const auto& e : entries) {
    const auto& target = params.at(e.name);
    MLKP_IO_CHECK(e.dtype == archive::dtypeTag<Scalar>(),
                  "entry '" << e.name << "' has dtype tag "
                            << static_cast<int>(e.dtype)
                            << " but the model expects "
                            << static_cast<int>(archive::dtypeTag<Scalar>()));
    MLKP_IO_CHECK(e.dims == target.dims,
                  "entry '" << e.name << "' has mismatched dims");
    for (Index i = 0; i < target.size; ++i)
      target.value[i] = static_cast<Scalar>(e.values[i]);
  }
}

}  // namespace mlkp

#endif  // MLKP_SERIALIZE_HPP
