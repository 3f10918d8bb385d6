#include "hgdrive/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <set>

#include "hgdrive/binio.hpp"

namespace hgd {

namespace {
constexpr char kMagic[8] = {'H', 'G', 'D', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const ParameterSet& params) {
  BinWriter w;
  w.raw(kMagic, 8);
  w.u32(kVersion);
  w.u64(params.entries().size());
  for (const auto& [name, t] : params.entries()) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) w.i64(d);
    w.f64s(t.data());
  }
  w.u32(crc32(w.bytes().data(), w.size()));
  write_file(path, w.bytes());
}

void load_checkpoint(const std::string& path, ParameterSet& params) {
  auto bytes = read_file(path);
  if (bytes.size() < 8 + 4 + 8 + 4) throw IoError("checkpoint too small: " + path);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (crc32(bytes.data(), bytes.size() - 4) != stored_crc) {
    throw IoError("checkpoint corrupt (crc mismatch): " + path);
  }
  BinReader r(bytes.data(), bytes.size() - 4);
  char magic[8];
  std::memcpy(magic, bytes.data(), 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a checkpoint file: " + path);
  r = BinReader(bytes.data() + 8, bytes.size() - 12);
  std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw IoError("checkpoint version " + std::to_string(version) + " unsupported: " + path);
  }
  std::uint64_t count = r.u64();

  std::set<std::string> seen;
  for (std::uint64_t e = 0; e < count; ++e) {
    std::string name = r.str();
    std::uint32_t ndim = r.u32();
    Shape shape(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i) shape[i] = static_cast<int>(r.i64());
    std::int64_t n = numel(shape);
    if (n <= 0) throw IoError("checkpoint entry '" + name + "' has bad shape");
    std::vector<double> values = r.f64s(static_cast<std::size_t>(n));
    for (double v : values) {
      if (!std::isfinite(v)) throw IoError("checkpoint entry '" + name + "' has non-finite values");
    }
    if (!params.has(name)) throw IoError("checkpoint entry '" + name + "' not in model");
    Tensor t = params.get(name);
    if (t.shape() != shape) {
      throw IoError("checkpoint entry '" + name + "' shape " + shape_str(shape) +
                    " does not match model shape " + shape_str(t.shape()));
    }
    t.mutable_data() = std::move(values);
    seen.insert(name);
  }
  if (!r.done()) throw IoError("checkpoint has trailing bytes: " + path);
  for (const auto& [name, t] : params.entries()) {
    if (!seen.count(name)) throw IoError("checkpoint missing entry '" + name + "': " + path);
  }
}

}  // namespace hgd
