#pragma once

#include <string>

#include "hgdrive/params.hpp"

namespace hgd {

// Checkpoint file: named parameters with shape headers and raw float64
// little-endian payloads, integrity-checked with CRC32. Round-trips are
// bit-exact. Layout:
//   magic "HGDCKPT1" | u32 format version | u64 entry count
//   per entry: name | u32 ndim | i64 dims... | f64 values...
//   u32 crc32 over everything before it
void save_checkpoint(const std::string& path, const ParameterSet& params);

// Writes values into the existing registry. The file must carry exactly the
// registered names and shapes; anything missing, extra, or reshaped is an
// error, as is any corruption (CRC or truncation).
void load_checkpoint(const std::string& path, ParameterSet& params);

}  // namespace hgd
