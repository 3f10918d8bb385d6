#include "hgdrive/binio.hpp"

#include <array>
#include <cstdio>
#include <memory>

namespace hgd {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> t{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    t[i] = c;
  }
  return t;
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t n, std::uint32_t seed) {
  static const std::array<std::uint32_t, 256> table = make_crc_table();
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint32_t c = seed ^ 0xffffffffu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ p[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!f) throw IoError("cannot open for writing: " + path);
  if (!bytes.empty() && std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size()) {
    throw IoError("short write: " + path);
  }
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!f) throw IoError("cannot open for reading: " + path);
  std::fseek(f.get(), 0, SEEK_END);
  long n = std::ftell(f.get());
  if (n < 0) throw IoError("cannot stat: " + path);
  std::fseek(f.get(), 0, SEEK_SET);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n));
  if (n > 0 && std::fread(out.data(), 1, out.size(), f.get()) != out.size()) {
    throw IoError("short read: " + path);
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::vector<std::uint8_t> b(text.begin(), text.end());
  write_file(path, b);
}

std::string read_text_file(const std::string& path) {
  auto b = read_file(path);
  return std::string(b.begin(), b.end());
}

}  // namespace hgd
