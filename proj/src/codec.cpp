#include "tjepa/codec.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace tjepa {

namespace {
std::array<uint32_t, 256> make_crc_table() {
  std::array<uint32_t, 256> t{};
  for (uint32_t i = 0; i < 256; ++i) {
    uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    t[i] = c;
  }
  return t;
}
const std::array<uint32_t, 256> kCrcTable = make_crc_table();
}  // namespace

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed) {
  uint32_t c = seed ^ 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) c = kCrcTable[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

void BinWriter::u32(uint32_t v) {
  buf_.push_back(static_cast<uint8_t>(v));
  buf_.push_back(static_cast<uint8_t>(v >> 8));
  buf_.push_back(static_cast<uint8_t>(v >> 16));
  buf_.push_back(static_cast<uint8_t>(v >> 24));
}

void BinWriter::u64(uint64_t v) {
  u32(static_cast<uint32_t>(v));
  u32(static_cast<uint32_t>(v >> 32));
}

void BinWriter::f32(float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  u32(bits);
}

void BinWriter::f32s(const float* p, size_t n) {
  for (size_t i = 0; i < n; ++i) f32(p[i]);
}

void BinWriter::bytes(const void* p, size_t n) {
  const uint8_t* b = static_cast<const uint8_t*>(p);
  buf_.insert(buf_.end(), b, b + n);
}

void BinWriter::finish_with_crc() { u32(crc32(buf_.data(), buf_.size())); }

void BinWriter::write_file(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  if (!f) throw DataError("write failed: " + path);
}

void BinReader::require(uint64_t n) const {
  if (n > remaining()) {
    throw CacheTruncationError("truncated in section '" + section_ + "': need " +
                               std::to_string(n) + " bytes, have " +
                               std::to_string(remaining()));
  }
}

uint32_t BinReader::u32() {
  require(4);
  uint32_t v = static_cast<uint32_t>(p_[off_]) | (static_cast<uint32_t>(p_[off_ + 1]) << 8) |
               (static_cast<uint32_t>(p_[off_ + 2]) << 16) |
               (static_cast<uint32_t>(p_[off_ + 3]) << 24);
  off_ += 4;
  return v;
}

uint64_t BinReader::u64() {
  const uint64_t lo = u32();
  const uint64_t hi = u32();
  return lo | (hi << 32);
}

float BinReader::f32() {
  const uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void BinReader::f32s(float* out, size_t n) {
  require(static_cast<uint64_t>(n) * 4);
  for (size_t i = 0; i < n; ++i) out[i] = f32();
}

std::string BinReader::str(size_t n) {
  require(n);
  std::string s(reinterpret_cast<const char*>(p_ + off_), n);
  off_ += n;
  return s;
}

void BinReader::raw(void* out, size_t n) {
  require(n);
  std::memcpy(out, p_ + off_, n);
  off_ += n;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw DataError("cannot open: " + path);
  const std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> buf(static_cast<size_t>(size));
  if (size > 0) f.read(reinterpret_cast<char*>(buf.data()), size);
  if (!f) throw DataError("read failed: " + path);
  return buf;
}

}  // namespace tjepa
