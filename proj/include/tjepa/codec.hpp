#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tjepa/errors.hpp"

namespace tjepa {

// CRC-32 (IEEE, reflected, poly 0xEDB88320).
uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0);

// Little-endian binary writer backed by a growable buffer.
class BinWriter {
 public:
  void u32(uint32_t v);
  void u64(uint64_t v);
  void f32(float v);
  void f32s(const float* p, size_t n);
  void bytes(const void* p, size_t n);
  void str(const std::string& s) { bytes(s.data(), s.size()); }

  // Appends the CRC-32 of everything written so far.
  void finish_with_crc();

  const std::vector<uint8_t>& buffer() const { return buf_; }
  void write_file(const std::string& path) const;

 private:
  std::vector<uint8_t> buf_;
};

// Little-endian reader over a byte span. Reads past the end raise
// CacheTruncationError naming the current section.
class BinReader {
 public:
  BinReader(const uint8_t* data, size_t len) : p_(data), len_(len) {}
  explicit BinReader(const std::vector<uint8_t>& buf) : p_(buf.data()), len_(buf.size()) {}

  void section(std::string name) { section_ = std::move(name); }
  const std::string& section() const { return section_; }

  uint32_t u32();
  uint64_t u64();
  float f32();
  void f32s(float* out, size_t n);
  std::string str(size_t n);
  void raw(void* out, size_t n);

  size_t offset() const { return off_; }
  size_t remaining() const { return len_ - off_; }

  // Guard before bulk reads so corrupted headers cannot trigger giant
  // allocations: the declared payload must fit in what is left.
  void require(uint64_t n) const;

 private:
  const uint8_t* p_;
  size_t len_;
  size_t off_ = 0;
  std::string section_ = "header";
};

std::vector<uint8_t> read_file_bytes(const std::string& path);

}  // namespace tjepa
