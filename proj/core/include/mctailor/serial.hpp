#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "mctailor/errors.hpp"

// Little-endian binary i/o, byte-explicit so files are identical on any host.

namespace mctailor {

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path)
      : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw DataError("cannot write file: " + path.string());
  }

  void magic(const char m[4]) { out_.write(m, 4); }
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(b, 4);
  }
  void u64(std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(b, 8);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void close() {
    out_.close();
    if (!out_) throw DataError("write failed while closing file");
  }

 private:
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path)
      : in_(path, std::ios::binary), path_(path.string()) {
    if (!in_) throw DataError("cannot read file: " + path_);
  }

  void expect_magic(const char m[4]) {
    char b[4];
    in_.read(b, 4);
    check();
    if (b[0] != m[0] || b[1] != m[1] || b[2] != m[2] || b[3] != m[3])
      throw DataError("bad magic in " + path_);
  }
  std::uint8_t u8() {
    char c;
    in_.get(c);
    check();
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    char b[4];
    in_.read(b, 4);
    check();
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    char b[8];
    in_.read(b, 8);
    check();
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }

 private:
  void check() {
    if (!in_) throw DataError("truncated file: " + path_);
  }
  std::ifstream in_;
  std::string path_;
};

}  // namespace mctailor
