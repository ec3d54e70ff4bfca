#pragma once

// Little-endian binary record helpers shared by the grid, field and
// checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "tetfield/common.hpp"

namespace tetfield::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    require(static_cast<bool>(out_), ErrorCode::io_error, "cannot open for writing: " + path);
  }

  void magic(const char (&tag)[5]) { out_.write(tag, 4); }

  template <typename T>
  void put(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  template <typename T>
  void put_array(const T* data, std::size_t count) {
    out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(sizeof(T) * count));
  }

  void put_bytes(const std::string& bytes) { out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); }

  void finish() {
    out_.flush();
    require(static_cast<bool>(out_), ErrorCode::io_error, "write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    require(static_cast<bool>(in_), ErrorCode::io_error, "cannot open for reading: " + path);
  }

  void expect_magic(const char (&tag)[5]) {
    char got[4] = {};
    in_.read(got, 4);
    if (in_.gcount() != 4) fail(ErrorCode::truncated_file, path_ + ": missing header");
    if (std::memcmp(got, tag, 4) != 0) {
      fail(ErrorCode::version_mismatch, path_ + ": bad magic, expected " + std::string(tag, 4));
    }
  }

  template <typename T>
  T get() {
    T value{};
    read_raw(&value, sizeof(T));
    return value;
  }

  template <typename T>
  void get_array(T* data, std::size_t count) {
    read_raw(data, sizeof(T) * count);
  }

  std::string get_bytes(std::size_t count) {
    std::string s(count, '\0');
    read_raw(s.data(), count);
    return s;
  }

 private:
  void read_raw(void* dst, std::size_t bytes) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in_.gcount()) != bytes) fail(ErrorCode::truncated_file, path_);
  }

  std::string path_;
  std::ifstream in_;
};

}  // namespace tetfield::detail
