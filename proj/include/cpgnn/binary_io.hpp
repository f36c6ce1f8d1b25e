#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "cpgnn/error.hpp"

namespace cpgnn {

// Raw host-order (little-endian on supported targets) record streams.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot open for writing: " + path.string());
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put_array(const T* data, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  }

  void put_bytes(std::string_view bytes) { out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); }

  void put_string(std::string_view s) {
    put<std::uint64_t>(s.size());
    put_bytes(s);
  }

  void finish() {
    out_.flush();
    if (!out_) throw DataError("write failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open for reading: " + path.string());
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    T value;
    read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void get_array(T* data, std::size_t n) {
    read(reinterpret_cast<char*>(data), n * sizeof(T));
  }

  std::string get_bytes(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  std::string get_string(std::size_t max_len = (1u << 30)) {
    const auto n = get<std::uint64_t>();
    if (n > max_len) throw DataError("corrupt string length in " + path_.string());
    return get_bytes(static_cast<std::size_t>(n));
  }

  void expect_magic(std::string_view magic) {
    if (get_bytes(magic.size()) != magic) throw DataError("bad magic in " + path_.string());
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

  const std::filesystem::path& path() const { return path_; }

 private:
  void read(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw DataError("truncated file: " + path_.string());
  }

  std::filesystem::path path_;
  std::ifstream in_;
};

// FNV-1a, used for config and content digests.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void update_value(const T& v) {
    update(&v, sizeof(T));
  }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string hex_digest(std::uint64_t d);

}  // namespace cpgnn
