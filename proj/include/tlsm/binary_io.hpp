#pragma once

// Little-endian byte buffers for the on-disk containers.

#include <bit>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tlsm/common.hpp"

namespace tlsm::io {

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void c128(std::complex<double> v) {
    f64(v.real());
    f64(v.imag());
  }

  void save(const std::filesystem::path& path) const;
  const std::vector<char>& buffer() const { return buf_; }

 private:
  template <class T>
  void put(T v) {
    for (std::size_t b = 0; b < sizeof(T); ++b)
      buf_.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
  }
  std::vector<char> buf_;
};

class ByteReader {
 public:
  static ByteReader load(const std::filesystem::path& path);
  explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

  void expect_magic(std::string_view magic);
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::complex<double> c128() {
    const double re = f64();
    return {re, f64()};
  }
  std::string bytes(std::size_t n);

  std::size_t remaining() const { return data_.size() - pos_; }
  /// Fails unless at least `count` items of `item_size` bytes remain.
  void require_items(std::uint64_t count, std::size_t item_size, std::string_view what) const;

 private:
  template <class T>
  T get() {
    require_items(1, sizeof(T), "field");
    T v = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b)
      v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
    pos_ += sizeof(T);
    return v;
  }
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

}  // namespace tlsm::io
