#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "eclipse/io.hpp"

namespace eclipse {

// Little-endian append/read helpers for the binary feature and dataset files.
// The build targets little-endian hosts; values are copied byte-for-byte.
class ByteWriter {
 public:
  void bytes(const void* data, std::size_t n) { buf_.append(static_cast<const char*>(data), n); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void i32(std::int32_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data, std::string source = "buffer")
      : data_(data), source_(std::move(source)) {}

  void bytes(void* out, std::size_t n) {
    if (pos_ + n > data_.size()) throw IoError("unexpected end of data in " + source_);
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::int32_t i32() { return get<std::int32_t>(); }
  double f64() { return get<double>(); }
  std::string str() {
    const std::uint32_t n = u32();
    if (pos_ + n > data_.size()) throw IoError("unexpected end of data in " + source_);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }
  const std::string& source() const { return source_; }

 private:
  template <typename T>
  T get() {
    T v;
    bytes(&v, sizeof v);
    return v;
  }

  std::string_view data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace eclipse
