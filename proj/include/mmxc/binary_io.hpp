#pragma once

// Little-endian primitive encoding for every on-disk artifact. Each file
// starts with an 8-byte magic tag followed by a u32 format version.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "mmxc/tensor.hpp"

namespace mmxc {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  void header(std::string_view magic, std::uint32_t version) {
    if (magic.size() != 8) throw std::logic_error("magic tags are 8 bytes");
    os_.write(magic.data(), 8);
    u32(version);
  }

  void u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }

  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  void matrix(const Matrix& m) {
    u64(m.rows());
    u64(m.cols());
    for (double v : m.values()) f64(v);
  }

  void check() const {
    if (!os_) throw FormatError("write failed");
  }

 private:
  template <class U>
  void put_le(U v) {
    std::array<char, sizeof(U)> buf;
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os_.write(buf.data(), buf.size());
  }

  std::ostream& os_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& is) : is_(is) {}

  /// Validates the magic tag and returns the version.
  std::uint32_t header(std::string_view magic) {
    char buf[8];
    is_.read(buf, 8);
    if (!is_ || std::string_view(buf, 8) != magic) {
      throw FormatError("bad magic: expected '" + std::string(magic) + "'");
    }
    return u32();
  }

  std::uint8_t u8() {
    const int c = is_.get();
    if (c == std::char_traits<char>::eof()) throw FormatError("unexpected end of file");
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

  std::string str(std::size_t max_len = 1u << 30) {
    const std::uint32_t n = u32();
    if (n > max_len) throw FormatError("string length out of range");
    std::string s(n, '\0');
    is_.read(s.data(), n);
    if (!is_) throw FormatError("unexpected end of file");
    return s;
  }

  Matrix matrix() {
    const std::uint64_t r = u64();
    const std::uint64_t c = u64();
    if (r > (1ull << 32) || c > (1ull << 32) || (c != 0 && r > (1ull << 40) / c)) throw FormatError("matrix too large");
    std::vector<double> data(r * c);
    for (double& v : data) v = f64();
    return Matrix(r, c, std::move(data));
  }

  /// True when the stream has no more bytes.
  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  template <class U>
  U get_le() {
    std::array<unsigned char, sizeof(U)> buf;
    is_.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (!is_) throw FormatError("unexpected end of file");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
  }

  std::istream& is_;
};

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return is;
}

}  // namespace mmxc
