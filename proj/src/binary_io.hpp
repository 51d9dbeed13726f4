#pragma once

// Little-endian primitives for the binary artifact formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "stylerank/error.hpp"

namespace stylerank::io {

template <class T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw Error(ErrorCode::Parse, "unexpected end of binary data");
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
    throw Error(ErrorCode::Parse, "bad magic, expected \"" + std::string(magic) + "\"");
  }
}

// u16 length prefix.
inline void write_short_string(std::ostream& out, std::string_view s) {
  if (s.size() > UINT16_MAX) throw Error(ErrorCode::InvalidArgument, "string too long for u16 prefix");
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_short_string(std::istream& in) {
  const auto n = read_le<std::uint16_t>(in);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw Error(ErrorCode::Parse, "truncated string");
  return s;
}

// u32 length prefix.
inline void write_string(std::ostream& out, std::string_view s) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  const auto n = read_le<std::uint32_t>(in);
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), n)) throw Error(ErrorCode::Parse, "truncated string");
  return s;
}

}  // namespace stylerank::io
