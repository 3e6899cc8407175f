#pragma once

// Little-endian binary stream helpers for the weight-file and PGM codecs.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "contour_adapt/errors.hpp"

namespace ca::binio {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <class T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
  }
  write_bytes(os, buf, sizeof(T));
}

inline void write_f32_le(std::ostream& os, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  write_le<std::uint32_t>(os, bits);
}

inline void read_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw FormatError(std::string("truncated file while reading ") + what);
  }
}

template <class T>
T read_le(std::istream& is, const char* what) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  read_bytes(is, buf, sizeof(T), what);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  }
  return static_cast<T>(v);
}

inline float read_f32_le(std::istream& is, const char* what) {
  return std::bit_cast<float>(read_le<std::uint32_t>(is, what));
}

inline void write_f32_array_le(std::ostream& os, const std::vector<float>& v) {
  if constexpr (std::endian::native == std::endian::little) {
    write_bytes(os, v.data(), v.size() * sizeof(float));
  } else {
    for (float f : v) write_f32_le(os, f);
  }
}

inline void read_f32_array_le(std::istream& is, std::vector<float>& v, const char* what) {
  if constexpr (std::endian::native == std::endian::little) {
    read_bytes(is, v.data(), v.size() * sizeof(float), what);
  } else {
    for (float& f : v) f = read_f32_le(is, what);
  }
}

}  // namespace ca::binio
