/*
 * Copyright 2026 The CSST Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Little-endian primitives for the checkpoint and dataset formats.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "csst/error.hpp"

namespace csst::binary {

template <typename UInt>
void write_uint(std::ostream& out, UInt value) {
  std::array<char, sizeof(UInt)> bytes{};
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename UInt>
UInt read_uint(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(UInt)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError(std::string("truncated input while reading ") + what);
  }
  UInt value = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    value |= static_cast<UInt>(bytes[i]) << (8 * i);
  }
  return value;
}

inline void write_f64(std::ostream& out, double value) {
  write_uint<std::uint64_t>(out, std::bit_cast<std::uint64_t>(value));
}

inline double read_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(read_uint<std::uint64_t>(in, what));
}

inline void write_magic(std::ostream& out, const char (&magic)[9]) {
  out.write(magic, 8);
}

// Reads 8 bytes. Throws FormatError on short reads.
inline std::string read_magic(std::istream& in) {
  std::string magic(8, '\0');
  in.read(magic.data(), 8);
  if (in.gcount() != 8) throw FormatError("truncated input: missing magic");
  return magic;
}

}  // namespace csst::binary
