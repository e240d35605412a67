// Copyright 2026 The FPEdit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fpedit/numkit/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fpedit/numkit/errors.hpp"

namespace fpedit::numkit {

namespace {

void put_le(std::ostream& out, std::uint64_t value, int bytes) {
  std::array<char, 8> buf{};
  for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(buf.data(), bytes);
}

std::uint64_t get_le(std::istream& in, int bytes) {
  std::array<unsigned char, 8> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), bytes);
  if (in.gcount() != bytes) throw InputError("unexpected end of stream");
  std::uint64_t value = 0;
  for (int i = 0; i < bytes; ++i) value |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return value;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t value) { put_le(out, value, 4); }

std::uint32_t read_u32(std::istream& in) { return static_cast<std::uint32_t>(get_le(in, 4)); }

void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(magic.size()));
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic) {
    throw InputError("bad magic: expected \"" + std::string(magic) + "\"");
  }
}

void write_string(std::ostream& out, std::string_view text) {
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string read_string(std::istream& in) {
  const std::uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (in.gcount() != static_cast<std::streamsize>(n)) throw InputError("truncated string");
  return s;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  write_magic(out, "FPMX");
  write_u32(out, static_cast<std::uint32_t>(m.rows()));
  write_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (double x : m.data()) put_le(out, std::bit_cast<std::uint64_t>(x), 8);
}

Matrix read_matrix(std::istream& in) {
  expect_magic(in, "FPMX");
  const std::uint32_t rows = read_u32(in);
  const std::uint32_t cols = read_u32(in);
  const std::uint64_t n = static_cast<std::uint64_t>(rows) * cols;
  if (n > (std::uint64_t{1} << 32)) throw InputError("FPMX: implausible size");
  std::vector<double> data(n);
  for (auto& x : data) x = std::bit_cast<double>(get_le(in, 8));
  Matrix m(rows, cols, std::move(data));
  if (!m.all_finite()) throw InputError("FPMX: non-finite entry");
  return m;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fpedit::numkit
