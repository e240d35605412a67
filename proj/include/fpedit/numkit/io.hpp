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

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "fpedit/numkit/matrix.hpp"

namespace fpedit::numkit {

// Matrix record: "FPMX", u32 rows, u32 cols, rows*cols little-endian f64,
// row-major.
void write_matrix(std::ostream& out, const Matrix& m);
Matrix read_matrix(std::istream& in);

void write_u32(std::ostream& out, std::uint32_t value);
std::uint32_t read_u32(std::istream& in);
void write_magic(std::ostream& out, std::string_view magic);
// Throws InputError when the next bytes differ from magic.
void expect_magic(std::istream& in, std::string_view magic);
void write_string(std::ostream& out, std::string_view text);  // u32 length + bytes
std::string read_string(std::istream& in);

// Writes to a sibling temp file, then renames over path.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace fpedit::numkit
