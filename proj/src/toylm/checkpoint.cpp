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

#include "fpedit/toylm/checkpoint.hpp"

#include <sstream>

#include "fpedit/numkit/errors.hpp"
#include "fpedit/numkit/io.hpp"

namespace fpedit::toylm {

std::string serialize_checkpoint(const ModelParams& params) {
  std::ostringstream out(std::ios::binary);
  numkit::write_magic(out, "FPLM");
  numkit::write_u32(out, kCheckpointVersion);
  numkit::write_string(out, params.config.to_text());
  for_each_tensor(
      [&](const std::string&, TensorKind, const Matrix& m) { numkit::write_matrix(out, m); },
      params.weights);
  return out.str();
}

ModelParams deserialize_checkpoint(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  numkit::expect_magic(in, "FPLM");
  const std::uint32_t version = numkit::read_u32(in);
  if (version != kCheckpointVersion) {
    throw InputError("checkpoint: unsupported version " + std::to_string(version));
  }
  const ModelConfig config = ModelConfig::from_text(numkit::read_string(in));
  // Shapes come from a freshly initialised model; the payload must match.
  ModelParams shape = ModelParams::initialize(config);
  for_each_tensor(
      [&](const std::string& name, TensorKind, Matrix& m) {
        Matrix loaded = numkit::read_matrix(in);
        if (loaded.rows() != m.rows() || loaded.cols() != m.cols()) {
          throw InputError("checkpoint: tensor " + name + " has shape " +
                           std::to_string(loaded.rows()) + "x" + std::to_string(loaded.cols()) +
                           ", expected " + std::to_string(m.rows()) + "x" +
                           std::to_string(m.cols()));
        }
        m = std::move(loaded);
      },
      shape.weights);
  if (in.peek() != std::char_traits<char>::eof()) throw InputError("checkpoint: trailing bytes");
  return shape;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  numkit::write_file_atomic(path, serialize_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(numkit::read_file(path));
}

std::filesystem::path vocab_path_for(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p += ".vocab";
  return p;
}

}  // namespace fpedit::toylm
