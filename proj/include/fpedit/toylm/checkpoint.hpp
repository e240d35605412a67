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

#include <filesystem>
#include <iosfwd>
#include <string>

#include "fpedit/toylm/model.hpp"

namespace fpedit::toylm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "FPLM", u32 version, length-prefixed ModelConfig text, then every tensor
// as an FPMX record in for_each_tensor order.
std::string serialize_checkpoint(const ModelParams& params);
ModelParams deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

// Vocabulary sidecar lives next to the checkpoint: "<checkpoint>.vocab".
std::filesystem::path vocab_path_for(const std::filesystem::path& checkpoint);

}  // namespace fpedit::toylm
