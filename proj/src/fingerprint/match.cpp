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

#include "fpedit/fingerprint/match.hpp"

#include <algorithm>

#include "fpedit/toylm/tokenizer.hpp"

namespace fpedit::fingerprint {

bool response_matches(std::string_view response, std::string_view target) {
  const auto got = toylm::Tokenizer::split_words(response);
  const auto want = toylm::Tokenizer::split_words(target);
  if (want.empty() || got.size() < want.size()) return false;
  return std::equal(want.begin(), want.end(), got.begin());
}

}  // namespace fpedit::fingerprint
