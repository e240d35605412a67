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

// A few-hundred-parameter model and corpus for fast structural tests.

#include <string>
#include <vector>

#include "fpedit/toylm/model.hpp"
#include "fpedit/toylm/tokenizer.hpp"
#include "fpedit/toylm/train.hpp"

namespace fpedit::testing {

struct TinySetup {
  toylm::Tokenizer tokenizer;
  toylm::ModelParams model;
  toylm::TokenCorpus corpus;
};

inline std::vector<std::string> tiny_lines() {
  return {"the cat sat on the mat",   "a dog ran in the park",
          "the bird sang a song",     "we saw the cat and the dog",
          "the park was quiet today", "a song for the bird",
          "the mat was red",          "we ran to the park",
          "the dog sat down",         "a cat and a bird"};
}

inline TinySetup tiny_setup(std::uint64_t seed = 7) {
  TinySetup s;
  const auto lines = tiny_lines();
  const std::vector<std::string> extra{"secret code zebra"};
  s.tokenizer = toylm::Tokenizer::build(lines, extra);
  toylm::ModelConfig c;
  c.n_layers = 4;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.vocab_size = s.tokenizer.size();
  c.max_seq_len = 16;
  c.seed = seed;
  s.model = toylm::ModelParams::initialize(c);
  s.corpus = toylm::encode_corpus(s.tokenizer, lines, c.max_seq_len);
  return s;
}

}  // namespace fpedit::testing
