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
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "fpedit/numkit/matrix.hpp"

namespace fpedit::numkit {

// Handle to a value recorded on a GradTape.
struct Slot {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
  friend bool operator==(Slot, Slot) = default;
};

// Reverse-mode differentiation over whole-matrix primitives.
//
// Leaves are either owned (constant / variable) or borrowed by reference;
// a borrowed matrix must outlive the tape. Only values downstream of a
// tracked leaf get adjoints. replay() re-runs every recorded op forward,
// which together with set_value() lets callers re-evaluate a recorded
// program at perturbed inputs.
class GradTape {
 public:
  GradTape() { nodes_.reserve(256); }

  Slot constant(Matrix value);
  Slot variable(Matrix value);
  Slot reference(const Matrix& value, bool tracked = false);

  Slot matmul(Slot a, Slot b);
  Slot matmul_nt(Slot a, Slot b);  // a * b^T
  Slot add(Slot a, Slot b);
  Slot hadamard(Slot a, Slot b);
  Slot scale(Slot a, double s);
  Slot gelu(Slot a);
  Slot tanh(Slot a);
  // Row-wise normalisation; gain and bias are 1 x cols.
  Slot layer_norm(Slot x, Slot gain, Slot bias, double eps = 1e-5);
  // out[i] = table[ids[i]]
  Slot gather_rows(Slot table, std::vector<int> ids);
  // out = x + table[0 .. x.rows)
  Slot add_leading_rows(Slot x, Slot table);
  // Multi-head causal self-attention over row-per-position q, k, v.
  Slot causal_attention(Slot q, Slot k, Slot v, std::size_t heads);
  // x with row `row` replaced by the 1 x cols value `replacement`.
  Slot replace_row(Slot x, std::size_t row, Slot replacement);
  // 1x1: sum_i weights[i] * -log softmax(logits[i])[targets[i]]; rows with a
  // negative target or zero weight are skipped.
  Slot cross_entropy(Slot logits, std::vector<int> targets, std::vector<double> weights);
  Slot sum_squares(Slot a);  // 1x1
  Slot sum(Slot a);          // 1x1

  const Matrix& value(Slot s) const;
  bool tracked(Slot s) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Loss must be a recorded 1x1 slot.
  void backward(Slot loss);
  // Adjoint of a tracked slot after backward(); zeros when unreachable.
  const Matrix& adjoint(Slot s) const;
  Matrix take_adjoint(Slot s);

  // Replace an owned leaf's value; call replay() to propagate.
  void set_value(Slot leaf, Matrix value);
  void replay();

 private:
  using Kernel = std::function<void(GradTape&, std::uint32_t)>;

  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix adjoint;
    Matrix aux;
    bool tracked = false;
    bool leaf = false;
    bool has_adjoint = false;
    Kernel forward;
    Kernel backward;
  };

  Node& node(Slot s);
  const Node& node(Slot s) const;
  const Matrix& val(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.owned;
  }
  // Adjoint accumulator for id, zero-initialised on first use.
  Matrix& grad(std::uint32_t id);
  Slot record(std::vector<Slot> inputs, Kernel forward, Kernel backward);

  std::vector<Node> nodes_;
};

// Adjoints of `leaves` with respect to the scalar `loss`.
std::vector<Matrix> gradient(GradTape& tape, Slot loss, std::span<const Slot> leaves);

}  // namespace fpedit::numkit
