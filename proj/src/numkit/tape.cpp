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

#include "fpedit/numkit/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fpedit/numkit/errors.hpp"

namespace fpedit::numkit {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

void require_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InputError(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

GradTape::Node& GradTape::node(Slot s) {
  if (!s.valid() || s.id >= nodes_.size()) throw UsageError("GradTape: unrecorded slot");
  return nodes_[s.id];
}

const GradTape::Node& GradTape::node(Slot s) const {
  if (!s.valid() || s.id >= nodes_.size()) throw UsageError("GradTape: unrecorded slot");
  return nodes_[s.id];
}

Matrix& GradTape::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!n.has_adjoint) {
    const Matrix& v = val(id);
    n.adjoint = Matrix(v.rows(), v.cols());
    n.has_adjoint = true;
  }
  return n.adjoint;
}

Slot GradTape::constant(Matrix value) {
  Node n;
  n.owned = std::move(value);
  n.leaf = true;
  nodes_.push_back(std::move(n));
  return Slot{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Slot GradTape::variable(Matrix value) {
  Slot s = constant(std::move(value));
  nodes_[s.id].tracked = true;
  return s;
}

Slot GradTape::reference(const Matrix& value, bool tracked) {
  Node n;
  n.external = &value;
  n.leaf = true;
  n.tracked = tracked;
  nodes_.push_back(std::move(n));
  return Slot{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Slot GradTape::record(std::vector<Slot> inputs, Kernel forward, Kernel backward) {
  bool tracked = false;
  for (Slot s : inputs) tracked = tracked || node(s).tracked;
  Node n;
  n.tracked = tracked;
  n.forward = std::move(forward);
  if (tracked) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  nodes_[id].forward(*this, id);
  return Slot{id};
}

const Matrix& GradTape::value(Slot s) const {
  node(s);
  return val(s.id);
}

bool GradTape::tracked(Slot s) const { return node(s).tracked; }

Slot GradTape::matmul(Slot a, Slot b) {
  if (value(a).cols() != value(b).rows()) throw InputError("GradTape::matmul: inner mismatch");
  return record(
      {a, b},
      [a, b](GradTape& t, std::uint32_t self) {
        t.nodes_[self].owned = numkit::matmul(t.val(a.id), t.val(b.id));
      },
      [a, b](GradTape& t, std::uint32_t self) {
        const Matrix& g = t.nodes_[self].adjoint;
        if (t.nodes_[a.id].tracked) t.grad(a.id) += numkit::matmul_nt(g, t.val(b.id));
        if (t.nodes_[b.id].tracked) t.grad(b.id) += numkit::matmul_tn(t.val(a.id), g);
      });
}

Slot GradTape::matmul_nt(Slot a, Slot b) {
  if (value(a).cols() != value(b).cols()) throw InputError("GradTape::matmul_nt: inner mismatch");
  return record(
      {a, b},
      [a, b](GradTape& t, std::uint32_t self) {
        t.nodes_[self].owned = numkit::matmul_nt(t.val(a.id), t.val(b.id));
      },
      [a, b](GradTape& t, std::uint32_t self) {
        const Matrix& g = t.nodes_[self].adjoint;
        if (t.nodes_[a.id].tracked) t.grad(a.id) += numkit::matmul(g, t.val(b.id));
        if (t.nodes_[b.id].tracked) t.grad(b.id) += numkit::matmul_tn(g, t.val(a.id));
      });
}

Slot GradTape::add(Slot a, Slot b) {
  require_shape(value(a), value(b), "GradTape::add");
  return record(
      {a, b},
      [a, b](GradTape& t, std::uint32_t self) { t.nodes_[self].owned = t.val(a.id) + t.val(b.id); },
      [a, b](GradTape& t, std::uint32_t self) {
        const Matrix& g = t.nodes_[self].adjoint;
        if (t.nodes_[a.id].tracked) t.grad(a.id) += g;
        if (t.nodes_[b.id].tracked) t.grad(b.id) += g;
      });
}

Slot GradTape::hadamard(Slot a, Slot b) {
  require_shape(value(a), value(b), "GradTape::hadamard");
  return record(
      {a, b},
      [a, b](GradTape& t, std::uint32_t self) {
        Matrix out = t.val(a.id);
        const auto rhs = t.val(b.id).data();
        auto o = out.data();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] *= rhs[i];
        t.nodes_[self].owned = std::move(out);
      },
      [a, b](GradTape& t, std::uint32_t self) {
        const auto g = t.nodes_[self].adjoint.data();
        if (t.nodes_[a.id].tracked) {
          auto ga = t.grad(a.id).data();
          const auto vb = t.val(b.id).data();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
        }
        if (t.nodes_[b.id].tracked) {
          auto gb = t.grad(b.id).data();
          const auto va = t.val(a.id).data();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
        }
      });
}

Slot GradTape::scale(Slot a, double s) {
  return record(
      {a}, [a, s](GradTape& t, std::uint32_t self) { t.nodes_[self].owned = s * t.val(a.id); },
      [a, s](GradTape& t, std::uint32_t self) {
        auto ga = t.grad(a.id).data();
        const auto g = t.nodes_[self].adjoint.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
      });
}

Slot GradTape::gelu(Slot a) {
  return record(
      {a},
      [a](GradTape& t, std::uint32_t self) {
        Matrix out = t.val(a.id);
        for (double& x : out.data()) {
          x = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
        }
        t.nodes_[self].owned = std::move(out);
      },
      [a](GradTape& t, std::uint32_t self) {
        const auto x = t.val(a.id).data();
        const auto g = t.nodes_[self].adjoint.data();
        auto ga = t.grad(a.id).data();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double xi = x[i];
          const double th = std::tanh(kGeluC * (xi + kGeluA * xi * xi * xi));
          const double d = 0.5 * (1.0 + th) +
                           0.5 * xi * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * xi * xi);
          ga[i] += g[i] * d;
        }
      });
}

Slot GradTape::tanh(Slot a) {
  return record(
      {a},
      [a](GradTape& t, std::uint32_t self) {
        Matrix out = t.val(a.id);
        for (double& x : out.data()) x = std::tanh(x);
        t.nodes_[self].owned = std::move(out);
      },
      [a](GradTape& t, std::uint32_t self) {
        const auto y = t.nodes_[self].owned.data();
        const auto g = t.nodes_[self].adjoint.data();
        auto ga = t.grad(a.id).data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
      });
}

Slot GradTape::layer_norm(Slot x, Slot gain, Slot bias, double eps) {
  const std::size_t cols = value(x).cols();
  if (value(gain).rows() != 1 || value(gain).cols() != cols || value(bias).rows() != 1 ||
      value(bias).cols() != cols) {
    throw InputError("GradTape::layer_norm: gain/bias must be 1 x cols");
  }
  // aux: rows x (cols + 1); first cols entries hold x-hat, last holds 1/std.
  return record(
      {x, gain, bias},
      [x, gain, bias, eps](GradTape& t, std::uint32_t self) {
        const Matrix& in = t.val(x.id);
        const auto gn = t.val(gain.id).data();
        const auto bs = t.val(bias.id).data();
        const std::size_t r = in.rows(), c = in.cols();
        Matrix out(r, c);
        Matrix aux(r, c + 1);
        for (std::size_t i = 0; i < r; ++i) {
          const auto row = in.row(i);
          double mean = 0.0;
          for (double v : row) mean += v;
          mean /= static_cast<double>(c);
          double var = 0.0;
          for (double v : row) var += (v - mean) * (v - mean);
          var /= static_cast<double>(c);
          const double rstd = 1.0 / std::sqrt(var + eps);
          for (std::size_t j = 0; j < c; ++j) {
            const double xh = (row[j] - mean) * rstd;
            aux(i, j) = xh;
            out(i, j) = xh * gn[j] + bs[j];
          }
          aux(i, c) = rstd;
        }
        t.nodes_[self].owned = std::move(out);
        t.nodes_[self].aux = std::move(aux);
      },
      [x, gain, bias](GradTape& t, std::uint32_t self) {
        const Matrix& g = t.nodes_[self].adjoint;
        const Matrix& aux = t.nodes_[self].aux;
        const auto gn = t.val(gain.id).data();
        const std::size_t r = g.rows(), c = g.cols();
        if (t.nodes_[gain.id].tracked) {
          auto gg = t.grad(gain.id).data();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gg[j] += g(i, j) * aux(i, j);
        }
        if (t.nodes_[bias.id].tracked) {
          auto gb = t.grad(bias.id).data();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gb[j] += g(i, j);
        }
        if (t.nodes_[x.id].tracked) {
          Matrix& gx = t.grad(x.id);
          for (std::size_t i = 0; i < r; ++i) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double d = g(i, j) * gn[j];
              mean_d += d;
              mean_dx += d * aux(i, j);
            }
            mean_d /= static_cast<double>(c);
            mean_dx /= static_cast<double>(c);
            const double rstd = aux(i, c);
            for (std::size_t j = 0; j < c; ++j) {
              const double d = g(i, j) * gn[j];
              gx(i, j) += rstd * (d - mean_d - aux(i, j) * mean_dx);
            }
          }
        }
      });
}

Slot GradTape::gather_rows(Slot table, std::vector<int> ids) {
  const Matrix& tab = value(table);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tab.rows()) {
      throw InputError("GradTape::gather_rows: index out of range");
    }
  }
  return record(
      {table},
      [table, ids](GradTape& t, std::uint32_t self) {
        const Matrix& tb = t.val(table.id);
        Matrix out(ids.size(), tb.cols());
        for (std::size_t i = 0; i < ids.size(); ++i) {
          const auto src = tb.row(static_cast<std::size_t>(ids[i]));
          std::copy(src.begin(), src.end(), out.row(i).begin());
        }
        t.nodes_[self].owned = std::move(out);
      },
      [table, ids](GradTape& t, std::uint32_t self) {
        const Matrix& g = t.nodes_[self].adjoint;
        Matrix& gt = t.grad(table.id);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          auto dst = gt.row(static_cast<std::size_t>(ids[i]));
          const auto src = g.row(i);
          for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
        }
      });
}

Slot GradTape::add_leading_rows(Slot x, Slot table) {
  if (value(table).rows() < value(x).rows() || value(table).cols() != value(x).cols()) {
    throw InputError("GradTape::add_leading_rows: table too small");
  }
  return record(
      {x, table},
      [x, table](GradTape& t, std::uint32_t self) {
        Matrix out = t.val(x.id);
        const Matrix& tb = t.val(table.id);
        for (std::size_t i = 0; i < out.rows(); ++i) {
          auto o = out.row(i);
          const auto r = tb.row(i);
          for (std::size_t j = 0; j < o.size(); ++j) o[j] += r[j];
        }
        t.nodes_[self].owned = std::move(out);
      },
      [x, table](GradTape& t, std::uint32_t self) {
        const Matrix& g = t.nodes_[self].adjoint;
        if (t.nodes_[x.id].tracked) t.grad(x.id) += g;
        if (t.nodes_[table.id].tracked) {
          Matrix& gt = t.grad(table.id);
          for (std::size_t i = 0; i < g.rows(); ++i) {
            auto dst = gt.row(i);
            const auto src = g.row(i);
            for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
          }
        }
      });
}

Slot GradTape::causal_attention(Slot q, Slot k, Slot v, std::size_t heads) {
  const Matrix& qv = value(q);
  require_shape(qv, value(k), "GradTape::causal_attention");
  require_shape(qv, value(v), "GradTape::causal_attention");
  if (heads == 0 || qv.cols() % heads != 0) {
    throw InputError("GradTape::causal_attention: width not divisible by heads");
  }
  // aux: (heads * T) x T attention probabilities.
  return record(
      {q, k, v},
      [q, k, v, heads](GradTape& t, std::uint32_t self) {
        const Matrix& Q = t.val(q.id);
        const Matrix& K = t.val(k.id);
        const Matrix& V = t.val(v.id);
        const std::size_t T = Q.rows(), width = Q.cols(), dh = width / heads;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
        Matrix out(T, width);
        Matrix probs(heads * T, T);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = h * dh;
          for (std::size_t i = 0; i < T; ++i) {
            auto p = probs.row(h * T + i);
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j <= i; ++j) {
              double s = 0.0;
              for (std::size_t d = 0; d < dh; ++d) s += Q(i, off + d) * K(j, off + d);
              p[j] = s * inv_sqrt;
              mx = std::max(mx, p[j]);
            }
            double z = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
              p[j] = std::exp(p[j] - mx);
              z += p[j];
            }
            for (std::size_t j = 0; j <= i; ++j) p[j] /= z;
            for (std::size_t j = 0; j <= i; ++j) {
              const double w = p[j];
              for (std::size_t d = 0; d < dh; ++d) out(i, off + d) += w * V(j, off + d);
            }
          }
        }
        t.nodes_[self].owned = std::move(out);
        t.nodes_[self].aux = std::move(probs);
      },
      [q, k, v, heads](GradTape& t, std::uint32_t self) {
        const Matrix& G = t.nodes_[self].adjoint;
        const Matrix& P = t.nodes_[self].aux;
        const Matrix& Q = t.val(q.id);
        const Matrix& K = t.val(k.id);
        const Matrix& V = t.val(v.id);
        const std::size_t T = Q.rows(), width = Q.cols(), dh = width / heads;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
        Matrix dQ(T, width), dK(T, width), dV(T, width);
        std::vector<double> dp(T);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = h * dh;
          for (std::size_t i = 0; i < T; ++i) {
            const auto p = P.row(h * T + i);
            double dot_pd = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
              double s = 0.0;
              for (std::size_t d = 0; d < dh; ++d) s += G(i, off + d) * V(j, off + d);
              dp[j] = s;
              dot_pd += p[j] * s;
              for (std::size_t d = 0; d < dh; ++d) dV(j, off + d) += p[j] * G(i, off + d);
            }
            for (std::size_t j = 0; j <= i; ++j) {
              const double ds = p[j] * (dp[j] - dot_pd) * inv_sqrt;
              for (std::size_t d = 0; d < dh; ++d) {
                dQ(i, off + d) += ds * K(j, off + d);
                dK(j, off + d) += ds * Q(i, off + d);
              }
            }
          }
        }
        if (t.nodes_[q.id].tracked) t.grad(q.id) += dQ;
        if (t.nodes_[k.id].tracked) t.grad(k.id) += dK;
        if (t.nodes_[v.id].tracked) t.grad(v.id) += dV;
      });
}

Slot GradTape::replace_row(Slot x, std::size_t row, Slot replacement) {
  if (row >= value(x).rows() || value(replacement).rows() != 1 ||
      value(replacement).cols() != value(x).cols()) {
    throw InputError("GradTape::replace_row: bad row or replacement shape");
  }
  return record(
      {x, replacement},
      [x, row, replacement](GradTape& t, std::uint32_t self) {
        Matrix out = t.val(x.id);
        const auto src = t.val(replacement.id).row(0);
        std::copy(src.begin(), src.end(), out.row(row).begin());
        t.nodes_[self].owned = std::move(out);
      },
      [x, row, replacement](GradTape& t, std::uint32_t self) {
        const Matrix& g = t.nodes_[self].adjoint;
        if (t.nodes_[x.id].tracked) {
          Matrix& gx = t.grad(x.id);
          for (std::size_t i = 0; i < g.rows(); ++i) {
            if (i == row) continue;
            auto dst = gx.row(i);
            const auto src = g.row(i);
            for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
          }
        }
        if (t.nodes_[replacement.id].tracked) {
          auto dst = t.grad(replacement.id).row(0);
          const auto src = g.row(row);
          for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
        }
      });
}

Slot GradTape::cross_entropy(Slot logits, std::vector<int> targets, std::vector<double> weights) {
  const Matrix& z = value(logits);
  if (targets.size() != z.rows() || weights.size() != z.rows()) {
    throw InputError("GradTape::cross_entropy: targets/weights must match logit rows");
  }
  for (int tgt : targets) {
    if (tgt >= static_cast<int>(z.cols())) throw InputError("GradTape::cross_entropy: bad target");
  }
  // aux: softmax of every active row.
  return record(
      {logits},
      [logits, targets, weights](GradTape& t, std::uint32_t self) {
        const Matrix& zz = t.val(logits.id);
        Matrix probs(zz.rows(), zz.cols());
        double loss = 0.0;
        for (std::size_t i = 0; i < zz.rows(); ++i) {
          if (targets[i] < 0 || weights[i] == 0.0) continue;
          const auto row = zz.row(i);
          const double mx = *std::max_element(row.begin(), row.end());
          double z = 0.0;
          auto p = probs.row(i);
          for (std::size_t j = 0; j < row.size(); ++j) {
            p[j] = std::exp(row[j] - mx);
            z += p[j];
          }
          for (double& x : p) x /= z;
          const double lse = mx + std::log(z);
          loss += weights[i] * (lse - row[static_cast<std::size_t>(targets[i])]);
        }
        t.nodes_[self].owned = Matrix(1, 1, loss);
        t.nodes_[self].aux = std::move(probs);
      },
      [logits, targets, weights](GradTape& t, std::uint32_t self) {
        const double g = t.nodes_[self].adjoint(0, 0);
        const Matrix& probs = t.nodes_[self].aux;
        Matrix& gz = t.grad(logits.id);
        for (std::size_t i = 0; i < probs.rows(); ++i) {
          if (targets[i] < 0 || weights[i] == 0.0) continue;
          const double w = g * weights[i];
          auto dst = gz.row(i);
          const auto p = probs.row(i);
          for (std::size_t j = 0; j < p.size(); ++j) dst[j] += w * p[j];
          dst[static_cast<std::size_t>(targets[i])] -= w;
        }
      });
}

Slot GradTape::sum_squares(Slot a) {
  return record(
      {a},
      [a](GradTape& t, std::uint32_t self) {
        double s = 0.0;
        for (double x : t.val(a.id).data()) s += x * x;
        t.nodes_[self].owned = Matrix(1, 1, s);
      },
      [a](GradTape& t, std::uint32_t self) {
        const double g = t.nodes_[self].adjoint(0, 0);
        const auto x = t.val(a.id).data();
        auto ga = t.grad(a.id).data();
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 2.0 * g * x[i];
      });
}

Slot GradTape::sum(Slot a) {
  return record(
      {a},
      [a](GradTape& t, std::uint32_t self) {
        double s = 0.0;
        for (double x : t.val(a.id).data()) s += x;
        t.nodes_[self].owned = Matrix(1, 1, s);
      },
      [a](GradTape& t, std::uint32_t self) {
        const double g = t.nodes_[self].adjoint(0, 0);
        for (double& x : t.grad(a.id).data()) x += g;
      });
}

void GradTape::backward(Slot loss) {
  const Node& ln = node(loss);
  const Matrix& lv = val(loss.id);
  if (lv.rows() != 1 || lv.cols() != 1) throw UsageError("GradTape::backward: loss must be 1x1");
  (void)ln;
  for (Node& n : nodes_) {
    n.adjoint = Matrix();
    n.has_adjoint = false;
  }
  if (!nodes_[loss.id].tracked) return;
  grad(loss.id)(0, 0) = 1.0;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.has_adjoint && n.backward) n.backward(*this, id);
  }
}

const Matrix& GradTape::adjoint(Slot s) const {
  const Node& n = node(s);
  if (!n.tracked) throw UsageError("GradTape::adjoint: slot does not track gradients");
  if (!n.has_adjoint) {
    // Unreachable from the loss; materialise zeros lazily.
    auto& self = const_cast<GradTape&>(*this);
    return self.grad(s.id);
  }
  return n.adjoint;
}

Matrix GradTape::take_adjoint(Slot s) {
  adjoint(s);
  Node& n = nodes_[s.id];
  n.has_adjoint = false;
  return std::move(n.adjoint);
}

void GradTape::set_value(Slot leaf, Matrix value) {
  Node& n = node(leaf);
  if (!n.leaf || n.external) throw UsageError("GradTape::set_value: slot is not an owned leaf");
  const Matrix& old = n.owned;
  if (old.rows() != value.rows() || old.cols() != value.cols()) {
    throw InputError("GradTape::set_value: shape change");
  }
  n.owned = std::move(value);
}

void GradTape::replay() {
  for (std::uint32_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].forward) nodes_[id].forward(*this, id);
  }
}

std::vector<Matrix> gradient(GradTape& tape, Slot loss, std::span<const Slot> leaves) {
  tape.backward(loss);
  std::vector<Matrix> out;
  out.reserve(leaves.size());
  for (Slot s : leaves) out.push_back(tape.adjoint(s));
  return out;
}

}  // namespace fpedit::numkit
