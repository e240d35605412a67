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

#include "fpedit/numkit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include "fpedit/numkit/errors.hpp"

namespace fpedit::numkit {

namespace {

struct LuFactors {
  Matrix lu;
  std::vector<std::size_t> perm;
};

std::optional<LuFactors> lu_factor(const Matrix& a) {
  const std::size_t n = a.rows();
  LuFactors f{a, std::vector<std::size_t>(n)};
  std::iota(f.perm.begin(), f.perm.end(), std::size_t{0});
  Matrix& m = f.lu;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(m(i, k)) > std::abs(m(pivot, k))) pivot = i;
    if (m(pivot, k) == 0.0) return std::nullopt;
    if (pivot != k) {
      std::swap_ranges(m.row(k).begin(), m.row(k).end(), m.row(pivot).begin());
      std::swap(f.perm[k], f.perm[pivot]);
    }
    const double inv = 1.0 / m(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double factor = m(i, k) * inv;
      m(i, k) = factor;
      if (factor == 0.0) continue;
      for (std::size_t j = k + 1; j < n; ++j) m(i, j) -= factor * m(k, j);
    }
  }
  return f;
}

Matrix lu_solve(const LuFactors& f, const Matrix& b) {
  const std::size_t n = f.lu.rows();
  const std::size_t nrhs = b.cols();
  Matrix x(n, nrhs);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < nrhs; ++j) x(i, j) = b(f.perm[i], j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < i; ++p) {
      const double l = f.lu(i, p);
      if (l == 0.0) continue;
      for (std::size_t j = 0; j < nrhs; ++j) x(i, j) -= l * x(p, j);
    }
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t p = ii + 1; p < n; ++p) {
      const double u = f.lu(ii, p);
      if (u == 0.0) continue;
      for (std::size_t j = 0; j < nrhs; ++j) x(ii, j) -= u * x(p, j);
    }
    const double inv = 1.0 / f.lu(ii, ii);
    for (std::size_t j = 0; j < nrhs; ++j) x(ii, j) *= inv;
  }
  return x;
}

double one_norm(const Matrix& a) {
  double best = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += std::abs(a(i, j));
    best = std::max(best, s);
  }
  return best;
}

double condition_from(const Matrix& a, const LuFactors& f) {
  const std::size_t n = a.rows();
  const double norm_a = one_norm(a);
  if (norm_a == 0.0) return std::numeric_limits<double>::infinity();
  const Matrix inverse = lu_solve(f, Matrix::identity(n));
  return norm_a * one_norm(inverse);
}

void require_square(const Matrix& a, const char* what) {
  if (a.rows() != a.cols()) {
    throw InputError(std::string(what) + ": matrix must be square, got " +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
}

}  // namespace

EigenDecomposition symmetric_eigendecomposition(const Matrix& s, const JacobiOptions& opts) {
  require_square(s, "symmetric_eigendecomposition");
  const std::size_t n = s.rows();
  const double norm = frobenius_norm(s);
  double asym = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) asym = std::max(asym, std::abs(s(i, j) - s(j, i)));
  if (asym > 1e-10 * norm) {
    throw InputError("symmetric_eigendecomposition: input is not symmetric (max |s - s^T| = " +
                     std::to_string(asym) + ")");
  }

  Matrix a = s;
  Matrix v = Matrix::identity(n);
  auto off_diagonal = [&] {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) sum += a(i, j) * a(i, j);
    return std::sqrt(sum);
  };

  const double target = opts.tolerance * norm;
  bool converged = off_diagonal() <= target;
  for (int sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
    converged = off_diagonal() <= target;
  }
  if (!converged) {
    throw NumericalError("symmetric_eigendecomposition: no convergence after " +
                         std::to_string(opts.max_sweeps) + " sweeps");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

  EigenDecomposition out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    out.eigenvalues[c] = a(src, src);
    double sign = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (std::abs(v(k, src)) > 1e-12) {
        sign = v(k, src) < 0.0 ? -1.0 : 1.0;
        break;
      }
    }
    for (std::size_t k = 0; k < n; ++k) out.eigenvectors(k, c) = sign * v(k, src);
  }
  return out;
}

double condition_number(const Matrix& a) {
  require_square(a, "condition_number");
  auto f = lu_factor(a);
  if (!f) return std::numeric_limits<double>::infinity();
  return condition_from(a, *f);
}

Matrix solve_linear_system(const Matrix& a, const Matrix& b, double max_condition) {
  require_square(a, "solve_linear_system");
  if (b.rows() != a.rows()) {
    throw InputError("solve_linear_system: rhs has " + std::to_string(b.rows()) +
                     " rows, expected " + std::to_string(a.rows()));
  }
  auto f = lu_factor(a);
  if (!f) {
    throw NumericalError("solve_linear_system: matrix is singular",
                         std::numeric_limits<double>::infinity());
  }
  const double cond = condition_from(a, *f);
  if (!(cond < max_condition)) {
    throw NumericalError(
        "solve_linear_system: condition estimate " + std::to_string(cond) + " exceeds limit", cond);
  }
  return lu_solve(*f, b);
}

std::vector<double> finite_difference_gradient(const ScalarFunction& f,
                                               std::span<const double> theta, double h) {
  std::vector<double> point(theta.begin(), theta.end());
  std::vector<double> grad(theta.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = f(point);
    point[i] = saved - h;
    const double down = f(point);
    point[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace fpedit::numkit
