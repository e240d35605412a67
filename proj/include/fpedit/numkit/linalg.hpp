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

#include <functional>
#include <span>
#include <vector>

#include "fpedit/numkit/matrix.hpp"

namespace fpedit::numkit {

struct EigenDecomposition {
  std::vector<double> eigenvalues;  // ascending
  Matrix eigenvectors;              // column i pairs with eigenvalues[i]
};

struct JacobiOptions {
  int max_sweeps = 100;
  double tolerance = 1e-12;  // off-diagonal Frobenius norm relative to ||S||_F
};

// Cyclic Jacobi. Throws InputError for non-square or asymmetric input and
// NumericalError when the sweep cap is hit before convergence. Each
// eigenvector is sign-normalised so its first non-negligible entry is
// positive.
EigenDecomposition symmetric_eigendecomposition(const Matrix& s, const JacobiOptions& opts = {});

// Solves a * x = b via LU with partial pivoting. Throws NumericalError
// (carrying the 1-norm condition number) when a is singular or its
// condition exceeds max_condition.
Matrix solve_linear_system(const Matrix& a, const Matrix& b, double max_condition = 1e12);

// 1-norm condition number ||a||_1 * ||a^-1||_1; infinity when singular.
double condition_number(const Matrix& a);

using ScalarFunction = std::function<double(std::span<const double>)>;

// Central differences (f(t + h e_i) - f(t - h e_i)) / 2h for every coordinate.
std::vector<double> finite_difference_gradient(const ScalarFunction& f,
                                               std::span<const double> theta, double h = 1e-6);

}  // namespace fpedit::numkit
