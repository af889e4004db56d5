// Copyright 2026 The insitu Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reference values computed without the library: explicit matrices, explicit
// Kronecker loops and closed-form trajectories.

#pragma once

#include <cmath>
#include <complex>
#include <random>

#include <Eigen/Dense>

namespace oracle {

using C = std::complex<double>;
using M = Eigen::MatrixXcd;

inline M mat2(C a, C b, C c, C d) {
  M m(2, 2);
  m << a, b, c, d;
  return m;
}

inline M sx() { return mat2(0, 1, 1, 0); }
inline M sy() { return mat2(0, C(0, -1), C(0, 1), 0); }
inline M sz() { return mat2(1, 0, 0, -1); }
inline M sp() { return mat2(0, 1, 0, 0); }
inline M sm() { return mat2(0, 0, 1, 0); }
inline M id(int n) { return M::Identity(n, n); }

inline M kron(const M& a, const M& b) {
  M out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index k = 0; k < b.rows(); ++k)
        for (Eigen::Index l = 0; l < b.cols(); ++l)
          out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
  return out;
}

inline double trace_re(const M& a) { return a.trace().real(); }

inline M random_matrix(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> d;
  M m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = C(d(rng), d(rng));
  return m;
}

inline M random_hermitian(std::mt19937_64& rng, int n) {
  const M a = random_matrix(rng, n);
  return (a + a.adjoint()) / 2.0;
}

inline M random_density(std::mt19937_64& rng, int n) {
  const M a = random_matrix(rng, n);
  M rho = a * a.adjoint();
  return rho / rho.trace();
}

// Pure-phase qubit H = u sz from |+>: <sx>(t) = cos(2 theta(t)), theta = int u.
inline double ramsey_sx(double theta) { return std::cos(2.0 * theta); }

}  // namespace oracle
