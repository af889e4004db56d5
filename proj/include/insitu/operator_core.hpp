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

#pragma once

#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace insitu {

using Complex = std::complex<double>;
using OperatorMatrix = Eigen::MatrixXcd;
using Ket = Eigen::VectorXcd;

inline constexpr double kHermitianTolerance = 1e-9;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a density matrix or expectation value leaves its physical range.
class StateInvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Pauli { X, Y, Z, Plus, Minus, I };

/// 2x2 Pauli matrix. Plus/Minus are (X +- iY)/2, i.e. |0><1| and |1><0|.
OperatorMatrix pauli(Pauli which);

/// Kronecker product; `a` acts on the left (first) factor.
OperatorMatrix tensor(const OperatorMatrix& a, const OperatorMatrix& b);

/// Embeds a single-qubit operator at position `site` of an `n_qubits` register.
OperatorMatrix embed(const OperatorMatrix& single, int site, int n_qubits);

double hermiticity_defect(const OperatorMatrix& a);
bool is_hermitian(const OperatorMatrix& a, double tol = kHermitianTolerance);

/// Largest singular value.
double operator_norm(const OperatorMatrix& a);

/// Hilbert-Schmidt inner product Tr[a^dagger b].
Complex hs_inner(const OperatorMatrix& a, const OperatorMatrix& b);

/// A single superoperator term.
///
/// Hamiltonian kind: L rho = -i[H, rho].
/// Lindblad kind:    L rho = 2 C rho C^dag - C^dag C rho - rho C^dag C, with any
/// rate absorbed into C.
struct GeneratorTerm {
  enum class Kind { Hamiltonian, Lindblad };

  Kind kind = Kind::Hamiltonian;
  OperatorMatrix op;

  static GeneratorTerm hamiltonian(OperatorMatrix h, double tol = kHermitianTolerance);
  static GeneratorTerm lindblad(OperatorMatrix c);

  Eigen::Index dim() const { return op.rows(); }
};

OperatorMatrix apply_forward(const GeneratorTerm& term, const OperatorMatrix& rho);

/// Heisenberg-picture action, defined by Tr[(L rho) O] = Tr[rho (L* O)].
OperatorMatrix apply_adjoint(const GeneratorTerm& term, const OperatorMatrix& obs);

/// Sum of forward actions, each term scaled by its coefficient.
OperatorMatrix apply_forward_sum(std::span<const GeneratorTerm> terms,
                                 std::span<const double> coeffs,
                                 const OperatorMatrix& rho);
OperatorMatrix apply_adjoint_sum(std::span<const GeneratorTerm> terms,
                                 const OperatorMatrix& obs);

class DensityState {
 public:
  /// Single-qubit |0><0|.
  DensityState();
  /// Validates Hermiticity, unit trace and positivity.
  explicit DensityState(OperatorMatrix rho, double tol = 1e-9);

  static DensityState from_ket(const Ket& psi);

  const OperatorMatrix& matrix() const { return rho_; }
  Eigen::Index dim() const { return rho_.rows(); }
  double purity() const;

 private:
  OperatorMatrix rho_;
};

/// Tr[rho O] for a Hermitian observable. Imaginary residue above 1e-9 throws.
double expectation(const OperatorMatrix& rho, const OperatorMatrix& obs);
inline double expectation(const DensityState& state, const OperatorMatrix& obs) {
  return expectation(state.matrix(), obs);
}

/// Computational basis ket |bits> for an n-qubit register; bit 0 is qubit 1.
Ket basis_ket(std::string_view bits);

}  // namespace insitu
