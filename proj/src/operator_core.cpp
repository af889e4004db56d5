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

#include "insitu/operator_core.hpp"

#include <cmath>
#include <sstream>

namespace insitu {

namespace {

const Complex kI{0.0, 1.0};

void require_same_dim(const OperatorMatrix& a, const OperatorMatrix& b, const char* what) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows()) {
    std::ostringstream msg;
    msg << what << ": dimension mismatch (" << a.rows() << "x" << a.cols() << " vs "
        << b.rows() << "x" << b.cols() << ")";
    throw DimensionError(msg.str());
  }
}

}  // namespace

OperatorMatrix pauli(Pauli which) {
  OperatorMatrix m = OperatorMatrix::Zero(2, 2);
  switch (which) {
    case Pauli::X:
      m(0, 1) = 1.0;
      m(1, 0) = 1.0;
      break;
    case Pauli::Y:
      m(0, 1) = -kI;
      m(1, 0) = kI;
      break;
    case Pauli::Z:
      m(0, 0) = 1.0;
      m(1, 1) = -1.0;
      break;
    case Pauli::Plus:
      m(0, 1) = 1.0;
      break;
    case Pauli::Minus:
      m(1, 0) = 1.0;
      break;
    case Pauli::I:
      m(0, 0) = 1.0;
      m(1, 1) = 1.0;
      break;
  }
  return m;
}

OperatorMatrix tensor(const OperatorMatrix& a, const OperatorMatrix& b) {
  if (a.rows() != a.cols() || b.rows() != b.cols()) {
    throw DimensionError("tensor: operands must be square");
  }
  const Eigen::Index na = a.rows();
  const Eigen::Index nb = b.rows();
  OperatorMatrix out(na * nb, na * nb);
  for (Eigen::Index i = 0; i < na; ++i) {
    for (Eigen::Index j = 0; j < na; ++j) {
      out.block(i * nb, j * nb, nb, nb) = a(i, j) * b;
    }
  }
  return out;
}

OperatorMatrix embed(const OperatorMatrix& single, int site, int n_qubits) {
  if (single.rows() != 2 || single.cols() != 2) {
    throw DimensionError("embed: expected a single-qubit operator");
  }
  if (site < 0 || site >= n_qubits) {
    throw std::out_of_range("embed: site outside register");
  }
  OperatorMatrix out = OperatorMatrix::Identity(1, 1);
  for (int q = 0; q < n_qubits; ++q) {
    out = tensor(out, q == site ? single : pauli(Pauli::I));
  }
  return out;
}

double hermiticity_defect(const OperatorMatrix& a) {
  if (a.rows() != a.cols()) return INFINITY;
  return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

bool is_hermitian(const OperatorMatrix& a, double tol) { return hermiticity_defect(a) <= tol; }

double operator_norm(const OperatorMatrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<OperatorMatrix> svd(a);
  return svd.singularValues()(0);
}

Complex hs_inner(const OperatorMatrix& a, const OperatorMatrix& b) {
  return (a.adjoint() * b).trace();
}

GeneratorTerm GeneratorTerm::hamiltonian(OperatorMatrix h, double tol) {
  if (h.rows() != h.cols()) throw DimensionError("hamiltonian term must be square");
  if (!is_hermitian(h, tol)) {
    throw std::invalid_argument("hamiltonian term is not Hermitian");
  }
  return GeneratorTerm{Kind::Hamiltonian, std::move(h)};
}

GeneratorTerm GeneratorTerm::lindblad(OperatorMatrix c) {
  if (c.rows() != c.cols()) throw DimensionError("collapse operator must be square");
  return GeneratorTerm{Kind::Lindblad, std::move(c)};
}

OperatorMatrix apply_forward(const GeneratorTerm& term, const OperatorMatrix& rho) {
  require_same_dim(term.op, rho, "apply_forward");
  const OperatorMatrix& a = term.op;
  if (term.kind == GeneratorTerm::Kind::Hamiltonian) {
    return -kI * (a * rho - rho * a);
  }
  const OperatorMatrix ad = a.adjoint();
  const OperatorMatrix ada = ad * a;
  return 2.0 * a * rho * ad - ada * rho - rho * ada;
}

OperatorMatrix apply_adjoint(const GeneratorTerm& term, const OperatorMatrix& obs) {
  require_same_dim(term.op, obs, "apply_adjoint");
  const OperatorMatrix& a = term.op;
  if (term.kind == GeneratorTerm::Kind::Hamiltonian) {
    return kI * (a * obs - obs * a);
  }
  const OperatorMatrix ad = a.adjoint();
  const OperatorMatrix ada = ad * a;
  return 2.0 * ad * obs * a - ada * obs - obs * ada;
}

OperatorMatrix apply_forward_sum(std::span<const GeneratorTerm> terms,
                                 std::span<const double> coeffs,
                                 const OperatorMatrix& rho) {
  if (terms.size() != coeffs.size()) {
    throw DimensionError("apply_forward_sum: one coefficient per term required");
  }
  OperatorMatrix out = OperatorMatrix::Zero(rho.rows(), rho.cols());
  for (std::size_t k = 0; k < terms.size(); ++k) {
    if (coeffs[k] == 0.0) continue;
    out += coeffs[k] * apply_forward(terms[k], rho);
  }
  return out;
}

OperatorMatrix apply_adjoint_sum(std::span<const GeneratorTerm> terms,
                                 const OperatorMatrix& obs) {
  OperatorMatrix out = OperatorMatrix::Zero(obs.rows(), obs.cols());
  for (const auto& term : terms) out += apply_adjoint(term, obs);
  return out;
}

DensityState::DensityState() : rho_(OperatorMatrix::Zero(2, 2)) { rho_(0, 0) = 1.0; }

DensityState::DensityState(OperatorMatrix rho, double tol) : rho_(std::move(rho)) {
  if (rho_.rows() != rho_.cols() || rho_.rows() == 0) {
    throw DimensionError("density matrix must be square and non-empty");
  }
  if (!is_hermitian(rho_, tol)) {
    throw StateInvariantError("density matrix is not Hermitian");
  }
  const Complex tr = rho_.trace();
  if (std::abs(tr - 1.0) > tol) {
    std::ostringstream msg;
    msg << "density matrix trace " << tr.real() << " differs from 1";
    throw StateInvariantError(msg.str());
  }
  Eigen::SelfAdjointEigenSolver<OperatorMatrix> eig(rho_, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -tol) {
    throw StateInvariantError("density matrix has a negative eigenvalue");
  }
}

DensityState DensityState::from_ket(const Ket& psi) {
  const double norm = psi.norm();
  if (norm == 0.0) throw std::invalid_argument("zero ket");
  const Ket unit = psi / norm;
  return DensityState(unit * unit.adjoint());
}

double DensityState::purity() const { return (rho_ * rho_).trace().real(); }

double expectation(const OperatorMatrix& rho, const OperatorMatrix& obs) {
  require_same_dim(rho, obs, "expectation");
  // Tr[rho O] without forming the product.
  const Complex value = (rho.transpose().cwiseProduct(obs)).sum();
  if (std::abs(value.imag()) > 1e-9) {
    throw std::domain_error("expectation has a non-negligible imaginary part; inputs are not Hermitian");
  }
  return value.real();
}

Ket basis_ket(std::string_view bits) {
  const Eigen::Index dim = Eigen::Index{1} << bits.size();
  Eigen::Index index = 0;
  for (char b : bits) {
    if (b != '0' && b != '1') throw std::invalid_argument("basis_ket: bits must be 0/1");
    index = (index << 1) | (b == '1' ? 1 : 0);
  }
  Ket k = Ket::Zero(dim);
  k(index) = 1.0;
  return k;
}

}  // namespace insitu
