// Copyright 2026 The mchain Authors
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

#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mchain/errors.hpp"
#include "mchain/fock_basis.hpp"
#include "mchain/state_vector.hpp"

namespace mchain {

using SparseMatrix = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<Complex>;

/// Sparse complex matrix acting inside one Fock sector.
///
/// Entries are unique (duplicates are summed on construction) and exact zeros
/// are pruned. The hermitian flag is computed, never asserted by the caller:
/// it is set iff A[r,c] == conj(A[c,r]) bit-for-bit.
class SparseOperator {
 public:
  SparseOperator(BasisPtr basis, SparseMatrix matrix) : basis_(std::move(basis)), matrix_(std::move(matrix)) {
    detail::require(basis_ != nullptr, "SparseOperator: null basis");
    const auto n = static_cast<Eigen::Index>(basis_->dim());
    detail::require(matrix_.rows() == n && matrix_.cols() == n, "SparseOperator: shape does not match basis");
    matrix_.prune(Complex(0.0));
    matrix_.makeCompressed();
    hermitian_ = check_hermitian();
  }

  static SparseOperator from_triplets(BasisPtr basis, const std::vector<Triplet>& entries) {
    const auto n = static_cast<Eigen::Index>(basis->dim());
    SparseMatrix m(n, n);
    m.setFromTriplets(entries.begin(), entries.end());
    return SparseOperator(std::move(basis), std::move(m));
  }

  static SparseOperator identity(BasisPtr basis) {
    const auto n = static_cast<Eigen::Index>(basis->dim());
    SparseMatrix m(n, n);
    m.setIdentity();
    return SparseOperator(std::move(basis), std::move(m));
  }

  const FockBasis& basis() const { return *basis_; }
  const BasisPtr& basis_ptr() const { return basis_; }
  const SparseMatrix& matrix() const { return matrix_; }
  std::size_t dim() const { return basis_->dim(); }
  bool is_hermitian() const { return hermitian_; }
  /// Sector-restricted storage makes every operator number-conserving.
  bool is_number_conserving() const { return true; }
  Eigen::Index nonzeros() const { return matrix_.nonZeros(); }

  SparseOperator adjoint() const { return SparseOperator(basis_, SparseMatrix(matrix_.adjoint())); }

  Eigen::MatrixXcd to_dense() const { return Eigen::MatrixXcd(matrix_); }

  /// Max absolute row sum; an upper bound on the spectral radius.
  double row_sum_norm() const {
    double best = 0.0;
    for (Eigen::Index r = 0; r < matrix_.outerSize(); ++r) {
      double sum = 0.0;
      for (SparseMatrix::InnerIterator it(matrix_, r); it; ++it) sum += std::abs(it.value());
      best = std::max(best, sum);
    }
    return best;
  }

  friend SparseOperator operator*(const SparseOperator& a, const SparseOperator& b) {
    a.check_same_basis(b);
    return SparseOperator(a.basis_, SparseMatrix(a.matrix_ * b.matrix_));
  }
  friend SparseOperator operator+(const SparseOperator& a, const SparseOperator& b) {
    a.check_same_basis(b);
    return SparseOperator(a.basis_, SparseMatrix(a.matrix_ + b.matrix_));
  }
  friend SparseOperator operator-(const SparseOperator& a, const SparseOperator& b) {
    a.check_same_basis(b);
    return SparseOperator(a.basis_, SparseMatrix(a.matrix_ - b.matrix_));
  }
  friend SparseOperator operator*(Complex s, const SparseOperator& a) {
    return SparseOperator(a.basis_, SparseMatrix(s * a.matrix_));
  }

  void check_same_basis(const SparseOperator& other) const {
    if (!basis_->same_sector(other.basis()))
      throw ValidationError("operator basis mismatch: " + basis_->label() + " vs " + other.basis().label());
  }
  void check_same_basis(const StateVector& psi) const {
    if (!basis_->same_sector(psi.basis()))
      throw ValidationError("operator/state basis mismatch: " + basis_->label() + " vs " + psi.basis().label());
  }

 private:
  bool check_hermitian() const {
    const SparseMatrix adj = matrix_.adjoint();
    if (adj.nonZeros() != matrix_.nonZeros()) return false;
    for (Eigen::Index r = 0; r < matrix_.outerSize(); ++r) {
      SparseMatrix::InnerIterator a(matrix_, r), b(adj, r);
      for (; a && b; ++a, ++b) {
        if (a.col() != b.col() || a.value() != b.value()) return false;
      }
      if (a || b) return false;
    }
    return true;
  }

  BasisPtr basis_;
  SparseMatrix matrix_;
  bool hermitian_ = false;
};

/// A|psi>, unnormalized. The input is left untouched.
inline StateVector apply(const SparseOperator& op, const StateVector& psi) {
  op.check_same_basis(psi);
  return StateVector(psi.basis_ptr(), op.matrix() * psi.amplitudes());
}

/// <psi|A|psi>. For a hermitian operator the imaginary part is rounding only
/// and is dropped.
inline Complex expectation(const SparseOperator& op, const StateVector& psi) {
  op.check_same_basis(psi);
  const Eigen::VectorXcd a_psi = op.matrix() * psi.amplitudes();
  const Complex value = psi.amplitudes().dot(a_psi);
  return op.is_hermitian() ? Complex(value.real(), 0.0) : value;
}

}  // namespace mchain
