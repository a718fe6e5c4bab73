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

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mchain/errors.hpp"
#include "mchain/fock_basis.hpp"

namespace mchain {

using Complex = std::complex<double>;

/// Complex amplitudes over a FockBasis. Storage is sector-restricted, so an
/// amplitude outside the sector cannot be represented.
class StateVector {
 public:
  StateVector(BasisPtr basis, Eigen::VectorXcd amplitudes)
      : basis_(std::move(basis)), amplitudes_(std::move(amplitudes)) {
    detail::require(basis_ != nullptr, "StateVector: null basis");
    detail::require(static_cast<std::size_t>(amplitudes_.size()) == basis_->dim(),
                    "StateVector: amplitude count does not match basis dimension");
  }

  static StateVector zero(BasisPtr basis) {
    const auto n = static_cast<Eigen::Index>(basis->dim());
    return StateVector(std::move(basis), Eigen::VectorXcd::Zero(n));
  }

  /// Normalized occupation-number basis state.
  static StateVector fock(BasisPtr basis, std::span<const int> occupation) {
    const auto index = basis->index_of(occupation);
    detail::require(index.has_value(), "StateVector::fock: occupation not in sector " + basis->label());
    auto psi = zero(std::move(basis));
    psi.amplitudes_[static_cast<Eigen::Index>(*index)] = 1.0;
    return psi;
  }

  /// The unit-filling product state |1,1,...,1>. Requires N == L.
  static StateVector uniform_fock(BasisPtr basis) {
    detail::require(basis->particles() == basis->sites(), "uniform_fock: requires N == L");
    std::vector<int> ones(static_cast<std::size_t>(basis->sites()), 1);
    return fock(std::move(basis), ones);
  }

  const FockBasis& basis() const { return *basis_; }
  const BasisPtr& basis_ptr() const { return basis_; }
  std::size_t dim() const { return basis_->dim(); }

  const Eigen::VectorXcd& amplitudes() const { return amplitudes_; }
  Eigen::VectorXcd& amplitudes() { return amplitudes_; }
  Complex operator[](std::size_t i) const { return amplitudes_[static_cast<Eigen::Index>(i)]; }

  double norm() const { return amplitudes_.norm(); }

  /// Rescales to unit norm. A zero vector cannot be normalized.
  StateVector& normalize() {
    const double n = norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericGuardError("StateVector::normalize: zero or non-finite norm");
    amplitudes_ /= n;
    return *this;
  }

  StateVector normalized() const {
    StateVector copy = *this;
    copy.normalize();
    return copy;
  }

  Complex inner(const StateVector& other) const {
    check_same_basis(other);
    return amplitudes_.dot(other.amplitudes_);  // conjugates *this
  }

  double fidelity(const StateVector& other) const { return std::norm(inner(other)); }

  void check_same_basis(const StateVector& other) const {
    if (!basis_->same_sector(other.basis()))
      throw ValidationError("basis mismatch: " + basis_->label() + " vs " + other.basis().label());
  }

 private:
  BasisPtr basis_;
  Eigen::VectorXcd amplitudes_;
};

/// Spatial reflection j -> L-1-j. The left block of the reflected state is
/// the right block of the original.
inline StateVector reflected(const StateVector& psi) {
  const auto& basis = psi.basis();
  auto out = StateVector::zero(psi.basis_ptr());
  std::vector<int> occ(static_cast<std::size_t>(basis.sites()));
  for (std::size_t i = 0; i < basis.dim(); ++i) {
    const auto state = basis.state(i);
    std::reverse_copy(state.begin(), state.end(), occ.begin());
    out.amplitudes()[static_cast<Eigen::Index>(*basis.index_of(occ))] = psi[i];
  }
  return out;
}

}  // namespace mchain
