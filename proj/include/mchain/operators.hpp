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
#include <string>
#include <vector>

#include "mchain/fock_basis.hpp"
#include "mchain/sparse_operator.hpp"
#include "mchain/state_vector.hpp"

namespace mchain {

/// Monitoring channels. Sites and bonds are zero-based throughout: bond j
/// couples sites j and j+1 (j in [0, L-2]), dephasing acts on site j
/// (j in [0, L-1]).
enum class Channel { PhaseLock, Dephase };

inline const char* to_string(Channel c) { return c == Channel::PhaseLock ? "phase_lock" : "dephase"; }

/// a†_i a_j restricted to the sector. Elements that would push site i above
/// the occupation cap are dropped.
inline SparseOperator hopping(const BasisPtr& basis, int i, int j) {
  const int L = basis->sites();
  detail::require(i >= 0 && i < L && j >= 0 && j < L, "hopping: site index out of range");
  std::vector<Triplet> entries;
  entries.reserve(basis->dim());
  std::vector<int> target(static_cast<std::size_t>(L));
  for (std::size_t col = 0; col < basis->dim(); ++col) {
    const auto occ = basis->state(col);
    if (i == j) {
      if (occ[i] != 0) entries.emplace_back(col, col, static_cast<double>(occ[i]));
      continue;
    }
    if (occ[j] == 0 || occ[i] >= basis->max_occupation()) continue;
    std::copy(occ.begin(), occ.end(), target.begin());
    const double amp = std::sqrt(static_cast<double>(occ[j])) * std::sqrt(static_cast<double>(occ[i] + 1));
    target[j] -= 1;
    target[i] += 1;
    const auto row = basis->index_of(target);
    if (row) entries.emplace_back(*row, col, amp);
  }
  return SparseOperator::from_triplets(basis, entries);
}

/// n_j = a†_j a_j.
inline SparseOperator number(const BasisPtr& basis, int j) { return hopping(basis, j, j); }

/// Total particle number; proportional to the identity inside the sector.
inline SparseOperator total_number(const BasisPtr& basis) {
  return Complex(static_cast<double>(basis->particles())) * SparseOperator::identity(basis);
}

/// Phase-locking jump d_j = (a†_j + a†_{j+1})(a_j - a_{j+1}) or dephasing
/// jump c_j = a†_j a_j.
inline SparseOperator jump_operator(const BasisPtr& basis, Channel kind, int j) {
  const int L = basis->sites();
  if (kind == Channel::PhaseLock) {
    detail::require(j >= 0 && j + 1 < L, "jump_operator: phase-lock bond index out of range [0, L-2]");
    // (a†_j + a†_k)(a_j - a_k) = n_j - a†_j a_k + a†_k a_j - n_k
    const int k = j + 1;
    return number(basis, j) - hopping(basis, j, k) + hopping(basis, k, j) - number(basis, k);
  }
  detail::require(j >= 0 && j < L, "jump_operator: dephasing site index out of range [0, L-1]");
  return number(basis, j);
}

/// Normalized condensate (sum_j a†_j)^N |0> restricted to the sector. Its
/// amplitude on |n_1..n_L> is proportional to 1/sqrt(prod_j n_j!). Exact only
/// when the occupation cap does not bind (see is_exact_dark_state).
inline StateVector build_bec_dark_state(const BasisPtr& basis) {
  auto psi = StateVector::zero(basis);
  for (std::size_t i = 0; i < basis->dim(); ++i) {
    double log_weight = 0.0;
    for (int n : basis->state(i)) log_weight -= 0.5 * std::lgamma(static_cast<double>(n) + 1.0);
    psi.amplitudes()[static_cast<Eigen::Index>(i)] = std::exp(log_weight);
  }
  psi.normalize();
  return psi;
}

inline bool is_exact_dark_state(const FockBasis& basis) { return basis.max_occupation() >= basis.particles(); }

/// Named operator for snapshot observables.
struct NamedOperator {
  std::string name;
  SparseOperator op;
};

/// n_j for every site and a†_j a_{j+1} for every bond. Names are "n_<j>" and
/// "adag<i>_a<j>".
inline std::vector<NamedOperator> default_observables(const BasisPtr& basis) {
  std::vector<NamedOperator> out;
  const int L = basis->sites();
  for (int j = 0; j < L; ++j) out.push_back({"n_" + std::to_string(j), number(basis, j)});
  for (int j = 0; j + 1 < L; ++j)
    out.push_back({"adag" + std::to_string(j) + "_a" + std::to_string(j + 1), hopping(basis, j, j + 1)});
  return out;
}

}  // namespace mchain
