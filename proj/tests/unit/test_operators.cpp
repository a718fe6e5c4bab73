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

#include <cmath>
#include <complex>
#include <vector>

#include <gtest/gtest.h>

#include "mchain/errors.hpp"
#include "mchain/operators.hpp"
#include "oracles.hpp"

namespace mchain {
namespace {

const double kSqrt2 = std::sqrt(2.0);

StateVector fock(const BasisPtr& b, std::vector<int> occ) { return StateVector::fock(b, occ); }

Complex amp(const StateVector& psi, std::vector<int> occ) { return psi[*psi.basis().index_of(occ)]; }

oracle::Matrix dense_jump(int L, int nmax, Channel kind, int j) {
  const auto a = oracle::annihilator(L, nmax, j);
  if (kind == Channel::Dephase) return a.adjoint() * a;
  const auto b = oracle::annihilator(L, nmax, j + 1);
  return (a.adjoint() + b.adjoint()) * (a - b);
}

TEST(Operators, PhaseLockOnTwoSingles) {
  auto basis = build_basis(2, 2, 2);
  const auto out = apply(jump_operator(basis, Channel::PhaseLock, 0), fock(basis, {1, 1}));
  EXPECT_NEAR(std::abs(amp(out, {0, 2}) - kSqrt2), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(amp(out, {2, 0}) + kSqrt2), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(amp(out, {1, 1})), 0.0, 1e-14);
}

TEST(Operators, PhaseLockOnTwoSinglesMatchesDenseProduct) {
  const auto d = dense_jump(2, 2, Channel::PhaseLock, 0);
  oracle::Vector in = oracle::Vector::Zero(9);
  in[oracle::product_index({1, 1}, 2)] = 1.0;
  const oracle::Vector out = d * in;
  EXPECT_NEAR(std::abs(out[oracle::product_index({0, 2}, 2)] - kSqrt2), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(out[oracle::product_index({2, 0}, 2)] + kSqrt2), 0.0, 1e-14);
  EXPECT_NEAR(out.norm(), 2.0, 1e-14);
}

TEST(Operators, DephasingIsNumberEigenvalue) {
  auto basis = build_basis(4, 5, 3);
  for (int j = 0; j < 4; ++j) {
    const auto c = jump_operator(basis, Channel::Dephase, j);
    for (std::size_t i = 0; i < basis->dim(); ++i) {
      auto e = StateVector::zero(basis);
      e.amplitudes()[static_cast<Eigen::Index>(i)] = 1.0;
      const auto out = apply(c, e);
      EXPECT_NEAR((out.amplitudes() - basis->occupation(i, j) * e.amplitudes()).norm(), 0.0, 1e-15);
    }
  }
}

TEST(Operators, SymmetricPairIsAnnihilated) {
  auto basis = build_basis(2, 2, 2);
  auto psi = StateVector::zero(basis);
  // (a†_0 + a†_1)^2 |0,0> = √2|2,0> + 2|1,1> + √2|0,2>
  psi.amplitudes()[*basis->index_of(std::vector<int>{0, 2})] = kSqrt2;
  psi.amplitudes()[*basis->index_of(std::vector<int>{1, 1})] = 2.0;
  psi.amplitudes()[*basis->index_of(std::vector<int>{2, 0})] = kSqrt2;
  psi.normalize();
  EXPECT_LT(apply(jump_operator(basis, Channel::PhaseLock, 0), psi).norm(), 1e-14);
}

TEST(Operators, IdentityLeavesStateUnchanged) {
  auto basis = build_basis(3, 3, 3);
  auto psi = build_bec_dark_state(basis);
  const auto before = psi.amplitudes();
  const auto out = apply(SparseOperator::identity(basis), psi);
  EXPECT_EQ(out.amplitudes(), before);
  EXPECT_EQ(psi.amplitudes(), before);
}

TEST(Operators, NumberOnSingles) {
  auto basis = build_basis(2, 2, 2);
  const auto psi = fock(basis, {1, 1});
  EXPECT_EQ(apply(number(basis, 0), psi).amplitudes(), psi.amplitudes());
  EXPECT_NEAR(expectation(number(basis, 0), psi).real(), 1.0, 1e-15);
}

TEST(Operators, PhaseLockOnAntisymmetricPairMatchesDense) {
  auto basis = build_basis(2, 2, 2);
  auto psi = StateVector::zero(basis);
  psi.amplitudes()[*basis->index_of(std::vector<int>{0, 2})] = 1.0 / kSqrt2;
  psi.amplitudes()[*basis->index_of(std::vector<int>{2, 0})] = -1.0 / kSqrt2;
  const auto out = apply(jump_operator(basis, Channel::PhaseLock, 0), psi);

  const auto p = oracle::embedding(2, 2, 2);
  const oracle::Vector dense_out = p.adjoint() * dense_jump(2, 2, Channel::PhaseLock, 0) * p * psi.amplitudes();
  EXPECT_LT((out.amplitudes() - dense_out).norm(), 1e-14);
}

TEST(Operators, PhaseLockRateOnSingles) {
  auto basis = build_basis(2, 2, 2);
  const auto d = jump_operator(basis, Channel::PhaseLock, 0);
  const auto psi = fock(basis, {1, 1});
  EXPECT_NEAR(expectation(d.adjoint() * d, psi).real(), 4.0, 1e-13);

  const auto p = oracle::embedding(2, 2, 2);
  const auto dd = dense_jump(2, 2, Channel::PhaseLock, 0);
  const oracle::Matrix restricted = oracle::restrict(dd.adjoint() * dd, p);
  const Complex dense = psi.amplitudes().dot(restricted * psi.amplitudes());
  EXPECT_NEAR(dense.real(), 4.0, 1e-13);
}

TEST(Operators, DephasingSquareOnUniformFilling) {
  auto basis = build_basis(4, 4, 4);
  const auto psi = StateVector::uniform_fock(basis);
  for (int j = 0; j < 4; ++j) {
    const auto c = jump_operator(basis, Channel::Dephase, j);
    EXPECT_NEAR(expectation(c.adjoint() * c, psi).real(), 1.0, 1e-15);
  }
}

TEST(Operators, RejectsOutOfRangeIndices) {
  auto basis = build_basis(3, 3, 3);
  EXPECT_THROW(jump_operator(basis, Channel::PhaseLock, 2), ValidationError);
  EXPECT_THROW(jump_operator(basis, Channel::PhaseLock, -1), ValidationError);
  EXPECT_THROW(jump_operator(basis, Channel::Dephase, 3), ValidationError);
  EXPECT_NO_THROW(jump_operator(basis, Channel::Dephase, 2));
  EXPECT_THROW(hopping(basis, 0, 3), ValidationError);
}

TEST(Operators, MismatchedBasisIsRejected) {
  const auto op = number(build_basis(3, 3, 3), 0);
  const auto psi = StateVector::uniform_fock(build_basis(3, 3, 2));
  EXPECT_THROW(apply(op, psi), ValidationError);
  EXPECT_THROW((void)expectation(op, psi), ValidationError);
  EXPECT_THROW((void)(op + number(build_basis(3, 3, 2), 0)), ValidationError);
}

struct Sector {
  int L, N, nmax;
};

class DenseOracle : public ::testing::TestWithParam<Sector> {};

TEST_P(DenseOracle, EveryJumpMatchesKroneckerConstruction) {
  const auto [L, N, nmax] = GetParam();
  auto basis = build_basis(L, N, nmax);
  ASSERT_LE(basis->dim(), 50u);
  const auto p = oracle::embedding(L, N, nmax);
  for (int j = 0; j + 1 < L; ++j) {
    const auto sparse = jump_operator(basis, Channel::PhaseLock, j).to_dense();
    const auto dense = oracle::restrict(dense_jump(L, nmax, Channel::PhaseLock, j), p);
    EXPECT_LT((sparse - dense).cwiseAbs().maxCoeff(), 1e-14) << "bond " << j;
  }
  for (int j = 0; j < L; ++j) {
    const auto sparse = jump_operator(basis, Channel::Dephase, j).to_dense();
    const auto dense = oracle::restrict(dense_jump(L, nmax, Channel::Dephase, j), p);
    EXPECT_LT((sparse - dense).cwiseAbs().maxCoeff(), 1e-14) << "site " << j;
  }
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) {
      const auto ai = oracle::annihilator(L, nmax, i), aj = oracle::annihilator(L, nmax, j);
      const auto dense = oracle::restrict(ai.adjoint() * aj, p);
      EXPECT_LT((hopping(basis, i, j).to_dense() - dense).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST_P(DenseOracle, JumpsConserveNumber) {
  const auto [L, N, nmax] = GetParam();
  auto basis = build_basis(L, N, nmax);
  const auto p = oracle::embedding(L, N, nmax);
  const oracle::Matrix outside = oracle::Matrix::Identity(p.rows(), p.rows()) - p * p.adjoint();
  for (int j = 0; j + 1 < L; ++j) {
    // Leakage of the product-space operator out of the sector must vanish.
    const auto d = dense_jump(L, nmax, Channel::PhaseLock, j);
    EXPECT_EQ((outside * d * p).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST_P(DenseOracle, DecayOperatorsArePositiveSemidefinite) {
  const auto [L, N, nmax] = GetParam();
  auto basis = build_basis(L, N, nmax);
  for (int j = 0; j + 1 < L; ++j) {
    const auto d = jump_operator(basis, Channel::PhaseLock, j);
    const auto dd = (d.adjoint() * d).to_dense();
    EXPECT_LT((dd - dd.adjoint()).cwiseAbs().maxCoeff(), 1e-14);
    for (double ev : oracle::eigenvalues(dd)) EXPECT_GE(ev, -1e-10);
  }
  for (int j = 0; j < L; ++j) EXPECT_TRUE(jump_operator(basis, Channel::Dephase, j).is_hermitian());
}

INSTANTIATE_TEST_SUITE_P(Sectors, DenseOracle,
                         ::testing::Values(Sector{2, 2, 2}, Sector{3, 3, 3}, Sector{3, 3, 2}, Sector{4, 4, 2},
                                           Sector{4, 4, 1}, Sector{3, 4, 2}, Sector{2, 5, 4}));

TEST(Operators, RaisingTheCapBeyondNChangesNothing) {
  auto tight = build_basis(4, 4, 4);
  auto loose = build_basis(4, 4, 7);
  ASSERT_EQ(tight->dim(), loose->dim());
  for (int j = 0; j < 3; ++j) {
    const auto a = jump_operator(tight, Channel::PhaseLock, j).to_dense();
    const auto b = jump_operator(loose, Channel::PhaseLock, j).to_dense();
    EXPECT_EQ((a - b).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(DarkState, TwoSiteAmplitudes) {
  auto basis = build_basis(2, 2, 2);
  const auto d = build_bec_dark_state(basis);
  EXPECT_NEAR(amp(d, {0, 2}).real(), 0.5, 1e-15);
  EXPECT_NEAR(amp(d, {1, 1}).real(), kSqrt2 / 2.0, 1e-15);
  EXPECT_NEAR(amp(d, {2, 0}).real(), 0.5, 1e-15);
}

TEST(DarkState, AnnihilatedByEveryPhaseLockJump) {
  for (int L = 2; L <= 6; ++L) {
    auto basis = build_basis(L, L, L);
    ASSERT_TRUE(is_exact_dark_state(*basis));
    const auto d = build_bec_dark_state(basis);
    EXPECT_NEAR(d.norm(), 1.0, 1e-12);
    for (int j = 0; j + 1 < L; ++j)
      EXPECT_LT(apply(jump_operator(basis, Channel::PhaseLock, j), d).norm(), 1e-10) << "L=" << L << " j=" << j;
  }
}

TEST(DarkState, UniformDensityAndPermutationSymmetry) {
  auto basis = build_basis(5, 5, 5);
  const auto d = build_bec_dark_state(basis);
  for (int j = 0; j < 5; ++j) EXPECT_NEAR(expectation(number(basis, j), d).real(), 1.0, 1e-12);
  for (std::size_t i = 0; i < basis->dim(); ++i) {
    std::vector<int> rev(basis->state(i).rbegin(), basis->state(i).rend());
    EXPECT_NEAR(std::abs(d[i] - amp(d, rev)), 0.0, 1e-15);
  }
}

TEST(DarkState, TruncatedCapIsFlaggedAndOnlyApproximate) {
  auto basis = build_basis(4, 4, 2);
  EXPECT_FALSE(is_exact_dark_state(*basis));
  const auto d = build_bec_dark_state(basis);
  double worst = 0.0;
  for (int j = 0; j < 3; ++j) worst = std::max(worst, apply(jump_operator(basis, Channel::PhaseLock, j), d).norm());
  EXPECT_GT(worst, 1e-6);
}

TEST(Observables, DefaultNamesAndCount) {
  auto basis = build_basis(3, 3, 3);
  const auto obs = default_observables(basis);
  ASSERT_EQ(obs.size(), 5u);
  EXPECT_EQ(obs[0].name, "n_0");
  EXPECT_EQ(obs[2].name, "n_2");
  EXPECT_EQ(obs[3].name, "adag0_a1");
  EXPECT_EQ(obs[4].name, "adag1_a2");
}

TEST(Observables, HermitianExpectationIsReal) {
  auto basis = build_basis(3, 3, 3);
  auto psi = StateVector::zero(basis);
  for (std::size_t i = 0; i < psi.dim(); ++i)
    psi.amplitudes()[static_cast<Eigen::Index>(i)] = Complex(std::sin(1.0 + i), std::cos(2.0 * i));
  psi.normalize();
  for (int j = 0; j < 2; ++j) {
    const auto d = jump_operator(basis, Channel::PhaseLock, j);
    EXPECT_LT(std::abs(expectation(d.adjoint() * d, psi).imag()), 1e-12);
  }
}

}  // namespace
}  // namespace mchain
