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

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mchain/ancilla.hpp"
#include "mchain/errors.hpp"
#include "mchain/rng.hpp"
#include "oracles.hpp"

namespace mchain {
namespace {

CircuitConfig circuit_config(double g, double kappa, std::uint64_t seed = 0) {
  CircuitConfig cfg;
  cfg.g_eff = g;
  cfg.kappa = kappa;
  cfg.seed = seed;
  return cfg;
}

TEST(CircuitConfig, DerivedQuantities) {
  const auto cfg = circuit_config(1.0, 50.0);
  EXPECT_DOUBLE_EQ(cfg.predicted_rate(), 1.0 / 50.0);
  EXPECT_TRUE(cfg.born_markov_regime());
  EXPECT_FALSE(circuit_config(1.0, 5.0).born_markov_regime());
  EXPECT_DOUBLE_EQ(cfg.time_step(), 0.25 / 50.0);
  EXPECT_DOUBLE_EQ(cfg.horizon(), 20.0 * 50.0);
  EXPECT_THROW(circuit_config(1.0, 0.0).validate(), ValidationError);
  auto bad = cfg;
  bad.dt = 1.0;
  bad.t_max = 0.5;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(AncillaCircuit, CompositeOrderingAndPauliMatrices) {
  Eigen::MatrixXcd c(2, 2);
  c << 1.0, 2.0, 3.0, 4.0;
  const auto k = AncillaCircuit::kron(c, AncillaCircuit::sigma_x());
  EXPECT_LT((k - oracle::kron(c, AncillaCircuit::sigma_x())).cwiseAbs().maxCoeff(), 1e-15);
  // σ⁻ lowers the ancilla: |1> -> |0>.
  Eigen::Vector2cd excited(0.0, 1.0);
  EXPECT_EQ((AncillaCircuit::sigma_minus() * excited)[0], Complex(1.0));
}

TEST(PhaseLockCircuit, CouplingMatchesPairJumpOperator) {
  const auto pair = build_basis(2, 2, 2);
  const auto cfg = circuit_config(0.7, 20.0);
  const auto circuit = phaselock_circuit(cfg, pair);
  const auto p = oracle::embedding(2, 2, 2);
  const auto a1 = oracle::annihilator(2, 2, 0), a2 = oracle::annihilator(2, 2, 1);
  const oracle::Matrix d = oracle::restrict((a1.adjoint() + a2.adjoint()) * (a1 - a2), p);
  const auto& h = circuit.hamiltonian();
  EXPECT_LT((h - h.adjoint()).cwiseAbs().maxCoeff(), 1e-15);
  for (Eigen::Index r = 0; r < 3; ++r)
    for (Eigen::Index c = 0; c < 3; ++c) {
      // Raising the ancilla applies (g/2) d to the cavities.
      EXPECT_NEAR(std::abs(h(2 * r + 1, 2 * c) - 0.35 * d(r, c)), 0.0, 1e-15);
      EXPECT_NEAR(std::abs(h(2 * r, 2 * c)), 0.0, 1e-15);
      EXPECT_NEAR(std::abs(h(2 * r + 1, 2 * c + 1)), 0.0, 1e-15);
    }
}

TEST(PhaseLockCircuit, StarkTermActsOnGroundAncillaOnly) {
  const auto pair = build_basis(2, 2, 2);
  auto cfg = circuit_config(1.0, 20.0);
  cfg.h_eff = 0.3;
  const auto with = phaselock_circuit(cfg, pair).hamiltonian();
  cfg.h_eff = 0.0;
  const auto without = phaselock_circuit(cfg, pair).hamiltonian();
  const Eigen::MatrixXcd diff = with - without;
  const auto p = oracle::embedding(2, 2, 2);
  const auto a1 = oracle::annihilator(2, 2, 0), a2 = oracle::annihilator(2, 2, 1);
  // (a1 - a2)(a1† - a2†) in the product space, restricted to N = 2. The
  // truncated product differs from the normal-ordered form at the cap, so
  // compare on the states that stay below it.
  const oracle::Matrix stark = oracle::restrict((a1 - a2) * (a1.adjoint() - a2.adjoint()), p);
  const auto idx = *pair->index_of(std::vector<int>{1, 1});
  for (Eigen::Index r = 0; r < 3; ++r) {
    EXPECT_NEAR(std::abs(diff(2 * r, 2 * static_cast<Eigen::Index>(idx)) -
                         0.3 * stark(r, static_cast<Eigen::Index>(idx))),
                0.0, 1e-14);
    for (Eigen::Index c = 0; c < 3; ++c) EXPECT_EQ(std::abs(diff(2 * r + 1, 2 * c + 1)), 0.0);
  }
}

TEST(AncillaCircuit, PropagatorMatchesTaylorSeries) {
  const auto pair = build_basis(2, 2, 2);
  const auto cfg = circuit_config(1.0, 10.0);
  const auto circuit = phaselock_circuit(cfg, pair);
  const Eigen::MatrixXcd hnh =
      circuit.hamiltonian() - Complex(0.0, 0.5) * (circuit.jump().adjoint() * circuit.jump());
  const Eigen::MatrixXcd x = Complex(0.0, -cfg.time_step()) * hnh;
  Eigen::MatrixXcd term = Eigen::MatrixXcd::Identity(x.rows(), x.cols()), sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * x / static_cast<double>(k);
    sum += term;
  }
  EXPECT_LT((circuit.propagator() - sum).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PhaseLockCircuit, NoCouplingNoClicks) {
  auto cfg = circuit_config(0.0, 20.0);
  cfg.t_max = 50.0;
  const auto traj = run_phaselock_circuit(cfg, {1, 1}, 2, 3);
  EXPECT_TRUE(traj.clicks.empty());
  EXPECT_EQ(traj.max_ancilla_population, 0.0);
}

TEST(PhaseLockCircuit, FirstClickProducesAntisymmetricPair) {
  const auto cfg = circuit_config(1.0, std::sqrt(500.0));
  const auto pair = build_basis(2, 2, 2);
  const auto circuit = phaselock_circuit(cfg, pair);
  Eigen::VectorXcd target = Eigen::VectorXcd::Zero(3);
  target[static_cast<Eigen::Index>(*pair->index_of(std::vector<int>{0, 2}))] = 1.0 / std::sqrt(2.0);
  target[static_cast<Eigen::Index>(*pair->index_of(std::vector<int>{2, 0}))] = -1.0 / std::sqrt(2.0);
  int clicked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto traj = run_phaselock_circuit(cfg, {1, 1}, 2, seed, true);
    if (traj.clicks.empty()) continue;
    ++clicked;
    const Eigen::MatrixXcd rho = circuit.cavity_density(traj.final_state);
    EXPECT_GT(target.dot(rho * target).real(), 0.95) << "seed " << seed;
    EXPECT_LT(traj.max_norm_error, 1e-10);
  }
  EXPECT_GT(clicked, 10);
}

TEST(PhaseLockCircuit, CavityEntropyRisesAtClicks) {
  auto cfg = circuit_config(1.0, std::sqrt(500.0));
  cfg.t_max = 3.0 / (4.0 * cfg.predicted_rate());
  const auto runs = run_circuit_ensemble(60, 17, 1, [&](std::uint64_t s) { return run_phaselock_circuit(cfg, {1, 1}, 2, s); });
  int up = 0, total = 0;
  for (const auto& r : runs)
    for (const auto& c : r.clicks) {
      ++total;
      up += c.entropy_after > c.entropy_before;
    }
  ASSERT_GT(total, 30);
  EXPECT_GT(static_cast<double>(up) / total, 0.8);
}

TEST(DephasingCircuit, NumberStateIsInvariantAndClicksSteadily) {
  auto cfg = circuit_config(1.0, std::sqrt(500.0));
  const int n = 2;
  Eigen::VectorXcd cavity = Eigen::VectorXcd::Zero(4);
  cavity[n] = 1.0;
  const auto runs = run_circuit_ensemble(40, 5, 1, [&](std::uint64_t s) {
    return run_dephasing_circuit(cfg, cavity, s, 0.0);
  });
  const double horizon = cfg.horizon();
  double clicks = 0.0;
  for (const auto& r : runs) {
    EXPECT_LT(r.max_cavity_coherence, 1e-10);
    const auto rho = dephasing_circuit(cfg, 3).cavity_density(r.final_state);
    EXPECT_NEAR(rho(n, n).real(), 1.0, 1e-12);
    clicks += static_cast<double>(r.clicks.size());
  }
  // Adiabatic elimination gives the rate (g n)² / κ.
  const double expected = n * n * cfg.predicted_rate() * horizon * 40.0;
  EXPECT_NEAR(clicks, expected, 4.0 * std::sqrt(expected));
}

TEST(DephasingCircuit, SuperpositionCollapsesWithMoreClicksOnHigherLevel) {
  const auto cfg = circuit_config(1.0, std::sqrt(500.0));
  Eigen::VectorXcd cavity = Eigen::VectorXcd::Zero(4);
  cavity[1] = cavity[3] = 1.0 / std::sqrt(2.0);
  const auto runs = run_circuit_ensemble(200, 23, 1, [&](std::uint64_t s) { return run_dephasing_circuit(cfg, cavity, s); });
  int low = 0, high = 0;
  double clicks_low = 0, clicks_high = 0;
  for (const auto& r : runs) {
    ASSERT_TRUE(r.collapsed_level.has_value());
    EXPECT_LT(r.max_ancilla_population, 0.05);
    EXPECT_LT(r.max_norm_error, 1e-10);
    if (*r.collapsed_level == 1) {
      ++low;
      clicks_low += static_cast<double>(r.clicks.size());
    } else {
      ASSERT_EQ(*r.collapsed_level, 3);
      ++high;
      clicks_high += static_cast<double>(r.clicks.size());
    }
  }
  ASSERT_GT(low, 0);
  ASSERT_GT(high, 0);
  EXPECT_NEAR(low / 200.0, 0.5, 4.0 * std::sqrt(0.25 / 200.0));
  EXPECT_GT(clicks_high / high, clicks_low / low);
}

TEST(CircuitEnsemble, IndependentOfWorkerCount) {
  const auto cfg = circuit_config(1.0, 20.0);
  Eigen::VectorXcd cavity = Eigen::VectorXcd::Zero(4);
  cavity[1] = cavity[3] = 1.0 / std::sqrt(2.0);
  auto run = [&](std::uint64_t s) { return run_dephasing_circuit(cfg, cavity, s); };
  const auto a = run_circuit_ensemble(12, 4, 1, run);
  const auto b = run_circuit_ensemble(12, 4, 4, run);
  for (std::size_t m = 0; m < 12; ++m) {
    EXPECT_EQ(a[m].seed, derive_seed(4, m));
    EXPECT_EQ(a[m].clicks.size(), b[m].clicks.size());
    EXPECT_EQ(a[m].final_state, b[m].final_state);
  }
}

TEST(FirstClickFit, RecoversRateFromCensoredExponentialSample) {
  Rng rng(8);
  const double rate = 0.4, horizon = 4.0;
  std::vector<double> times;
  std::size_t censored = 0;
  for (int i = 0; i < 20000; ++i) {
    const double t = -std::log(1.0 - rng.uniform()) / rate;
    if (t <= horizon) {
      times.push_back(t);
    } else {
      ++censored;
    }
  }
  const auto fit = fit_first_click(times, censored, horizon);
  EXPECT_NEAR(fit.hazard, rate, 0.03 * rate);
  EXPECT_LT(fit.dark_fraction, 0.05);
}

TEST(FirstClickFit, SeparatesDarkFraction) {
  Rng rng(9);
  const double rate = 1.0, dark = 0.3, horizon = 8.0;
  std::vector<double> times;
  std::size_t censored = 0;
  for (int i = 0; i < 20000; ++i) {
    if (rng.uniform() < dark) {
      ++censored;
      continue;
    }
    const double t = -std::log(1.0 - rng.uniform()) / rate;
    if (t <= horizon) {
      times.push_back(t);
    } else {
      ++censored;
    }
  }
  const auto fit = fit_first_click(times, censored, horizon);
  EXPECT_NEAR(fit.decay_rate, rate, 0.03);
  EXPECT_NEAR(fit.dark_fraction, dark, 0.02);
  EXPECT_NEAR(fit.hazard, (1.0 - dark) * rate, 0.03);
}

TEST(FirstClickFit, EmptySampleHasZeroHazard) {
  const auto fit = fit_first_click({}, 10, 1.0);
  EXPECT_EQ(fit.hazard, 0.0);
  EXPECT_EQ(fit.censored, 10u);
}

TEST(RateCheck, ConvergesTowardPredictionAsKappaGrows) {
  CircuitConfig base = circuit_config(1.0, 1.0, 99);
  const auto points = born_markov_rate_check(base, {5.0, 50.0}, 800);
  ASSERT_EQ(points.size(), 2u);
  EXPECT_TRUE(points[0].sufficient && points[1].sufficient);
  EXPECT_DOUBLE_EQ(points[1].predicted, 4.0 / 50.0);
  EXPECT_LT(points[1].relative_error, 0.15);
  EXPECT_GT(points[0].relative_error, points[1].relative_error);
}

}  // namespace
}  // namespace mchain
