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
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "mchain/errors.hpp"
#include "mchain/operators.hpp"
#include "mchain/trajectory.hpp"

namespace mchain {
namespace {

StateVector fock(const BasisPtr& b, std::vector<int> occ) { return StateVector::fock(b, occ); }

MonitoringConfig config(double lambda, double gamma_rate, double dt, double t_max, std::uint64_t seed,
                        std::vector<double> snaps = {}) {
  MonitoringConfig cfg;
  cfg.phase_lock_rate = lambda;
  cfg.dephase_rate = gamma_rate;
  cfg.dt = dt;
  cfg.t_max = t_max;
  cfg.seed = seed;
  cfg.snapshot_times = std::move(snaps);
  return cfg;
}

// Asymptotic Kolmogorov survival function Q_KS(λ).
double kolmogorov_q(double lambda) {
  double q = 0.0;
  for (int k = 1; k <= 100; ++k) q += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(q, 0.0, 1.0);
}

TEST(MonitoringConfig, GammaIsDerivedFromRates) {
  const auto cfg = config(2.0, 3.0, 1e-3, 1.0, 0);
  EXPECT_DOUBLE_EQ(cfg.gamma(), 1.5);
  EXPECT_TRUE(std::isinf(config(0.0, 1.0, 1e-3, 1.0, 0).gamma()));
}

TEST(MonitoringConfig, ValidationRejectsBadValues) {
  EXPECT_THROW(config(0.0, 0.0, 1e-3, 1.0, 0).validate(), ValidationError);
  EXPECT_THROW(config(-1.0, 1.0, 1e-3, 1.0, 0).validate(), ValidationError);
  EXPECT_THROW(config(1.0, 1.0, -1e-3, 1.0, 0).validate(), ValidationError);
  EXPECT_THROW(config(1.0, 1.0, 1e-3, 0.0, 0).validate(), ValidationError);
  EXPECT_THROW(config(1.0, 1.0, 1e-3, 1.0, 0, {0.5, 0.2}).validate(), ValidationError);
  EXPECT_THROW(config(1.0, 1.0, 1e-3, 1.0, 0, {2.0}).validate(), ValidationError);
  EXPECT_NO_THROW(config(1.0, 1.0, 1e-3, 1.0, 0, {0.0, 1.0}).validate());
}

TEST(Step, DarkStateNeverJumps) {
  auto basis = build_basis(3, 3, 3);
  const MonitoredChain chain(basis, 1.0, 0.0);
  auto psi = build_bec_dark_state(basis);
  const auto d = psi;
  EXPECT_LT(chain.total_rate(psi), 1e-13);
  Eigen::VectorXcd scratch(static_cast<Eigen::Index>(psi.dim()));
  for (int k = 0; k < 100; ++k) EXPECT_FALSE(chain.step(psi, 0.0, 1e-2, 0.0, scratch).has_value());
  EXPECT_GT(psi.fidelity(d), 1.0 - 1e-14);
}

TEST(Step, FockStateIsStationaryUnderDephasing) {
  auto basis = build_basis(3, 3, 3);
  const MonitoredChain chain(basis, 0.0, 1.0);
  auto psi = fock(basis, {1, 1, 1});
  const auto start = psi;
  EXPECT_NEAR(chain.total_rate(psi), 3.0, 1e-14);
  Eigen::VectorXcd scratch(static_cast<Eigen::Index>(psi.dim()));
  const double dt = 1e-2;
  // The single draw walks the ordered channel list: d_0, d_1 (rate 0), then c_0, c_1, c_2.
  auto j0 = chain.step(psi, 0.0, dt, 0.5 * dt, scratch);
  auto j1 = chain.step(psi, 0.0, dt, 1.5 * dt, scratch);
  auto j2 = chain.step(psi, 0.0, dt, 2.5 * dt, scratch);
  auto none = chain.step(psi, 0.0, dt, 3.5 * dt, scratch);
  ASSERT_TRUE(j0 && j1 && j2);
  EXPECT_EQ(j0->channel, Channel::Dephase);
  EXPECT_EQ(j0->site, 0);
  EXPECT_EQ(j1->site, 1);
  EXPECT_EQ(j2->site, 2);
  EXPECT_DOUBLE_EQ(j0->time, dt);
  EXPECT_FALSE(none.has_value());
  EXPECT_GT(psi.fidelity(start), 1.0 - 1e-14);
}

TEST(Step, PhaseLockJumpFromSingles) {
  auto basis = build_basis(2, 2, 2);
  const MonitoredChain chain(basis, 1.0, 0.0);
  auto psi = fock(basis, {1, 1});
  EXPECT_NEAR(chain.total_rate(psi), 4.0, 1e-13);
  const double dt = 1e-3;
  Eigen::VectorXcd scratch(static_cast<Eigen::Index>(psi.dim()));
  EXPECT_FALSE(chain.step(psi, 0.0, dt, 4.0 * dt * (1.0 + 1e-9), scratch).has_value());
  psi = fock(basis, {1, 1});
  const auto jump = chain.step(psi, 0.0, dt, 4.0 * dt * (1.0 - 1e-9), scratch);
  ASSERT_TRUE(jump.has_value());
  EXPECT_EQ(jump->channel, Channel::PhaseLock);
  EXPECT_EQ(jump->site, 0);
  const double r = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(std::abs(psi[*basis->index_of(std::vector<int>{0, 2})] - r), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(psi[*basis->index_of(std::vector<int>{2, 0})] + r), 0.0, 1e-14);
}

TEST(Step, OversizedStepTripsGuard) {
  auto basis = build_basis(2, 2, 2);
  const MonitoredChain chain(basis, 1.0, 0.0);
  auto psi = fock(basis, {1, 1});
  Eigen::VectorXcd scratch(static_cast<Eigen::Index>(psi.dim()));
  EXPECT_THROW(chain.step(psi, 0.0, 0.03, 0.9, scratch), NumericGuardError);
  EXPECT_NO_THROW(chain.step(psi, 0.0, 0.02, 0.9, scratch));
}

TEST(Step, DefaultTimeStepRespectsTarget) {
  for (double g : {0.1, 1.0, 8.0}) {
    auto basis = build_basis(4, 4, 3);
    const MonitoredChain chain(basis, 1.0, g);
    const double dt = chain.default_time_step();
    // Largest eigenvalue of K bounds the step probability of any state.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(chain.decay_operator().to_dense());
    EXPECT_LE(dt * es.eigenvalues().maxCoeff(), 1e-3 * (1.0 + 1e-12));
  }
}

TEST(Trajectory, DephasingFromFockKeepsStateAndCountsPoisson) {
  auto basis = build_basis(3, 3, 3);
  const MonitoredChain chain(basis, 0.0, 1.0);
  const auto psi0 = fock(basis, {1, 1, 1});
  auto cfg = config(0.0, 1.0, 1e-3, 10.0, 2024);
  const auto ens = run_ensemble(chain, cfg, psi0, SnapshotRecorder::observables_only({}), 500);
  std::vector<double> counts;
  for (const auto& t : ens.trajectories) {
    counts.push_back(static_cast<double>(t.jumps.size()));
    EXPECT_GT(t.final_state.fidelity(psi0), 1.0 - 1e-12);
  }
  const auto stats = mean_and_stderr(counts);
  EXPECT_NEAR(stats.mean, 30.0, 3.0 * std::sqrt(30.0 / 500.0));
}

TEST(Trajectory, DarkStateHasEmptyJumpLog) {
  auto basis = build_basis(4, 4, 4);
  const MonitoredChain chain(basis, 1.0, 0.0);
  const auto d = build_bec_dark_state(basis);
  const auto traj = run_trajectory(chain, config(1.0, 0.0, 1e-3, 5.0, 1), d, SnapshotRecorder::observables_only({}));
  EXPECT_TRUE(traj.jumps.empty());
  EXPECT_GT(traj.final_state.fidelity(d), 1.0 - 1e-12);
}

TEST(Trajectory, SameSeedReplaysIdentically) {
  auto basis = build_basis(4, 4, 3);
  const MonitoredChain chain(basis, 1.0, 1.0);
  const auto psi0 = StateVector::uniform_fock(basis);
  const auto cfg = config(1.0, 1.0, 0.0, 3.0, 77, {1.0, 3.0});
  const auto rec = SnapshotRecorder::observables_only(default_observables(basis));
  const auto a = run_trajectory(chain, cfg, psi0, rec);
  const auto b = run_trajectory(chain, cfg, psi0, rec);
  ASSERT_EQ(a.jumps.size(), b.jumps.size());
  ASSERT_FALSE(a.jumps.empty());
  for (std::size_t k = 0; k < a.jumps.size(); ++k) {
    EXPECT_EQ(a.jumps[k].time, b.jumps[k].time);
    EXPECT_EQ(a.jumps[k].channel, b.jumps[k].channel);
    EXPECT_EQ(a.jumps[k].site, b.jumps[k].site);
  }
  EXPECT_EQ(a.final_state.amplitudes(), b.final_state.amplitudes());
  const auto c = run_trajectory(chain, cfg, psi0, rec, 78);
  EXPECT_NE(c.final_state.amplitudes(), a.final_state.amplitudes());
}

TEST(Trajectory, JumpTimesStrictlyIncrease) {
  auto basis = build_basis(4, 4, 3);
  const MonitoredChain chain(basis, 1.0, 2.0);
  const auto traj = run_trajectory(chain, config(1.0, 2.0, 0.0, 5.0, 5), StateVector::uniform_fock(basis),
                                   SnapshotRecorder::observables_only({}));
  ASSERT_GT(traj.jumps.size(), 2u);
  for (std::size_t k = 1; k < traj.jumps.size(); ++k) EXPECT_LT(traj.jumps[k - 1].time, traj.jumps[k].time);
}

TEST(Trajectory, SnapshotsAreNormalizedAndConserveNumber) {
  auto basis = build_basis(4, 4, 3);
  const MonitoredChain chain(basis, 1.0, 0.7);
  auto rec = SnapshotRecorder::observables_only(default_observables(basis));
  rec.keep_states = true;
  const auto ens = run_ensemble(chain, config(1.0, 0.7, 0.0, 4.0, 3, {0.0, 0.5, 1.0, 2.0, 4.0}),
                                StateVector::uniform_fock(basis), rec, 20);
  for (const auto& t : ens.trajectories) {
    ASSERT_EQ(t.snapshots.size(), 5u);
    for (const auto& s : t.snapshots) {
      ASSERT_TRUE(s.state.has_value());
      EXPECT_NEAR(s.state->norm(), 1.0, 1e-10);
      double total = 0.0;
      for (int j = 0; j < 4; ++j) total += s.observables[static_cast<std::size_t>(j)].real();
      EXPECT_NEAR(total, 4.0, 1e-10);
      // Recompute N from the stored state with an independent operator sum.
      Complex n = 0.0;
      for (int j = 0; j < 4; ++j) n += expectation(number(basis, j), *s.state);
      EXPECT_NEAR(n.real(), 4.0, 1e-10);
    }
  }
}

TEST(Ensemble, SingleTrajectoryUsesFirstDerivedSeed) {
  auto basis = build_basis(3, 3, 3);
  const MonitoredChain chain(basis, 1.0, 1.0);
  const auto cfg = config(1.0, 1.0, 0.0, 2.0, 99, {2.0});
  const auto rec = SnapshotRecorder::observables_only(default_observables(basis));
  const auto psi0 = StateVector::uniform_fock(basis);
  const auto ens = run_ensemble(chain, cfg, psi0, rec, 1);
  const auto single = run_trajectory(chain, cfg, psi0, rec, derive_seed(99, 0));
  EXPECT_EQ(ens.trajectories[0].seed, derive_seed(99, 0));
  EXPECT_EQ(ens.trajectories[0].final_state.amplitudes(), single.final_state.amplitudes());
  EXPECT_EQ(ens.trajectories[0].jumps.size(), single.jumps.size());
}

TEST(Ensemble, WorkerCountDoesNotChangeResults) {
  auto basis = build_basis(4, 4, 3);
  const MonitoredChain chain(basis, 1.0, 0.5);
  const auto cfg = config(1.0, 0.5, 0.0, 2.0, 5, {1.0, 2.0});
  const auto rec = SnapshotRecorder::with_entropies(*basis, default_observables(basis), {EntropyKind::von_neumann()});
  const auto psi0 = StateVector::uniform_fock(basis);
  const auto one = run_ensemble(chain, cfg, psi0, rec, 16, 1);
  const auto many = run_ensemble(chain, cfg, psi0, rec, 16, 8);
  for (std::size_t m = 0; m < 16; ++m) {
    EXPECT_EQ(one.trajectories[m].final_state.amplitudes(), many.trajectories[m].final_state.amplitudes());
    for (std::size_t s = 0; s < 2; ++s) {
      EXPECT_EQ(one.trajectories[m].snapshots[s].observables, many.trajectories[m].snapshots[s].observables);
      EXPECT_EQ(one.trajectories[m].snapshots[s].entropies, many.trajectories[m].snapshots[s].entropies);
    }
  }
}

TEST(Ensemble, RejectsEmptyEnsemble) {
  auto basis = build_basis(2, 2, 2);
  const MonitoredChain chain(basis, 1.0, 0.0);
  EXPECT_THROW(run_ensemble(chain, config(1.0, 0.0, 1e-3, 1.0, 0), StateVector::uniform_fock(basis),
                            SnapshotRecorder::observables_only({}), 0),
               ValidationError);
}

TEST(Properties, DarkStateIsAbsorbing) {
  auto basis = build_basis(2, 2, 2);
  const MonitoredChain chain(basis, 1.0, 0.0);
  const auto d = build_bec_dark_state(basis);
  auto psi = fock(basis, {1, 1});
  Rng rng(11);
  Eigen::VectorXcd scratch(static_cast<Eigen::Index>(psi.dim()));
  const double dt = 1e-3;
  bool reached = false;
  for (int k = 0; k < 200000 && !reached; ++k) {
    chain.step(psi, k * dt, dt, rng.uniform(), scratch);
    reached = psi.fidelity(d) > 1.0 - 1e-8;
  }
  ASSERT_TRUE(reached);
  for (int k = 0; k < 10000; ++k) {
    EXPECT_LT(chain.total_rate(psi), 1e-8);
    ASSERT_FALSE(chain.step(psi, 0.0, dt, rng.uniform(), scratch).has_value());
  }
}

TEST(Properties, DephasingOnlyKeepsEntropyZero) {
  auto basis = build_basis(4, 4, 3);
  const MonitoredChain chain(basis, 0.0, 1.0);
  const auto rec = SnapshotRecorder::with_entropies(*basis, {}, {EntropyKind::von_neumann()});
  const auto ens = run_ensemble(chain, config(0.0, 1.0, 0.0, 5.0, 8, {1.0, 2.5, 5.0}), fock(basis, {2, 0, 1, 1}),
                                rec, 20);
  for (const auto& t : ens.trajectories)
    for (const auto& s : t.snapshots)
      for (double e : s.entropies[0]) EXPECT_LT(std::abs(e), 1e-12);
}

TEST(Properties, WaitingTimesAreExponential) {
  auto basis = build_basis(3, 3, 3);
  const MonitoredChain chain(basis, 0.0, 1.0);
  auto psi = fock(basis, {2, 1, 0});
  const double rate = 4.0 + 1.0;  // Γ Σ n_j²
  const double dt = 2e-4;
  Rng rng(31337);
  Eigen::VectorXcd scratch(static_cast<Eigen::Index>(psi.dim()));
  std::vector<double> intervals;
  double last = 0.0;
  for (long long k = 0; intervals.size() < 5000; ++k) {
    if (auto j = chain.step(psi, static_cast<double>(k) * dt, dt, rng.uniform(), scratch)) {
      intervals.push_back(j->time - last);
      last = j->time;
    }
  }
  std::sort(intervals.begin(), intervals.end());
  const double n = static_cast<double>(intervals.size());
  double d = 0.0;
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const double f = 1.0 - std::exp(-rate * intervals[i]);
    d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
  }
  const double p = kolmogorov_q((std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d);
  EXPECT_GT(p, 0.01) << "KS statistic " << d;
}

TEST(Snapshots, GridRoundingIsStable) {
  EXPECT_EQ(detail::snapshot_step(0.5, 0.001), 500);
  EXPECT_EQ(detail::snapshot_step(0.3, 0.1), 3);
  EXPECT_EQ(detail::snapshot_step(0.0, 0.01), 0);
  EXPECT_EQ(detail::snapshot_step(0.25, 0.1), 3);
}

}  // namespace
}  // namespace mchain
