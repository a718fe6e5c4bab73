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
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mchain/entanglement.hpp"
#include "mchain/errors.hpp"
#include "mchain/fock_basis.hpp"
#include "mchain/operators.hpp"
#include "mchain/parallel.hpp"
#include "mchain/rng.hpp"
#include "mchain/sparse_operator.hpp"
#include "mchain/state_vector.hpp"

namespace mchain {

/// Largest total jump probability allowed in one step of the first-order
/// scheme.
inline constexpr double kMaxStepProbability = 0.1;
/// Channels whose step probability is at or below this are never selected.
inline constexpr double kMinChannelProbability = 1e-14;

struct MonitoringConfig {
  double phase_lock_rate = 1.0;  // Λ
  double dephase_rate = 0.0;     // Γ
  double dt = 0.0;               // <= 0 selects MonitoredChain::default_time_step()
  double t_max = 1.0;
  std::uint64_t seed = 0;
  std::vector<double> snapshot_times;

  /// Reduced dephasing rate Γ/Λ; infinite when only dephasing is on.
  double gamma() const {
    return phase_lock_rate > 0.0 ? dephase_rate / phase_lock_rate : std::numeric_limits<double>::infinity();
  }

  void validate() const {
    detail::require(phase_lock_rate >= 0.0 && dephase_rate >= 0.0, "monitoring rates must be nonnegative");
    detail::require(phase_lock_rate > 0.0 || dephase_rate > 0.0, "at least one monitoring rate must be positive");
    detail::require(std::isfinite(dt) && dt >= 0.0, "time step must be positive (or 0 for the default)");
    detail::require(std::isfinite(t_max) && t_max > 0.0, "t_max must be positive");
    detail::require(std::is_sorted(snapshot_times.begin(), snapshot_times.end()), "snapshot times must be sorted");
    for (double t : snapshot_times)
      detail::require(t >= 0.0 && t <= t_max * (1.0 + 1e-12), "snapshot time outside [0, t_max]");
  }
};

struct JumpRecord {
  double time = 0.0;
  Channel channel = Channel::PhaseLock;
  int site = 0;
  friend bool operator==(const JumpRecord&, const JumpRecord&) = default;
};

/// The jump channels and the no-jump generator of one chain.
///
/// Channels are ordered d_0..d_{L-2} then c_0..c_{L-1}; this order fixes the
/// inverse-CDF channel selection and makes trajectories replayable.
class MonitoredChain {
 public:
  struct ChannelOperator {
    Channel kind;
    int site;
    double rate;
    SparseOperator op;
  };

  MonitoredChain(BasisPtr basis, double phase_lock_rate, double dephase_rate)
      : basis_(std::move(basis)),
        phase_lock_rate_(phase_lock_rate),
        dephase_rate_(dephase_rate),
        decay_(SparseOperator(basis_, SparseMatrix(static_cast<Eigen::Index>(basis_->dim()),
                                                   static_cast<Eigen::Index>(basis_->dim())))) {
    detail::require(phase_lock_rate >= 0.0 && dephase_rate >= 0.0, "MonitoredChain: rates must be nonnegative");
    const int L = basis_->sites();
    for (int j = 0; j + 1 < L; ++j)
      channels_.push_back({Channel::PhaseLock, j, phase_lock_rate, jump_operator(basis_, Channel::PhaseLock, j)});
    for (int j = 0; j < L; ++j)
      channels_.push_back({Channel::Dephase, j, dephase_rate, jump_operator(basis_, Channel::Dephase, j)});

    SparseMatrix k(static_cast<Eigen::Index>(basis_->dim()), static_cast<Eigen::Index>(basis_->dim()));
    for (const auto& ch : channels_) {
      if (ch.rate == 0.0) continue;
      k += SparseMatrix(ch.rate * SparseMatrix(ch.op.matrix().adjoint() * ch.op.matrix()));
    }
    decay_ = SparseOperator(basis_, std::move(k));
  }

  const BasisPtr& basis_ptr() const { return basis_; }
  const FockBasis& basis() const { return *basis_; }
  double phase_lock_rate() const { return phase_lock_rate_; }
  double dephase_rate() const { return dephase_rate_; }
  const std::vector<ChannelOperator>& channels() const { return channels_; }

  /// K = Σ_b rate_b b†b, so that H_eff = -(i/2) K.
  const SparseOperator& decay_operator() const { return decay_; }

  /// Total jump rate <psi|K|psi>.
  double total_rate(const StateVector& psi) const { return expectation(decay_, psi).real(); }

  /// Δt such that the largest possible step probability equals
  /// `target_probability`, from Gershgorin bounds on the channel operators.
  double default_time_step(double target_probability = 1e-3) const {
    const int L = basis_->sites();
    double dd_max = 0.0;
    for (const auto& ch : channels_)
      if (ch.kind == Channel::PhaseLock) dd_max = std::max(dd_max, (ch.op.adjoint() * ch.op).row_sum_norm());
    const double nmax = basis_->max_occupation();
    const double bound = std::max(phase_lock_rate_ * (L - 1) * dd_max, dephase_rate_ * L * nmax * nmax);
    return bound > 0.0 ? target_probability / bound : target_probability;
  }

  /// One step of the first-order unraveling. A single uniform `u` decides
  /// both whether a jump fires (u < Δp) and which channel (inverse CDF over
  /// the ordered channel list, using the same u). Returns the jump, if any,
  /// stamped with time t + dt. `scratch` is caller-owned workspace.
  std::optional<JumpRecord> step(StateVector& psi, double t, double dt, double u, Eigen::VectorXcd& scratch) const {
    auto& amps = psi.amplitudes();
    scratch.noalias() = decay_.matrix() * amps;
    const double dp = dt * amps.dot(scratch).real();
    if (dp > kMaxStepProbability)
      throw NumericGuardError("step-size violation: jump probability " + std::to_string(dp) + " exceeds " +
                              std::to_string(kMaxStepProbability) + " (reduce dt)");
    if (u < dp) {
      if (auto jump = apply_jump(psi, t + dt, dt, u, scratch)) return jump;
      // Every channel is below the skip threshold; Δp was rounding residue.
      scratch.noalias() = decay_.matrix() * amps;
    }
    amps -= (0.5 * dt) * scratch;
    psi.normalize();
    return std::nullopt;
  }

  std::optional<JumpRecord> step(StateVector& psi, double t, double dt, Rng& rng) const {
    Eigen::VectorXcd scratch(static_cast<Eigen::Index>(psi.dim()));
    return step(psi, t, dt, rng.uniform(), scratch);
  }

 private:
  std::optional<JumpRecord> apply_jump(StateVector& psi, double time, double dt, double u, Eigen::VectorXcd& scratch) const {
    const auto& amps = psi.amplitudes();
    double cumulative = 0.0;
    std::optional<std::size_t> chosen;
    std::optional<std::size_t> last_eligible;
    for (std::size_t k = 0; k < channels_.size(); ++k) {
      const auto& ch = channels_[k];
      if (ch.rate == 0.0) continue;
      scratch.noalias() = ch.op.matrix() * amps;
      const double p = dt * ch.rate * scratch.squaredNorm();
      if (p <= kMinChannelProbability) continue;
      last_eligible = k;
      cumulative += p;
      if (u < cumulative) {
        chosen = k;
        break;
      }
    }
    // Rounding between Σ_b Δp_b and dt <K> can leave u just past the last
    // cumulative bin.
    if (!chosen) chosen = last_eligible;
    if (!chosen) return std::nullopt;
    const auto& ch = channels_[*chosen];
    Eigen::VectorXcd next = ch.op.matrix() * amps;
    const double n = next.norm();
    if (!(n > 0.0)) throw NumericGuardError("zero-norm state after jump");
    psi.amplitudes() = next / n;
    return JumpRecord{time, ch.kind, ch.site};
  }

  BasisPtr basis_;
  double phase_lock_rate_;
  double dephase_rate_;
  std::vector<ChannelOperator> channels_;
  SparseOperator decay_;
};

/// What to record at each snapshot. Immutable; shared by all workers.
struct SnapshotRecorder {
  std::vector<NamedOperator> observables;
  bool keep_states = false;
  std::vector<EntropyKind> entropy_kinds;
  std::vector<Bipartition> cuts;  // required when entropy_kinds is nonempty

  static SnapshotRecorder observables_only(std::vector<NamedOperator> obs) {
    SnapshotRecorder r;
    r.observables = std::move(obs);
    return r;
  }

  static SnapshotRecorder with_entropies(const FockBasis& basis, std::vector<NamedOperator> obs,
                                         std::vector<EntropyKind> kinds) {
    SnapshotRecorder r;
    r.observables = std::move(obs);
    r.entropy_kinds = std::move(kinds);
    r.cuts = all_cuts(basis);
    return r;
  }

  std::vector<std::string> observable_names() const {
    std::vector<std::string> names;
    for (const auto& o : observables) names.push_back(o.name);
    return names;
  }
};

struct Snapshot {
  double time = 0.0;
  std::vector<Complex> observables;           // order of SnapshotRecorder::observables
  std::vector<std::vector<double>> entropies;  // [kind][l-1]
  std::optional<StateVector> state;
};

struct Trajectory {
  std::uint64_t seed = 0;
  std::vector<JumpRecord> jumps;
  std::vector<Snapshot> snapshots;
  StateVector final_state;
};

namespace detail {

inline Snapshot take_snapshot(double time, const StateVector& psi, const SnapshotRecorder& recorder) {
  Snapshot snap;
  snap.time = time;
  snap.observables.reserve(recorder.observables.size());
  for (const auto& o : recorder.observables) snap.observables.push_back(expectation(o.op, psi));
  if (!recorder.entropy_kinds.empty()) {
    detail::require(recorder.cuts.size() == static_cast<std::size_t>(psi.basis().sites() - 1),
                    "SnapshotRecorder: entropy kinds requested without cut layouts");
    std::vector<std::vector<double>> spectra;
    for (const auto& cut : recorder.cuts) spectra.push_back(schmidt_spectrum(psi, cut));
    for (const auto& kind : recorder.entropy_kinds) {
      std::vector<double> s;
      for (const auto& spec : spectra) s.push_back(entropy(spec, kind));
      snap.entropies.push_back(std::move(s));
    }
  }
  if (recorder.keep_states) snap.state = psi;
  return snap;
}

/// Step index at which a snapshot at time t is taken: the first grid point
/// at or after t.
inline long long snapshot_step(double t, double dt) {
  return static_cast<long long>(std::ceil(t / dt - 1e-9));
}

}  // namespace detail

/// Effective Δt of a config for a given chain.
inline double resolve_time_step(const MonitoringConfig& cfg, const MonitoredChain& chain) {
  return cfg.dt > 0.0 ? cfg.dt : chain.default_time_step();
}

/// One trajectory seeded with `seed` (cfg.seed is ignored here so that
/// ensembles can derive per-trajectory seeds).
inline Trajectory run_trajectory(const MonitoredChain& chain, const MonitoringConfig& cfg, const StateVector& psi0,
                                 const SnapshotRecorder& recorder, std::uint64_t seed) {
  cfg.validate();
  detail::require(chain.basis().same_sector(psi0.basis()), "run_trajectory: initial state basis mismatch");
  detail::require(std::abs(psi0.norm() - 1.0) < 1e-10, "run_trajectory: initial state must be normalized");
  const double dt = resolve_time_step(cfg, chain);
  const long long steps = static_cast<long long>(std::llround(cfg.t_max / dt));

  Trajectory traj{seed, {}, {}, psi0};
  StateVector& psi = traj.final_state;
  Rng rng(seed);
  Eigen::VectorXcd scratch(static_cast<Eigen::Index>(psi.dim()));

  std::size_t next_snapshot = 0;
  for (long long k = 0;; ++k) {
    while (next_snapshot < cfg.snapshot_times.size() &&
           detail::snapshot_step(cfg.snapshot_times[next_snapshot], dt) <= k) {
      traj.snapshots.push_back(detail::take_snapshot(cfg.snapshot_times[next_snapshot], psi, recorder));
      ++next_snapshot;
    }
    if (k >= steps) break;
    const double t = static_cast<double>(k) * dt;
    if (auto jump = chain.step(psi, t, dt, rng.uniform(), scratch)) traj.jumps.push_back(*jump);
  }
  return traj;
}

inline Trajectory run_trajectory(const MonitoredChain& chain, const MonitoringConfig& cfg, const StateVector& psi0,
                                 const SnapshotRecorder& recorder) {
  return run_trajectory(chain, cfg, psi0, recorder, cfg.seed);
}

struct MeanWithError {
  double mean = 0.0;
  double stderr = 0.0;
};

inline MeanWithError mean_and_stderr(const std::vector<double>& xs) {
  MeanWithError out;
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.stderr = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return out;
}

struct EnsembleResult {
  MonitoringConfig config;
  double dt = 0.0;
  std::vector<std::string> observable_names;
  std::vector<EntropyKind> entropy_kinds;
  std::vector<Trajectory> trajectories;  // index == trajectory id

  std::size_t size() const { return trajectories.size(); }

  std::size_t observable_index(const std::string& name) const {
    const auto it = std::find(observable_names.begin(), observable_names.end(), name);
    if (it == observable_names.end()) throw ValidationError("unknown observable " + name);
    return static_cast<std::size_t>(it - observable_names.begin());
  }

  /// Mean and standard error of Re or Im of an observable at snapshot k.
  MeanWithError observable_stats(std::size_t snapshot, std::size_t observable, bool imaginary = false) const {
    std::vector<double> xs;
    xs.reserve(trajectories.size());
    for (const auto& t : trajectories) {
      const Complex v = t.snapshots.at(snapshot).observables.at(observable);
      xs.push_back(imaginary ? v.imag() : v.real());
    }
    return mean_and_stderr(xs);
  }

  std::size_t total_jumps() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.jumps.size();
    return n;
  }
};

/// M trajectories, seeds derive_seed(cfg.seed, m). Each trajectory fills its
/// own slot, so the result does not depend on the worker count.
inline EnsembleResult run_ensemble(const MonitoredChain& chain, const MonitoringConfig& cfg, const StateVector& psi0,
                                   const SnapshotRecorder& recorder, std::size_t trajectories, unsigned workers = 1) {
  cfg.validate();
  detail::require(trajectories >= 1, "run_ensemble: need at least one trajectory");
  EnsembleResult result;
  result.config = cfg;
  result.dt = resolve_time_step(cfg, chain);
  result.observable_names = recorder.observable_names();
  result.entropy_kinds = recorder.entropy_kinds;
  std::vector<std::optional<Trajectory>> slots(trajectories);
  parallel_for(trajectories, workers,
               [&](std::size_t m) { slots[m] = run_trajectory(chain, cfg, psi0, recorder, derive_seed(cfg.seed, m)); });
  result.trajectories.reserve(trajectories);
  for (auto& s : slots) result.trajectories.push_back(std::move(*s));
  return result;
}

/// Entropy profile of the ensemble at snapshot index k. Uses entropies
/// recorded during the run, or falls back to stored states.
inline EntropyProfile average_profile(const EnsembleResult& ensemble, std::size_t snapshot, EntropyKind kind) {
  detail::require(!ensemble.trajectories.empty(), "average_profile: empty ensemble");
  const auto& first = ensemble.trajectories.front();
  detail::require(snapshot < first.snapshots.size(), "average_profile: missing snapshot");
  const int L = first.final_state.basis().sites();
  const auto kind_it = std::find(ensemble.entropy_kinds.begin(), ensemble.entropy_kinds.end(), kind);
  std::vector<std::vector<double>> samples;
  samples.reserve(ensemble.size());
  if (kind_it != ensemble.entropy_kinds.end()) {
    const auto k = static_cast<std::size_t>(kind_it - ensemble.entropy_kinds.begin());
    for (const auto& t : ensemble.trajectories) samples.push_back(t.snapshots.at(snapshot).entropies.at(k));
  } else {
    detail::require(first.snapshots[snapshot].state.has_value(),
                    "average_profile: snapshot has neither recorded entropies of this kind nor a stored state");
    const auto cuts = all_cuts(first.final_state.basis());
    for (const auto& t : ensemble.trajectories) {
      const auto& st = t.snapshots.at(snapshot).state;
      detail::require(st.has_value(), "average_profile: missing stored state");
      samples.push_back(entropy_profile_of(*st, cuts, kind));
    }
  }
  return profile_from_samples(samples, ensemble.config.gamma(), L, first.snapshots[snapshot].time, kind);
}

inline std::size_t snapshot_index(const EnsembleResult& ensemble, double time) {
  const auto& times = ensemble.config.snapshot_times;
  for (std::size_t k = 0; k < times.size(); ++k)
    if (std::abs(times[k] - time) <= 1e-12 * std::max(1.0, std::abs(time))) return k;
  throw ValidationError("no snapshot at t = " + std::to_string(time));
}

}  // namespace mchain
