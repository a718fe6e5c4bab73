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

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mchain/entanglement.hpp"
#include "mchain/errors.hpp"
#include "mchain/operators.hpp"
#include "mchain/trajectory.hpp"

namespace mchain {

/// Dense density matrix on a number sector.
class FullDM {
 public:
  FullDM(BasisPtr basis, Eigen::MatrixXcd matrix) : basis_(std::move(basis)), matrix_(std::move(matrix)) {
    const auto d = static_cast<Eigen::Index>(basis_->dim());
    detail::require(matrix_.rows() == d && matrix_.cols() == d, "FullDM: matrix dimension does not match basis");
  }

  static FullDM pure(const StateVector& psi) {
    return FullDM(psi.basis_ptr(), psi.amplitudes() * psi.amplitudes().adjoint());
  }

  const FockBasis& basis() const { return *basis_; }
  const BasisPtr& basis_ptr() const { return basis_; }
  const Eigen::MatrixXcd& matrix() const { return matrix_; }
  Eigen::MatrixXcd& matrix() { return matrix_; }

  double trace() const { return matrix_.trace().real(); }
  double purity() const { return matrix_.cwiseAbs2().sum(); }
  double hermiticity_error() const { return (matrix_ - matrix_.adjoint()).cwiseAbs().maxCoeff(); }

  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (matrix_ + matrix_.adjoint()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  Complex expectation(const SparseOperator& op) const {
    check_same_basis(op);
    return (op.matrix() * matrix_).trace();
  }

  double fidelity(const StateVector& psi) const {
    return (psi.amplitudes().adjoint() * matrix_ * psi.amplitudes()).value().real();
  }

  void check_same_basis(const SparseOperator& op) const {
    detail::require(basis_->same_sector(op.basis()), "FullDM: operator basis mismatch");
  }

 private:
  BasisPtr basis_;
  Eigen::MatrixXcd matrix_;
};

/// Σ_b rate_b (b ρ b† - ½{b†b, ρ}) over all channels of `chain`.
inline Eigen::MatrixXcd lindblad_rhs(const MonitoredChain& chain, const Eigen::MatrixXcd& rho) {
  const SparseMatrix& k = chain.decay_operator().matrix();
  Eigen::MatrixXcd out = -0.5 * (k * rho);
  out -= 0.5 * (k * rho.adjoint()).adjoint();
  for (const auto& ch : chain.channels()) {
    if (ch.rate == 0.0) continue;
    const Eigen::MatrixXcd b_rho = ch.op.matrix() * rho;
    out += ch.rate * (ch.op.matrix() * b_rho.adjoint()).adjoint();
  }
  return out;
}

inline Eigen::MatrixXcd lindblad_rhs(const FullDM& rho, double phase_lock_rate, double dephase_rate) {
  return lindblad_rhs(MonitoredChain(rho.basis_ptr(), phase_lock_rate, dephase_rate), rho.matrix());
}

/// Column-stacked Liouvillian superoperator, vec(L ρ) = S vec(ρ). Intended
/// for kernel checks on small sectors only.
inline Eigen::MatrixXcd liouvillian_superoperator(const MonitoredChain& chain) {
  const auto d = static_cast<Eigen::Index>(chain.basis().dim());
  detail::require(d <= 50, "liouvillian_superoperator: sector too large for a dense superoperator");
  Eigen::MatrixXcd s(d * d, d * d);
  for (Eigen::Index c = 0; c < d * d; ++c) {
    Eigen::MatrixXcd unit = Eigen::MatrixXcd::Zero(d, d);
    unit(c % d, c / d) = 1.0;
    const Eigen::MatrixXcd image = lindblad_rhs(chain, unit);
    s.col(c) = Eigen::Map<const Eigen::VectorXcd>(image.data(), d * d);
  }
  return s;
}

/// Number of singular values of the superoperator below `tolerance`.
inline int liouvillian_kernel_dimension(const MonitoredChain& chain, double tolerance = 1e-9) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(liouvillian_superoperator(chain));
  int zeros = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()[i] < tolerance) ++zeros;
  return zeros;
}

struct LindbladSeries {
  std::vector<double> times;
  std::vector<std::string> observable_names;
  std::vector<std::vector<Complex>> values;  // [time][observable]
  std::vector<double> purity;
  double dt = 0.0;
  double max_trace_drift = 0.0;
  FullDM final_state;
};

/// Fixed-step RK4 from rho0, emitting observables at each checkpoint time.
/// Checkpoints are placed on the step grid with the same rounding as
/// trajectory snapshots, so a series and an ensemble with equal dt sample
/// identical instants.
inline LindbladSeries evolve_lindblad(const FullDM& rho0, double phase_lock_rate, double dephase_rate,
                                      const std::vector<double>& checkpoints, double dt,
                                      const std::vector<NamedOperator>& observables) {
  detail::require(dt > 0.0, "evolve_lindblad: dt must be positive");
  detail::require(std::is_sorted(checkpoints.begin(), checkpoints.end()), "evolve_lindblad: times must be sorted");
  detail::require(checkpoints.empty() || checkpoints.front() >= 0.0, "evolve_lindblad: negative checkpoint");
  detail::require(std::abs(rho0.trace() - 1.0) < 1e-9, "evolve_lindblad: initial state must have unit trace");
  const MonitoredChain chain(rho0.basis_ptr(), phase_lock_rate, dephase_rate);
  for (const auto& o : observables) rho0.check_same_basis(o.op);

  LindbladSeries out{{}, {}, {}, {}, dt, 0.0, rho0};
  for (const auto& o : observables) out.observable_names.push_back(o.name);
  Eigen::MatrixXcd rho = rho0.matrix();
  auto record = [&](double t) {
    const FullDM snap(rho0.basis_ptr(), rho);
    std::vector<Complex> row;
    for (const auto& o : observables) row.push_back(snap.expectation(o.op));
    out.times.push_back(t);
    out.values.push_back(std::move(row));
    out.purity.push_back(snap.purity());
  };

  const long long last = checkpoints.empty() ? 0 : detail::snapshot_step(checkpoints.back(), dt);
  std::size_t next = 0;
  for (long long k = 0;; ++k) {
    while (next < checkpoints.size() && detail::snapshot_step(checkpoints[next], dt) <= k) record(checkpoints[next++]);
    if (k >= last) break;
    const Eigen::MatrixXcd k1 = lindblad_rhs(chain, rho);
    const Eigen::MatrixXcd k2 = lindblad_rhs(chain, rho + 0.5 * dt * k1);
    const Eigen::MatrixXcd k3 = lindblad_rhs(chain, rho + 0.5 * dt * k2);
    const Eigen::MatrixXcd k4 = lindblad_rhs(chain, rho + dt * k3);
    rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double drift = std::abs(rho.trace().real() - 1.0);
    out.max_trace_drift = std::max(out.max_trace_drift, drift);
    if (drift > 1e-6 || !rho.allFinite())
      throw NumericGuardError("Lindblad evolution: trace drift " + std::to_string(drift) + " (reduce dt)");
  }
  out.final_state = FullDM(rho0.basis_ptr(), rho);
  return out;
}

/// Reduced density matrix of sites [0, cut) of a mixed state, in the basis
/// of left occupation patterns (ordered lexicographically).
inline Eigen::MatrixXcd reduce_left(const FullDM& rho, int cut) {
  const FockBasis& basis = rho.basis();
  detail::require(cut >= 1 && cut < basis.sites(), "reduce_left: cut must lie in [1, L-1]");
  std::map<std::vector<int>, Eigen::Index> left_index, right_index;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> split(basis.dim());
  for (std::size_t i = 0; i < basis.dim(); ++i) {
    const auto occ = basis.state(i);
    left_index.emplace(std::vector<int>(occ.begin(), occ.begin() + cut), 0);
  }
  Eigen::Index next = 0;
  for (auto& [key, idx] : left_index) idx = next++;
  for (std::size_t i = 0; i < basis.dim(); ++i) {
    const auto occ = basis.state(i);
    const std::vector<int> left(occ.begin(), occ.begin() + cut), right(occ.begin() + cut, occ.end());
    const auto [it, fresh] = right_index.emplace(right, static_cast<Eigen::Index>(right_index.size()));
    split[i] = {left_index.at(left), it->second};
  }
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(next, next);
  for (std::size_t i = 0; i < basis.dim(); ++i)
    for (std::size_t j = 0; j < basis.dim(); ++j)
      if (split[i].second == split[j].second)
        out(split[i].first, split[j].first) += rho.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return out;
}

/// Von Neumann entropy of sites [0, cut) of a mixed state.
inline double subsystem_entropy(const FullDM& rho, int cut) {
  std::vector<double> spectrum;
  detail::append_checked_eigenvalues(reduce_left(rho, cut), spectrum);
  return von_neumann_entropy(spectrum);
}

/// Absolute difference below which trajectory and oracle values are equal.
inline constexpr double kExactAgreement = 1e-10;

struct ComparisonEntry {
  double time = 0.0;
  std::string observable;
  bool imaginary = false;
  double oracle = 0.0;
  double mean = 0.0;
  double stderr = 0.0;
  double z = 0.0;
};

struct ComparisonReport {
  std::vector<ComparisonEntry> entries;
  double z_threshold = 3.0;
  double max_abs_z = 0.0;
  bool passed = true;
};

/// Per-observable z-scores (mean - oracle) / stderr at each checkpoint.
/// Checks that both sides sample the same times and observables; rates are
/// not compared so that a mismatched run still yields a (failing) report.
/// With zero standard error, agreement within 1e-10 counts as z = 0.
inline ComparisonReport compare_with_ensemble(const LindbladSeries& oracle, const EnsembleResult& ensemble,
                                              const std::vector<std::string>& observables, double z_threshold = 3.0,
                                              bool include_imaginary = false) {
  const auto& times = ensemble.config.snapshot_times;
  detail::require(times.size() == oracle.times.size(), "compare_with_ensemble: checkpoint counts differ");
  for (std::size_t k = 0; k < times.size(); ++k)
    detail::require(std::abs(times[k] - oracle.times[k]) <= 1e-12 * std::max(1.0, times[k]),
                    "compare_with_ensemble: checkpoint times differ");
  ComparisonReport report;
  report.z_threshold = z_threshold;
  for (const auto& name : observables) {
    const auto oracle_it = std::find(oracle.observable_names.begin(), oracle.observable_names.end(), name);
    detail::require(oracle_it != oracle.observable_names.end(), "compare_with_ensemble: oracle lacks " + name);
    const auto oi = static_cast<std::size_t>(oracle_it - oracle.observable_names.begin());
    const auto ei = ensemble.observable_index(name);
    for (int part = 0; part < (include_imaginary ? 2 : 1); ++part) {
      for (std::size_t k = 0; k < times.size(); ++k) {
        ComparisonEntry e;
        e.time = times[k];
        e.observable = name;
        e.imaginary = part == 1;
        e.oracle = e.imaginary ? oracle.values[k][oi].imag() : oracle.values[k][oi].real();
        const auto stats = ensemble.observable_stats(k, ei, e.imaginary);
        e.mean = stats.mean;
        e.stderr = stats.stderr;
        const double diff = e.mean - e.oracle;
        // Differences at the rounding level count as exact agreement, even
        // when the sample spread is itself rounding noise.
        if (std::abs(diff) <= kExactAgreement) {
          e.z = 0.0;
        } else if (e.stderr > 0.0) {
          e.z = diff / e.stderr;
        } else {
          e.z = std::copysign(std::numeric_limits<double>::infinity(), diff);
        }
        report.max_abs_z = std::max(report.max_abs_z, std::abs(e.z));
        report.entries.push_back(e);
      }
    }
  }
  report.passed = report.max_abs_z < z_threshold;
  return report;
}

}  // namespace mchain
