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
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "mchain/entanglement.hpp"
#include "mchain/errors.hpp"
#include "mchain/fock_basis.hpp"
#include "mchain/operators.hpp"
#include "mchain/parallel.hpp"
#include "mchain/rng.hpp"
#include "mchain/state_vector.hpp"

namespace mchain {

/// Parameters of a cavity + ancilla circuit. Time is measured in units of
/// 1/g_eff when g_eff = 1.
///
/// Couplings use the two-level normalization H = (g/2)(L σ⁺ + L† σ⁻), so that
/// eliminating an ancilla decaying at rate κ leaves the jump channel L with
/// rate g²/κ.
struct CircuitConfig {
  double g_eff = 1.0;
  double h_eff = 0.0;  // Stark-like term of the phase-lock scheme
  double kappa = std::sqrt(500.0);
  double dt = 0.0;  // <= 0 selects 0.25/κ
  double t_max = 0.0;  // <= 0 selects 20/(g²/κ)
  std::uint64_t seed = 0;

  /// g²/κ, the reduced jump rate (Λ or Γ depending on the circuit).
  double predicted_rate() const { return g_eff * g_eff / kappa; }
  bool born_markov_regime() const { return g_eff == 0.0 || kappa / std::abs(g_eff) > 20.0; }
  double time_step() const { return dt > 0.0 ? dt : 0.25 / kappa; }
  double horizon() const {
    if (t_max > 0.0) return t_max;
    return g_eff != 0.0 ? 20.0 / predicted_rate() : 20.0 / kappa;
  }

  void validate() const {
    detail::require(std::isfinite(g_eff) && std::isfinite(h_eff), "CircuitConfig: couplings must be finite");
    detail::require(kappa > 0.0 && std::isfinite(kappa), "CircuitConfig: kappa must be positive");
    detail::require(dt >= 0.0 && t_max >= 0.0, "CircuitConfig: dt and t_max must be nonnegative");
    detail::require(time_step() <= horizon(), "CircuitConfig: dt exceeds t_max");
  }
};

/// Cavity register ⊗ two-level ancilla, stored with index cavity * 2 + ancilla.
/// Ancilla level 0 is the ground state, level 1 the excited one.
class AncillaCircuit {
 public:
  /// `hamiltonian` acts on the composite space; the ancilla decays at κ.
  AncillaCircuit(Eigen::Index cavity_dim, const Eigen::MatrixXcd& hamiltonian, double kappa, double dt)
      : cavity_dim_(cavity_dim), hamiltonian_(hamiltonian), dt_(dt) {
    detail::require(hamiltonian.rows() == 2 * cavity_dim && hamiltonian.cols() == 2 * cavity_dim,
                    "AncillaCircuit: Hamiltonian dimension mismatch");
    jump_ = std::sqrt(kappa) * kron(Eigen::MatrixXcd::Identity(cavity_dim, cavity_dim), sigma_minus());
    const Eigen::MatrixXcd h_nh = hamiltonian_ - Complex(0.0, 0.5) * (jump_.adjoint() * jump_);
    propagator_ = (Complex(0.0, -dt) * h_nh).exp();
  }

  static Eigen::MatrixXcd kron(const Eigen::MatrixXcd& cavity, const Eigen::MatrixXcd& ancilla) {
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(cavity.rows() * ancilla.rows(), cavity.cols() * ancilla.cols());
    for (Eigen::Index i = 0; i < cavity.rows(); ++i)
      for (Eigen::Index j = 0; j < cavity.cols(); ++j)
        if (cavity(i, j) != Complex(0.0)) out.block(i * ancilla.rows(), j * ancilla.cols(), ancilla.rows(), ancilla.cols()) = cavity(i, j) * ancilla;
    return out;
  }
  static Eigen::Matrix2cd sigma_minus() {
    Eigen::Matrix2cd s = Eigen::Matrix2cd::Zero();
    s(0, 1) = 1.0;
    return s;
  }
  static Eigen::Matrix2cd sigma_plus() { return sigma_minus().adjoint(); }
  static Eigen::Matrix2cd sigma_x() { return sigma_minus() + sigma_plus(); }
  static Eigen::Matrix2cd ground_projector() {
    Eigen::Matrix2cd p = Eigen::Matrix2cd::Zero();
    p(0, 0) = 1.0;
    return p;
  }

  Eigen::Index cavity_dim() const { return cavity_dim_; }
  Eigen::Index dim() const { return 2 * cavity_dim_; }
  double dt() const { return dt_; }
  const Eigen::MatrixXcd& hamiltonian() const { return hamiltonian_; }
  const Eigen::MatrixXcd& jump() const { return jump_; }
  const Eigen::MatrixXcd& propagator() const { return propagator_; }

  /// Cavity ⊗ ancilla ground.
  Eigen::VectorXcd with_ground_ancilla(const Eigen::VectorXcd& cavity) const {
    detail::require(cavity.size() == cavity_dim_, "AncillaCircuit: cavity state dimension mismatch");
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(dim());
    for (Eigen::Index c = 0; c < cavity_dim_; ++c) psi[2 * c] = cavity[c];
    return psi.normalized();
  }

  static double ancilla_population(const Eigen::VectorXcd& psi) {
    double p = 0.0;
    for (Eigen::Index i = 1; i < psi.size(); i += 2) p += std::norm(psi[i]);
    return p / psi.squaredNorm();
  }

  /// Cavity reduced density matrix (ancilla traced out).
  Eigen::MatrixXcd cavity_density(const Eigen::VectorXcd& psi) const {
    const Eigen::Map<const Eigen::MatrixXcd> m(psi.data(), 2, cavity_dim_);  // m(a, c)
    return (m.transpose() * m.conjugate()) / psi.squaredNorm();
  }

 private:
  Eigen::Index cavity_dim_;
  Eigen::MatrixXcd hamiltonian_;
  Eigen::MatrixXcd jump_;
  Eigen::MatrixXcd propagator_;
  double dt_;
};

/// Phase-lock scheme on a cavity pair in a fixed-number sector:
/// H = (g/2)(d σ⁺ + d† σ⁻) + h (a₁ - a₂)(a₁† - a₂†) |0><0|,
/// with d = (a₁† + a₂†)(a₁ - a₂).
inline AncillaCircuit phaselock_circuit(const CircuitConfig& cfg, const BasisPtr& pair) {
  detail::require(pair->sites() == 2, "phaselock_circuit: needs a two-cavity basis");
  const Eigen::MatrixXcd d = jump_operator(pair, Channel::PhaseLock, 0).to_dense();
  Eigen::MatrixXcd h = 0.5 * cfg.g_eff * (AncillaCircuit::kron(d, AncillaCircuit::sigma_plus()));
  h += h.adjoint().eval();
  if (cfg.h_eff != 0.0) {
    const auto dim = static_cast<Eigen::Index>(pair->dim());
    const Eigen::MatrixXcd stark = (total_number(pair).to_dense() + 2.0 * Eigen::MatrixXcd::Identity(dim, dim)) -
                                   hopping(pair, 0, 1).to_dense() - hopping(pair, 1, 0).to_dense();
    h += cfg.h_eff * AncillaCircuit::kron(stark, AncillaCircuit::ground_projector());
  }
  return AncillaCircuit(static_cast<Eigen::Index>(pair->dim()), h, cfg.kappa, cfg.time_step());
}

/// Dephasing scheme on one cavity with levels 0..n_max:
/// H = (g/2) a†a σ_x.
inline AncillaCircuit dephasing_circuit(const CircuitConfig& cfg, int max_occupation) {
  detail::require(max_occupation >= 1, "dephasing_circuit: n_max must be positive");
  Eigen::MatrixXcd n = Eigen::MatrixXcd::Zero(max_occupation + 1, max_occupation + 1);
  for (int k = 0; k <= max_occupation; ++k) n(k, k) = k;
  return AncillaCircuit(max_occupation + 1, 0.5 * cfg.g_eff * AncillaCircuit::kron(n, AncillaCircuit::sigma_x()),
                        cfg.kappa, cfg.time_step());
}

struct CircuitClick {
  double time = 0.0;
  std::string channel;
  double entropy_before = 0.0;  // cavity-1 entropy (phase-lock scheme only)
  double entropy_after = 0.0;
};

struct CircuitTrajectory {
  std::uint64_t seed = 0;
  std::vector<CircuitClick> clicks;
  double t_reached = 0.0;
  double max_ancilla_population = 0.0;
  double max_norm_error = 0.0;
  double max_cavity_coherence = 0.0;  // largest |off-diagonal| of the cavity density seen
  Eigen::VectorXcd final_state;
  std::optional<int> collapsed_level;  // dephasing scheme
  double final_entropy = 0.0;
};

namespace detail {

/// Entropy of cavity 1 of a phase-lock pair, ancilla and cavity 2 traced out.
inline double first_cavity_entropy(const FockBasis& pair, const AncillaCircuit& circuit, const Eigen::VectorXcd& psi) {
  const Eigen::MatrixXcd full = circuit.cavity_density(psi);
  const int top = pair.max_occupation();
  Eigen::MatrixXcd rho1 = Eigen::MatrixXcd::Zero(top + 1, top + 1);
  for (std::size_t i = 0; i < pair.dim(); ++i)
    for (std::size_t j = 0; j < pair.dim(); ++j)
      if (pair.occupation(i, 1) == pair.occupation(j, 1))
        rho1(pair.occupation(i, 0), pair.occupation(j, 0)) +=
            full(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  std::vector<double> spectrum;
  append_checked_eigenvalues(rho1, spectrum);
  return von_neumann_entropy(spectrum);
}

inline double max_off_diagonal(const Eigen::MatrixXcd& m) {
  double out = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j) out = std::max(out, std::abs(m(i, j)));
  return out;
}

/// Waiting-time unraveling with the exact no-jump propagator over each step:
/// a threshold r ~ U(0,1) is drawn, the unnormalized state is propagated until
/// its squared norm falls to r, and the jump is then applied at the end of
/// that step. `observe` sees the normalized state after every step and may
/// return true to stop.
template <class OnClick, class Observe>
void unravel(const AncillaCircuit& circuit, Eigen::VectorXcd psi, double t_max, Rng& rng, CircuitTrajectory& out,
             OnClick&& on_click, Observe&& observe) {
  const double dt = circuit.dt();
  const auto steps = static_cast<long long>(std::llround(t_max / dt));
  double threshold = rng.uniform();
  Eigen::VectorXcd next(psi.size());
  long long k = 0;
  for (k = 1; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    next.noalias() = circuit.propagator() * psi;
    if (next.squaredNorm() <= threshold) {
      const Eigen::VectorXcd before = next.normalized();
      next = circuit.jump() * next;
      const double norm = next.norm();
      if (!(norm > 0.0)) throw NumericGuardError("circuit: jump annihilated the state");
      next /= norm;
      on_click(t, before, next);
      threshold = rng.uniform();
    }
    psi = next;
    const double n2 = psi.squaredNorm();
    if (!(n2 > 0.0) || !std::isfinite(n2)) throw NumericGuardError("circuit: state norm lost");
    const Eigen::VectorXcd unit = psi / std::sqrt(n2);
    out.max_norm_error = std::max(out.max_norm_error, std::abs(unit.norm() - 1.0));
    out.max_ancilla_population = std::max(out.max_ancilla_population, AncillaCircuit::ancilla_population(unit));
    if (observe(t, unit)) break;
  }
  out.t_reached = static_cast<double>(std::min(k, steps)) * dt;
  out.final_state = psi.normalized();
}

}  // namespace detail

/// One phase-lock circuit trajectory from the cavity Fock pair `occupations`
/// with the ancilla in its ground state. Stops at the first click when
/// `stop_at_first_click` is set.
inline CircuitTrajectory run_phaselock_circuit(const CircuitConfig& cfg, const std::vector<int>& occupations,
                                               int max_occupation, std::uint64_t seed,
                                               bool stop_at_first_click = false) {
  cfg.validate();
  detail::require(occupations.size() == 2, "run_phaselock_circuit: need two cavity occupations");
  const int particles = occupations[0] + occupations[1];
  const auto pair = build_basis(2, particles, max_occupation);
  const AncillaCircuit circuit = phaselock_circuit(cfg, pair);
  const auto start = pair->index_of(occupations);
  detail::require(start.has_value(), "run_phaselock_circuit: occupations exceed n_max");
  Eigen::VectorXcd cavity = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(pair->dim()));
  cavity[static_cast<Eigen::Index>(*start)] = 1.0;

  CircuitTrajectory out;
  out.seed = seed;
  Rng rng(seed);
  bool stop = false;
  detail::unravel(
      circuit, circuit.with_ground_ancilla(cavity), cfg.horizon(), rng, out,
      [&](double t, const Eigen::VectorXcd& before, const Eigen::VectorXcd& after) {
        out.clicks.push_back({t, "ancilla_decay", detail::first_cavity_entropy(*pair, circuit, before),
                              detail::first_cavity_entropy(*pair, circuit, after)});
        stop = stop_at_first_click;
      },
      [&](double, const Eigen::VectorXcd&) { return stop; });
  out.final_entropy = detail::first_cavity_entropy(*pair, circuit, out.final_state);
  return out;
}

/// One dephasing circuit trajectory from the cavity state `cavity0`
/// (amplitudes over levels 0..n_max). The cavity counts as collapsed once a
/// single level holds more than 1 - collapse_tolerance of the population;
/// integration stops there.
inline CircuitTrajectory run_dephasing_circuit(const CircuitConfig& cfg, const Eigen::VectorXcd& cavity0,
                                               std::uint64_t seed, double collapse_tolerance = 1e-6) {
  cfg.validate();
  detail::require(cavity0.size() >= 2, "run_dephasing_circuit: need at least two cavity levels");
  detail::require(cavity0.norm() > 0.0, "run_dephasing_circuit: zero cavity state");
  const AncillaCircuit circuit = dephasing_circuit(cfg, static_cast<int>(cavity0.size()) - 1);

  CircuitTrajectory out;
  out.seed = seed;
  Rng rng(seed);
  detail::unravel(
      circuit, circuit.with_ground_ancilla(cavity0), cfg.horizon(), rng, out,
      [&](double t, const Eigen::VectorXcd&, const Eigen::VectorXcd&) { out.clicks.push_back({t, "cavity_dephase"}); },
      [&](double, const Eigen::VectorXcd& psi) {
        const Eigen::MatrixXcd rho = circuit.cavity_density(psi);
        out.max_cavity_coherence = std::max(out.max_cavity_coherence, detail::max_off_diagonal(rho));
        Eigen::Index top = 0;
        const double p = rho.diagonal().real().maxCoeff(&top);
        if (p > 1.0 - collapse_tolerance) {
          out.collapsed_level = static_cast<int>(top);
          return true;
        }
        return false;
      });
  std::vector<double> populations;
  const Eigen::MatrixXcd rho = circuit.cavity_density(out.final_state);
  for (Eigen::Index c = 0; c < rho.rows(); ++c) populations.push_back(std::max(0.0, rho(c, c).real()));
  out.final_entropy = von_neumann_entropy(populations);
  return out;
}

/// Runs `count` circuit trajectories with seeds derive_seed(seed, m).
template <class Run>
std::vector<CircuitTrajectory> run_circuit_ensemble(std::size_t count, std::uint64_t seed, unsigned workers,
                                                    Run&& run) {
  std::vector<CircuitTrajectory> out(count);
  parallel_for(count, workers, [&](std::size_t m) { out[m] = run(derive_seed(seed, m)); });
  return out;
}

/// Censored maximum-likelihood fit of a survival law S(t) = p + (1-p) e^{-rt}
/// to first-click times observed up to `horizon`. The first-click rate is
/// the initial hazard (1-p) r.
struct FirstClickFit {
  double dark_fraction = 0.0;  // p
  double decay_rate = 0.0;     // r
  double hazard = 0.0;         // (1-p) r
  std::size_t clicked = 0;
  std::size_t censored = 0;
};

inline FirstClickFit fit_first_click(const std::vector<double>& click_times, std::size_t censored, double horizon) {
  detail::require(horizon > 0.0, "fit_first_click: horizon must be positive");
  FirstClickFit fit;
  fit.clicked = click_times.size();
  fit.censored = censored;
  if (click_times.empty()) return fit;
  const double k = static_cast<double>(click_times.size());
  const double n = k + static_cast<double>(censored);
  const double sum_t = std::accumulate(click_times.begin(), click_times.end(), 0.0);

  auto best_p = [&](double r) {
    const double e = std::exp(-r * horizon);
    const double p = static_cast<double>(censored) / n - k * e / (n * (1.0 - e));
    return std::clamp(p, 0.0, 1.0 - 1e-12);
  };
  auto log_likelihood = [&](double r) {
    const double p = best_p(r);
    const double e = std::exp(-r * horizon);
    double ll = k * std::log1p(-p) + k * std::log(r) - r * sum_t;
    if (censored > 0) ll += static_cast<double>(censored) * std::log(p + (1.0 - p) * e);
    return ll;
  };
  // Golden-section search on log r around the uncensored estimate k / Σt.
  const double center = std::log(k / std::max(sum_t, 1e-300));
  double lo = center - std::log(1e3), hi = center + std::log(1e3);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = log_likelihood(std::exp(x1)), f2 = log_likelihood(std::exp(x2));
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = log_likelihood(std::exp(x2));
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = log_likelihood(std::exp(x1));
    }
  }
  fit.decay_rate = std::exp(0.5 * (lo + hi));
  fit.dark_fraction = best_p(fit.decay_rate);
  fit.hazard = (1.0 - fit.dark_fraction) * fit.decay_rate;
  return fit;
}

struct RatePoint {
  double kappa = 0.0;
  double kappa_over_g = 0.0;
  double predicted = 0.0;  // (g²/κ) <d†d>
  double fitted = 0.0;
  double relative_error = 0.0;
  std::size_t clicks = 0;
  bool sufficient = true;  // at least `min_clicks` first clicks observed
};

/// First-click hazard of the phase-lock circuit from |1,1> for each κ,
/// compared with (g²/κ) <1,1|d†d|1,1> = 4 g²/κ.
inline std::vector<RatePoint> born_markov_rate_check(const CircuitConfig& base, const std::vector<double>& kappas,
                                                     std::size_t trajectories, unsigned workers = 1,
                                                     std::size_t min_clicks = 20, double horizon_in_rates = 1.5) {
  const auto pair = build_basis(2, 2, 2);
  const std::vector<int> start{1, 1};
  const StateVector psi = StateVector::fock(pair, start);
  const double dd = expectation(jump_operator(pair, Channel::PhaseLock, 0).adjoint() *
                                    jump_operator(pair, Channel::PhaseLock, 0),
                                psi)
                        .real();
  std::vector<RatePoint> out;
  for (std::size_t i = 0; i < kappas.size(); ++i) {
    CircuitConfig cfg = base;
    cfg.kappa = kappas[i];
    cfg.dt = 0.0;
    cfg.t_max = horizon_in_rates / cfg.predicted_rate();
    cfg.validate();
    const auto runs = run_circuit_ensemble(trajectories, derive_seed(base.seed, i), workers, [&](std::uint64_t s) {
      return run_phaselock_circuit(cfg, start, 2, s, true);
    });
    std::vector<double> times;
    for (const auto& r : runs)
      if (!r.clicks.empty()) times.push_back(r.clicks.front().time);
    const FirstClickFit fit = fit_first_click(times, runs.size() - times.size(), cfg.horizon());
    RatePoint p;
    p.kappa = cfg.kappa;
    p.kappa_over_g = cfg.kappa / cfg.g_eff;
    p.predicted = cfg.predicted_rate() * dd;
    p.fitted = fit.hazard;
    p.relative_error = std::abs(p.fitted / p.predicted - 1.0);
    p.clicks = times.size();
    p.sufficient = times.size() >= min_clicks;
    out.push_back(p);
  }
  return out;
}

}  // namespace mchain
