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
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mchain/errors.hpp"
#include "mchain/state_vector.hpp"

namespace mchain {

/// Single-site density matrix of the mean-field problem, (n_max+1)².
using SingleSiteDM = Eigen::MatrixXcd;

struct GwConfig {
  double phase_lock_rate = 1.0;  // Λ
  double dephase_rate = 0.0;     // Γ
  double filling = 1.0;          // n, mean particles per site
  int max_occupation = 8;
  double dt = 0.01;
  double t_max = 200.0;
  double tolerance = 1e-8;  // steady state: | |α|(t) - |α|(t - 1/Λ) | below this

  void validate() const {
    detail::require(phase_lock_rate >= 0.0 && dephase_rate >= 0.0, "GwConfig: rates must be nonnegative");
    detail::require(max_occupation >= 1, "GwConfig: n_max must be positive");
    detail::require(filling >= 0.0 && filling <= max_occupation, "GwConfig: need 0 <= n <= n_max");
    detail::require(dt > 0.0 && t_max > 0.0, "GwConfig: dt and t_max must be positive");
  }
};

/// Ladder operators on one truncated site plus the mean-field generators.
///
/// Products such as a a† are taken between truncated matrices, so every
/// generator here is exactly traceless on the truncated space.
class GutzwillerModel {
 public:
  GutzwillerModel(int max_occupation, double filling) : dim_(max_occupation + 1), filling_(filling) {
    detail::require(max_occupation >= 1, "GutzwillerModel: n_max must be positive");
    a_ = Eigen::MatrixXcd::Zero(dim_, dim_);
    for (int k = 1; k < dim_; ++k) a_(k - 1, k) = std::sqrt(static_cast<double>(k));
    ad_ = a_.adjoint();
    n_ = ad_ * a_;
    n2_ = n_ * n_;
    aad_ = a_ * ad_;
    adad_ = ad_ * ad_;
    aa_ = a_ * a_;
    adada_ = ad_ * ad_ * a_;
    adaad_ = ad_ * a_ * ad_;
    adaa_ = ad_ * a_ * a_;
  }

  int dim() const { return static_cast<int>(dim_); }
  int max_occupation() const { return static_cast<int>(dim_) - 1; }
  double filling() const { return filling_; }
  const Eigen::MatrixXcd& annihilation() const { return a_; }
  const Eigen::MatrixXcd& creation() const { return ad_; }
  const Eigen::MatrixXcd& number() const { return n_; }

  /// Mean-field phase-locking generator: the dissipative part plus the
  /// order-generating part and its adjoint, with moments <a>, <a²>,
  /// <a†aa†>, <a†a†a> taken from rho itself.
  Eigen::MatrixXcd phase_lock(const SingleSiteDM& rho) const {
    const double n = filling_;
    Eigen::MatrixXcd out = n * (ad_ * rho * a_ - 0.5 * (aad_ * rho + rho * aad_));
    out += (n + 1.0) * (a_ * rho * ad_ - 0.5 * (n_ * rho + rho * n_));
    out += n_ * rho * n_ - 0.5 * (n2_ * rho + rho * n2_);
    out += order_term(rho);
    out += order_term(rho).adjoint();
    return out;
  }

  /// Order-generating part alone.
  Eigen::MatrixXcd order_term(const SingleSiteDM& rho) const {
    const Complex m_a = moment(rho, a_);
    const Complex m_aa = moment(rho, aa_);
    const Complex m_odd = 0.5 * (moment(rho, adaad_) + moment(rho, adada_));
    Eigen::MatrixXcd e = m_odd * (rho * a_ - a_ * rho);
    e -= m_aa * (ad_ * rho * ad_ - 0.5 * (adad_ * rho + rho * adad_));
    e += m_a * (n_ * rho * ad_ - 0.5 * (adada_ * rho + rho * adada_) - ad_ * rho * n_ +
                0.5 * (adaad_ * rho + rho * adaad_));
    return e;
  }

  /// Number dephasing a†a ρ a†a - ½{(a†a)², ρ}.
  Eigen::MatrixXcd dephasing(const SingleSiteDM& rho) const {
    return n_ * rho * n_ - 0.5 * (n2_ * rho + rho * n2_);
  }

  /// ∂t ρ = 2Λ L_pl(ρ) + Γ L_dp(ρ); the 2 counts the two bonds of a site.
  Eigen::MatrixXcd rhs(const SingleSiteDM& rho, double phase_lock_rate, double dephase_rate) const {
    Eigen::MatrixXcd out = (2.0 * phase_lock_rate) * phase_lock(rho);
    if (dephase_rate != 0.0) out += dephase_rate * dephasing(rho);
    return out;
  }

  Complex moment(const SingleSiteDM& rho, const Eigen::MatrixXcd& op) const { return (rho * op).trace(); }
  Complex order_parameter(const SingleSiteDM& rho) const { return moment(rho, a_); }

  /// dα/dt from the closed moment equation
  /// 2Λ(<a†a²> - <a²> α*) - (Γ/2) α.
  Complex closed_order_parameter_rate(const SingleSiteDM& rho, double phase_lock_rate, double dephase_rate) const {
    const Complex alpha = order_parameter(rho);
    return 2.0 * phase_lock_rate * (moment(rho, adaa_) - moment(rho, aa_) * std::conj(alpha)) -
           0.5 * dephase_rate * alpha;
  }

  /// dα/dt = Tr[a ∂t ρ] from the full generator.
  Complex order_parameter_rate(const SingleSiteDM& rho, double phase_lock_rate, double dephase_rate) const {
    return moment(rhs(rho, phase_lock_rate, dephase_rate), a_);
  }

 private:
  Eigen::Index dim_;
  double filling_;
  Eigen::MatrixXcd a_, ad_, n_, n2_, aad_, adad_, aa_, adada_, adaad_, adaa_;
};

inline Eigen::MatrixXcd liouvillian_pl(const SingleSiteDM& rho, double filling) {
  return GutzwillerModel(static_cast<int>(rho.rows()) - 1, filling).phase_lock(rho);
}

inline Eigen::MatrixXcd liouvillian_dp(const SingleSiteDM& rho) {
  return GutzwillerModel(static_cast<int>(rho.rows()) - 1, 1.0).dephasing(rho);
}

/// |α><α| projected onto levels 0..n_max and renormalized.
inline SingleSiteDM coherent_dm(int max_occupation, Complex alpha) {
  Eigen::VectorXcd v(max_occupation + 1);
  for (int k = 0; k <= max_occupation; ++k)
    v[k] = std::exp(-0.5 * std::norm(alpha) - 0.5 * std::lgamma(k + 1.0)) * std::pow(alpha, k);
  v.normalize();
  return v * v.adjoint();
}

inline SingleSiteDM fock_dm(int max_occupation, int n) {
  detail::require(n >= 0 && n <= max_occupation, "fock_dm: level outside truncation");
  SingleSiteDM rho = SingleSiteDM::Zero(max_occupation + 1, max_occupation + 1);
  rho(n, n) = 1.0;
  return rho;
}

/// e^{iθn} ρ e^{-iθn}.
inline SingleSiteDM rotate_phase(const SingleSiteDM& rho, double theta) {
  SingleSiteDM out = rho;
  for (Eigen::Index r = 0; r < rho.rows(); ++r)
    for (Eigen::Index c = 0; c < rho.cols(); ++c) out(r, c) *= std::polar(1.0, theta * static_cast<double>(r - c));
  return out;
}

/// Default sweep seed: a coherent state at |α| = sqrt(n), mixed with a small
/// weight of the nearest Fock state.
inline SingleSiteDM default_seed(int max_occupation, double filling, double fock_weight = 0.0) {
  SingleSiteDM rho = coherent_dm(max_occupation, Complex(std::sqrt(filling), 0.0));
  if (fock_weight > 0.0) {
    const int level = std::min(max_occupation, static_cast<int>(std::lround(filling)));
    rho = (1.0 - fock_weight) * rho + fock_weight * fock_dm(max_occupation, level);
  }
  return rho;
}

struct GwSample {
  double time = 0.0;
  Complex alpha;
  double trace = 1.0;
  double consistency_residual = 0.0;  // |Tr[a ∂tρ] - closed dα/dt|
};

struct GwSeries {
  std::vector<GwSample> samples;
  SingleSiteDM final_rho;
  double max_trace_drift = 0.0;
  double max_hermiticity_error = 0.0;
  double min_eigenvalue = 0.0;
  double max_consistency_residual = 0.0;
  bool converged = false;
  double t_reached = 0.0;
};

namespace detail {

inline SingleSiteDM rk4_step(const GutzwillerModel& model, const SingleSiteDM& rho, double dt, double lam,
                             double gam) {
  const Eigen::MatrixXcd k1 = model.rhs(rho, lam, gam);
  const Eigen::MatrixXcd k2 = model.rhs(rho + 0.5 * dt * k1, lam, gam);
  const Eigen::MatrixXcd k3 = model.rhs(rho + 0.5 * dt * k2, lam, gam);
  const Eigen::MatrixXcd k4 = model.rhs(rho + dt * k3, lam, gam);
  return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline double min_eigenvalue(const SingleSiteDM& rho) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (rho + rho.adjoint()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace detail

/// Classic RK4 with moments refreshed at every stage. Samples α every
/// `record_every` steps. When `stop_at_steady_state` is set, integration ends
/// once |α| changes by less than cfg.tolerance over a window of 1/Λ (or
/// 1/Γ when Λ = 0). Trace drift beyond 1e-6 throws.
inline GwSeries evolve(const GwConfig& cfg, const SingleSiteDM& rho0, int record_every = 10,
                       bool stop_at_steady_state = false) {
  cfg.validate();
  detail::require(rho0.rows() == cfg.max_occupation + 1 && rho0.cols() == rho0.rows(),
                  "evolve: initial density matrix does not match n_max");
  const GutzwillerModel model(cfg.max_occupation, cfg.filling);
  const double lam = cfg.phase_lock_rate, gam = cfg.dephase_rate;
  const double window = lam > 0.0 ? 1.0 / lam : (gam > 0.0 ? 1.0 / gam : cfg.t_max);
  const long long steps = std::llround(cfg.t_max / cfg.dt);
  const long long window_steps = std::max<long long>(1, std::llround(window / cfg.dt));

  GwSeries out;
  SingleSiteDM rho = rho0;
  double last_window_abs = std::abs(model.order_parameter(rho));
  auto record = [&](double t) {
    GwSample s;
    s.time = t;
    s.alpha = model.order_parameter(rho);
    s.trace = rho.trace().real();
    s.consistency_residual =
        std::abs(model.order_parameter_rate(rho, lam, gam) - model.closed_order_parameter_rate(rho, lam, gam));
    out.max_consistency_residual = std::max(out.max_consistency_residual, s.consistency_residual);
    out.max_hermiticity_error = std::max(out.max_hermiticity_error, (rho - rho.adjoint()).cwiseAbs().maxCoeff());
    out.samples.push_back(s);
  };
  record(0.0);
  out.min_eigenvalue = detail::min_eigenvalue(rho);
  long long k = 0;
  for (k = 1; k <= steps; ++k) {
    rho = detail::rk4_step(model, rho, cfg.dt, lam, gam);
    const double drift = std::abs(rho.trace().real() - 1.0);
    out.max_trace_drift = std::max(out.max_trace_drift, drift);
    if (drift > 1e-6 || !rho.allFinite())
      throw NumericGuardError("Gutzwiller evolution: trace drift " + std::to_string(drift) + " (reduce dt)");
    const double t = static_cast<double>(k) * cfg.dt;
    if (k % record_every == 0) record(t);
    if (k % window_steps == 0) {
      out.min_eigenvalue = std::min(out.min_eigenvalue, detail::min_eigenvalue(rho));
      const double abs_alpha = std::abs(model.order_parameter(rho));
      if (stop_at_steady_state && std::abs(abs_alpha - last_window_abs) < cfg.tolerance) {
        out.converged = true;
        break;
      }
      last_window_abs = abs_alpha;
    }
  }
  out.t_reached = static_cast<double>(std::min(k, steps)) * cfg.dt;
  if (out.samples.back().time < out.t_reached) record(out.t_reached);
  out.final_rho = rho;
  return out;
}

struct SweepPoint {
  double gamma = 0.0;
  double abs_alpha = 0.0;
  bool converged = false;
  double t_reached = 0.0;
  double consistency_residual = 0.0;  // largest along the integration
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::optional<double> gamma_c;
  double threshold = 1e-3;
};

/// Steady |α| at Γ = γΛ starting from `seed`.
inline SweepPoint steady_order_parameter(const GwConfig& base, double gamma, const SingleSiteDM& seed) {
  GwConfig cfg = base;
  cfg.dephase_rate = gamma * base.phase_lock_rate;
  const auto series = evolve(cfg, seed, 10, true);
  return {gamma, std::abs(series.samples.back().alpha), series.converged, series.t_reached,
          series.max_consistency_residual};
}

/// Steady |α| on a sorted γ grid. γ_c is the first grid point where |α|
/// falls below `threshold`, refined by bisection against the previous grid
/// point down to `bisection_tolerance`.
inline SweepResult order_parameter_sweep(const std::vector<double>& gammas, const GwConfig& base,
                                         double threshold = 1e-3, double bisection_tolerance = 1e-3) {
  detail::require(!gammas.empty(), "order_parameter_sweep: empty grid");
  detail::require(std::is_sorted(gammas.begin(), gammas.end()), "order_parameter_sweep: grid must be sorted");
  base.validate();
  const SingleSiteDM seed = default_seed(base.max_occupation, base.filling);
  SweepResult out;
  out.threshold = threshold;
  for (double g : gammas) out.points.push_back(steady_order_parameter(base, g, seed));
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    if (out.points[i].abs_alpha >= threshold) continue;
    if (i == 0) {
      out.gamma_c = out.points[0].gamma;
      break;
    }
    double lo = out.points[i - 1].gamma, hi = out.points[i].gamma;
    while (hi - lo > bisection_tolerance) {
      const double mid = 0.5 * (lo + hi);
      if (steady_order_parameter(base, mid, seed).abs_alpha < threshold) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    out.gamma_c = 0.5 * (lo + hi);
    break;
  }
  return out;
}

}  // namespace mchain
