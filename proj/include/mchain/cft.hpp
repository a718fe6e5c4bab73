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
#include <numbers>
#include <utility>
#include <vector>

#include "mchain/entanglement.hpp"
#include "mchain/errors.hpp"

namespace mchain {

/// Open-boundary chord length log[(2L/π) sin(πl/L)].
inline double chord_log(int sites, int l) {
  const double L = sites;
  return std::log(2.0 * L / std::numbers::pi * std::sin(std::numbers::pi * l / L));
}

enum class FitWeighting { Weighted, Unweighted };

/// S(l) = (c/6) chord_log(L, l) + s0, fitted by linear least squares.
struct CftFit {
  double central_charge = 0.0;
  double residual_entropy = 0.0;
  double residual_rms = 0.0;
  int l_min = 0;
  int l_max = 0;
  double cov_cc = 0.0;  // var(c)
  double cov_cs = 0.0;  // cov(c, s0)
  double cov_ss = 0.0;  // var(s0)
  bool weighted = false;

  double c_stderr() const { return std::sqrt(std::max(cov_cc, 0.0)); }
  double s0_stderr() const { return std::sqrt(std::max(cov_ss, 0.0)); }
};

/// Weighted least squares for y = slope * x + intercept. With weights,
/// the parameter covariance is (XᵀWX)⁻¹ (errors taken as absolute); without,
/// it is scaled by the residual variance RSS/(n-2) (zero when n == 2).
inline CftFit fit_chord_model(const std::vector<double>& x, const std::vector<double>& y,
                              const std::vector<double>& sigma, FitWeighting weighting) {
  const std::size_t n = x.size();
  detail::require(n >= 2 && y.size() == n, "CFT fit: need at least two points");
  bool use_weights = weighting == FitWeighting::Weighted && sigma.size() == n;
  if (use_weights)
    for (double s : sigma) use_weights = use_weights && s > 0.0;

  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = use_weights ? 1.0 / (sigma[i] * sigma[i]) : 1.0;
    sw += w;
    sx += w * x[i];
    sy += w * y[i];
  }
  // Center before solving; the normal matrix of raw x can be badly scaled.
  const double xbar = sx / sw, ybar = sy / sw;
  double cxx = 0, cxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = use_weights ? 1.0 / (sigma[i] * sigma[i]) : 1.0;
    cxx += w * (x[i] - xbar) * (x[i] - xbar);
    cxy += w * (x[i] - xbar) * (y[i] - ybar);
  }
  const double x_span = *std::max_element(x.begin(), x.end()) - *std::min_element(x.begin(), x.end());
  if (!(x_span > 1e-12 * std::max(1.0, std::abs(xbar))) || !(cxx > 0.0))
    throw ValidationError("CFT fit: degenerate regressor (all chord lengths equal)");

  const double slope = cxy / cxx;
  const double intercept = ybar - slope * xbar;

  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (slope * x[i] + intercept);
    rss += r * r;
  }
  // Covariance of (slope, intercept) from the inverse normal matrix.
  double var_slope = 1.0 / cxx;
  double var_icpt = 1.0 / sw + xbar * xbar / cxx;
  double cov_si = -xbar / cxx;
  if (!use_weights) {
    const double s2 = n > 2 ? rss / static_cast<double>(n - 2) : 0.0;
    var_slope *= s2;
    var_icpt *= s2;
    cov_si *= s2;
  }

  CftFit fit;
  fit.central_charge = 6.0 * slope;
  fit.residual_entropy = intercept;
  fit.residual_rms = std::sqrt(rss / static_cast<double>(n));
  fit.cov_cc = 36.0 * var_slope;
  fit.cov_cs = 6.0 * cov_si;
  fit.cov_ss = var_icpt;
  fit.weighted = use_weights;
  return fit;
}

/// Fit over l in [l_min, l_max] (inclusive).
inline CftFit fit_profile(const EntropyProfile& profile, int l_min, int l_max,
                          FitWeighting weighting = FitWeighting::Weighted) {
  detail::require(l_min >= 1 && l_max <= profile.sites - 1, "fit_profile: window must lie inside [1, L-1]");
  detail::require(l_max - l_min >= 1, "fit_profile: window needs at least two points");
  std::vector<double> x, y, s;
  for (int l = l_min; l <= l_max; ++l) {
    x.push_back(chord_log(profile.sites, l));
    y.push_back(profile.at(l));
    s.push_back(profile.stderr_at(l));
  }
  CftFit fit = fit_chord_model(x, y, s, weighting);
  fit.l_min = l_min;
  fit.l_max = l_max;
  return fit;
}

/// Default window [2, L-2], which drops the boundary cuts. Since
/// chord_log(L, l) == chord_log(L, L-l), the window needs l = 2 and l = 3 on
/// the same side of L/2 to hold two distinct regressor values, so L < 6 falls
/// back to the full [1, L-1] range.
inline std::pair<int, int> default_fit_window(int sites) {
  if (sites / 2 >= 3) return {2, sites - 2};
  return {1, sites - 1};
}

/// c_α = (c/2)(1 + 1/α).
inline double renyi_central_charge(double c, double alpha) {
  detail::require(alpha > 0.0, "Renyi order must be positive");
  return 0.5 * c * (1.0 + 1.0 / alpha);
}

struct RenyiConsistency {
  std::vector<double> alphas;
  std::vector<double> estimates;  // c recovered from each c_α
  double mean = 0.0;
  double spread = 0.0;  // max - min of the estimates
};

/// Inverts c_α = (c/2)(1 + 1/α) per entry and reports the spread of the
/// recovered c across orders.
inline RenyiConsistency central_charge_from_renyi(const std::vector<std::pair<double, double>>& c_alpha) {
  detail::require(!c_alpha.empty(), "central_charge_from_renyi: empty input");
  RenyiConsistency out;
  for (const auto& [alpha, ca] : c_alpha) {
    detail::require(alpha > 0.0, "central_charge_from_renyi: alpha must be positive");
    out.alphas.push_back(alpha);
    out.estimates.push_back(2.0 * ca / (1.0 + 1.0 / alpha));
  }
  double sum = 0.0;
  for (double e : out.estimates) sum += e;
  out.mean = sum / static_cast<double>(out.estimates.size());
  const auto [lo, hi] = std::minmax_element(out.estimates.begin(), out.estimates.end());
  out.spread = *hi - *lo;
  return out;
}

}  // namespace mchain
