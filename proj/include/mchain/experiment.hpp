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
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mchain/ancilla.hpp"
#include "mchain/cft.hpp"
#include "mchain/entanglement.hpp"
#include "mchain/errors.hpp"
#include "mchain/gutzwiller.hpp"
#include "mchain/io.hpp"
#include "mchain/lindblad.hpp"
#include "mchain/operators.hpp"
#include "mchain/trajectory.hpp"
#include "mchain/version.hpp"

namespace mchain {

using Json = nlohmann::ordered_json;

namespace exit_code {
inline constexpr int kSuccess = 0;
inline constexpr int kValidation = 2;
inline constexpr int kNumericGuard = 3;
inline constexpr int kComparisonFailed = 4;
}  // namespace exit_code

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootVariable = "MCHAIN_OUTPUT_ROOT";

inline const std::vector<std::string>& experiment_commands() {
  static const std::vector<std::string> names{"trajectories", "entropy-scan", "gutzwiller",
                                              "lindblad-check", "ancilla", "fit"};
  return names;
}

/// Everything needed to reproduce one run. Optional fields take
/// command-specific defaults in resolve_spec().
struct ExperimentSpec {
  std::string command;
  std::string output;
  std::uint64_t seed = 1;
  unsigned workers = 1;  // execution resource only; never affects results

  // chain model
  std::optional<int> sites;
  std::optional<int> particles;
  std::optional<int> max_occupation;
  std::optional<double> gamma;
  std::optional<double> phase_lock_rate;
  std::optional<double> dephase_rate;
  std::string initial = "fock";  // "fock" or "dark"
  std::vector<int> occupations;  // fock pattern; empty selects all ones

  // run
  std::optional<double> dt;
  std::optional<double> t_max;
  std::optional<std::size_t> trajectories;
  std::vector<double> snapshot_times;

  // analysis
  std::vector<double> renyi_alphas;
  std::optional<std::pair<int, int>> fit_window;
  std::string weighting = "weighted";
  std::vector<double> gamma_grid;

  // gutzwiller
  double filling = 1.0;
  double tolerance = 1e-8;
  double threshold = 1e-3;
  double bisection_tolerance = 1e-3;

  // lindblad-check
  std::optional<double> oracle_dephase_rate;
  double z_threshold = 3.0;

  // ancilla
  std::string circuit = "dephasing";  // "dephasing", "phaselock" or "rate-check"
  double g_eff = 1.0;
  double h_eff = 0.0;
  std::optional<double> kappa;
  std::vector<double> kappa_grid;
  std::vector<int> cavity;

  // fit
  std::string profile;
};

namespace detail {

template <class T>
void read_optional(const Json& j, const char* key, std::optional<T>& field) {
  if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<T>();
}

template <class T>
void read_value(const Json& j, const char* key, T& field) {
  if (j.contains(key) && !j.at(key).is_null()) field = j.at(key).get<T>();
}

template <class T>
void write_optional(Json& j, const char* key, const std::optional<T>& field) {
  if (field) j[key] = *field;
}

inline const std::set<std::string>& spec_keys() {
  static const std::set<std::string> keys{
      "command",     "output",       "seed",         "workers",     "L",           "N",
      "n_max",       "gamma",        "Lambda",       "Gamma",       "initial",     "occupations",
      "dt",          "t_max",        "M",            "snapshot_times", "renyi_alphas", "fit_window",
      "weighting",   "gamma_grid",   "filling",      "tolerance",   "threshold",   "bisection_tolerance",
      "oracle_Gamma", "z_threshold", "circuit",      "g_eff",       "h_eff",       "kappa",
      "kappa_grid",  "cavity",       "profile"};
  return keys;
}

}  // namespace detail

/// Reads a spec from JSON. Unknown keys are rejected.
inline ExperimentSpec spec_from_json(const Json& j) {
  detail::require(j.is_object(), "spec must be a JSON object");
  for (const auto& [key, value] : j.items())
    detail::require(detail::spec_keys().count(key) > 0, "unknown spec key '" + key + "'");
  ExperimentSpec s;
  try {
    detail::read_value(j, "command", s.command);
    detail::read_value(j, "output", s.output);
    detail::read_value(j, "seed", s.seed);
    detail::read_value(j, "workers", s.workers);
    detail::read_optional(j, "L", s.sites);
    detail::read_optional(j, "N", s.particles);
    detail::read_optional(j, "n_max", s.max_occupation);
    detail::read_optional(j, "gamma", s.gamma);
    detail::read_optional(j, "Lambda", s.phase_lock_rate);
    detail::read_optional(j, "Gamma", s.dephase_rate);
    detail::read_value(j, "initial", s.initial);
    detail::read_value(j, "occupations", s.occupations);
    detail::read_optional(j, "dt", s.dt);
    detail::read_optional(j, "t_max", s.t_max);
    detail::read_optional(j, "M", s.trajectories);
    detail::read_value(j, "snapshot_times", s.snapshot_times);
    detail::read_value(j, "renyi_alphas", s.renyi_alphas);
    if (j.contains("fit_window") && !j.at("fit_window").is_null()) {
      const auto w = j.at("fit_window").get<std::vector<int>>();
      detail::require(w.size() == 2, "fit_window must be [l_min, l_max]");
      s.fit_window = std::make_pair(w[0], w[1]);
    }
    detail::read_value(j, "weighting", s.weighting);
    detail::read_value(j, "gamma_grid", s.gamma_grid);
    detail::read_value(j, "filling", s.filling);
    detail::read_value(j, "tolerance", s.tolerance);
    detail::read_value(j, "threshold", s.threshold);
    detail::read_value(j, "bisection_tolerance", s.bisection_tolerance);
    detail::read_optional(j, "oracle_Gamma", s.oracle_dephase_rate);
    detail::read_value(j, "z_threshold", s.z_threshold);
    detail::read_value(j, "circuit", s.circuit);
    detail::read_value(j, "g_eff", s.g_eff);
    detail::read_value(j, "h_eff", s.h_eff);
    detail::read_optional(j, "kappa", s.kappa);
    detail::read_value(j, "kappa_grid", s.kappa_grid);
    detail::read_value(j, "cavity", s.cavity);
    detail::read_value(j, "profile", s.profile);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("spec: ") + e.what());
  }
  return s;
}

/// Spec echo for manifests. `workers` is left out so that manifests match
/// across worker counts.
inline Json spec_to_json(const ExperimentSpec& s) {
  Json j;
  j["command"] = s.command;
  j["output"] = s.output;
  j["seed"] = s.seed;
  detail::write_optional(j, "L", s.sites);
  detail::write_optional(j, "N", s.particles);
  detail::write_optional(j, "n_max", s.max_occupation);
  // Once resolved, the rates replace the ratio so that the echo parses back.
  if (!s.phase_lock_rate && !s.dephase_rate) detail::write_optional(j, "gamma", s.gamma);
  detail::write_optional(j, "Lambda", s.phase_lock_rate);
  detail::write_optional(j, "Gamma", s.dephase_rate);
  j["initial"] = s.initial;
  j["occupations"] = s.occupations;
  detail::write_optional(j, "dt", s.dt);
  detail::write_optional(j, "t_max", s.t_max);
  detail::write_optional(j, "M", s.trajectories);
  j["snapshot_times"] = s.snapshot_times;
  j["renyi_alphas"] = s.renyi_alphas;
  if (s.fit_window) j["fit_window"] = {s.fit_window->first, s.fit_window->second};
  j["weighting"] = s.weighting;
  j["gamma_grid"] = s.gamma_grid;
  j["filling"] = s.filling;
  j["tolerance"] = s.tolerance;
  j["threshold"] = s.threshold;
  j["bisection_tolerance"] = s.bisection_tolerance;
  detail::write_optional(j, "oracle_Gamma", s.oracle_dephase_rate);
  j["z_threshold"] = s.z_threshold;
  j["circuit"] = s.circuit;
  j["g_eff"] = s.g_eff;
  j["h_eff"] = s.h_eff;
  detail::write_optional(j, "kappa", s.kappa);
  j["kappa_grid"] = s.kappa_grid;
  j["cavity"] = s.cavity;
  j["profile"] = s.profile;
  return j;
}

namespace detail {

inline std::vector<double> even_grid(double t_max, int intervals) {
  std::vector<double> out;
  for (int k = 0; k <= intervals; ++k) out.push_back(t_max * k / intervals);
  return out;
}

inline void require_positive_list(const std::vector<double>& xs, const char* what) {
  for (double x : xs) require(std::isfinite(x) && x > 0.0, std::string(what) + " entries must be positive");
}

/// Λ and Γ from either γ (Λ = 1) or explicit rates.
inline void resolve_rates(ExperimentSpec& s) {
  const bool explicit_rates = s.phase_lock_rate.has_value() || s.dephase_rate.has_value();
  require(!(s.gamma && explicit_rates), "gamma and (Lambda, Gamma) are mutually exclusive");
  if (!explicit_rates) {
    if (!s.gamma) s.gamma = 1.0;
    require(std::isfinite(*s.gamma) && *s.gamma >= 0.0, "gamma must be nonnegative");
    s.phase_lock_rate = 1.0;
    s.dephase_rate = *s.gamma;
  } else {
    if (!s.phase_lock_rate) s.phase_lock_rate = 1.0;
    if (!s.dephase_rate) s.dephase_rate = 0.0;
  }
  require(*s.phase_lock_rate >= 0.0 && *s.dephase_rate >= 0.0, "rates must be nonnegative");
  require(*s.phase_lock_rate > 0.0 || *s.dephase_rate > 0.0, "at least one rate must be positive");
}

inline void resolve_chain(ExperimentSpec& s, int default_sites, int default_max_occupation) {
  if (!s.sites) s.sites = default_sites;
  require(*s.sites >= 2, "L must be at least 2");
  if (!s.occupations.empty()) {
    require(static_cast<int>(s.occupations.size()) == *s.sites, "occupations must list L entries");
    int total = 0;
    for (int n : s.occupations) {
      require(n >= 0, "occupations must be nonnegative");
      total += n;
    }
    require(!s.particles || *s.particles == total, "N disagrees with the occupations");
    s.particles = total;
  }
  if (!s.particles) s.particles = *s.sites;
  require(*s.particles >= 0, "N must be nonnegative");
  if (!s.max_occupation) s.max_occupation = std::min(default_max_occupation, std::max(1, *s.particles));
  require(*s.max_occupation >= 1, "n_max must be positive");
  require(*s.particles <= *s.sites * *s.max_occupation, "N exceeds L * n_max");
  for (int n : s.occupations) require(n <= *s.max_occupation, "occupation exceeds n_max");
  require(s.initial == "fock" || s.initial == "dark", "initial must be 'fock' or 'dark'");
  if (s.initial == "fock" && s.occupations.empty())
    require(*s.particles == *s.sites, "the default Fock state |1...1> needs N = L; give occupations otherwise");
  if (s.initial == "dark")
    require(*s.max_occupation >= *s.particles, "the dark state is exact only when n_max >= N");
}

inline void resolve_run(ExperimentSpec& s, double default_t_max, std::size_t default_trajectories) {
  if (!s.t_max) s.t_max = default_t_max;
  require(std::isfinite(*s.t_max) && *s.t_max > 0.0, "t_max must be positive");
  if (s.dt) require(std::isfinite(*s.dt) && *s.dt > 0.0, "dt must be positive");
  if (!s.trajectories) s.trajectories = default_trajectories;
  require(*s.trajectories >= 1, "M must be at least 1");
  require(std::is_sorted(s.snapshot_times.begin(), s.snapshot_times.end()), "snapshot_times must be sorted");
  for (double t : s.snapshot_times) require(t >= 0.0 && t <= *s.t_max, "snapshot time outside [0, t_max]");
}

inline void resolve_analysis(ExperimentSpec& s) {
  for (double a : s.renyi_alphas) require(a > 0.0 && a != 1.0, "renyi_alphas must be positive and differ from 1");
  require(s.weighting == "weighted" || s.weighting == "unweighted", "weighting must be weighted or unweighted");
  if (s.fit_window) {
    require(s.fit_window->first >= 1 && s.fit_window->second - s.fit_window->first >= 1,
            "fit_window needs 1 <= l_min < l_max");
    if (s.sites) require(s.fit_window->second <= *s.sites - 1, "fit_window exceeds L - 1");
  }
}

}  // namespace detail

/// Fills command-specific defaults and checks every precondition. Throws
/// ValidationError before any output is produced.
inline ExperimentSpec resolve_spec(ExperimentSpec s) {
  using namespace detail;
  const auto& cmds = experiment_commands();
  require(std::find(cmds.begin(), cmds.end(), s.command) != cmds.end(), "unknown command '" + s.command + "'");
  require(s.workers >= 1, "workers must be at least 1");
  if (s.command == "trajectories") {
    resolve_rates(s);
    resolve_chain(s, 6, 4);
    resolve_run(s, 10.0, 100);
    if (s.snapshot_times.empty()) s.snapshot_times = even_grid(*s.t_max, 20);
    resolve_analysis(s);
  } else if (s.command == "entropy-scan") {
    require(!s.phase_lock_rate && !s.dephase_rate, "entropy-scan takes gamma or gamma_grid, not (Lambda, Gamma)");
    if (s.gamma_grid.empty()) s.gamma_grid = {s.gamma.value_or(1.0)};
    require(!s.gamma || s.gamma_grid == std::vector<double>{*s.gamma}, "give gamma or gamma_grid, not both");
    for (double g : s.gamma_grid) require(std::isfinite(g) && g >= 0.0, "gamma_grid entries must be nonnegative");
    require(std::is_sorted(s.gamma_grid.begin(), s.gamma_grid.end()), "gamma_grid must be sorted");
    s.gamma.reset();
    resolve_chain(s, 8, 4);
    resolve_run(s, 10.0, 100);
    if (s.snapshot_times.empty()) s.snapshot_times = {*s.t_max};
    resolve_analysis(s);
  } else if (s.command == "gutzwiller") {
    require(!s.phase_lock_rate && !s.dephase_rate && !s.gamma, "gutzwiller sweeps gamma_grid (Lambda = 1)");
    if (!s.max_occupation) s.max_occupation = 8;
    require(*s.max_occupation >= 1, "n_max must be positive");
    require(s.filling >= 0.0 && s.filling <= *s.max_occupation, "filling must lie in [0, n_max]");
    if (!s.dt) s.dt = 0.01;
    if (!s.t_max) s.t_max = 300.0;
    require(*s.dt > 0.0 && *s.t_max > *s.dt, "need 0 < dt < t_max");
    if (s.gamma_grid.empty()) {
      s.gamma_grid = {0.0, 0.1};
      for (int k = 1; k <= 24; ++k) s.gamma_grid.push_back(0.25 * k);
    }
    require(std::is_sorted(s.gamma_grid.begin(), s.gamma_grid.end()), "gamma_grid must be sorted");
    for (double g : s.gamma_grid) require(std::isfinite(g) && g >= 0.0, "gamma_grid entries must be nonnegative");
    require(s.tolerance > 0.0 && s.threshold > 0.0 && s.bisection_tolerance > 0.0,
            "tolerance, threshold and bisection_tolerance must be positive");
  } else if (s.command == "lindblad-check") {
    resolve_rates(s);
    resolve_chain(s, 3, 4);
    if (s.snapshot_times.empty()) s.snapshot_times = {0.5, 1.0, 2.0, 5.0};
    if (!s.t_max) s.t_max = s.snapshot_times.back();
    resolve_run(s, s.snapshot_times.back(), 2000);
    if (s.oracle_dephase_rate) require(*s.oracle_dephase_rate >= 0.0, "oracle_Gamma must be nonnegative");
    require(s.z_threshold > 0.0, "z_threshold must be positive");
    const FockBasis probe(*s.sites, *s.particles, *s.max_occupation);
    require(probe.dim() <= 2000, "lindblad-check: sector too large for a dense density matrix");
  } else if (s.command == "ancilla") {
    require(s.circuit == "dephasing" || s.circuit == "phaselock" || s.circuit == "rate-check",
            "circuit must be dephasing, phaselock or rate-check");
    require(std::isfinite(s.g_eff) && std::isfinite(s.h_eff), "couplings must be finite");
    if (!s.kappa) s.kappa = std::sqrt(500.0) * std::abs(s.g_eff);
    require(*s.kappa > 0.0, "kappa must be positive");
    if (s.dt) require(*s.dt > 0.0, "dt must be positive");
    if (s.t_max) require(*s.t_max > 0.0, "t_max must be positive");
    if (s.circuit == "dephasing") {
      if (s.cavity.empty()) s.cavity = {1, 3};
      require(s.cavity.size() == 2 && s.cavity[0] >= 0 && s.cavity[0] < s.cavity[1],
              "dephasing cavity must be [n1, n2] with 0 <= n1 < n2");
      if (!s.trajectories) s.trajectories = 1000;
    } else {
      if (s.cavity.empty()) s.cavity = {1, 1};
      require(s.cavity.size() == 2 && s.cavity[0] >= 0 && s.cavity[1] >= 0 && s.cavity[0] + s.cavity[1] >= 1,
              "phase-lock cavity must be two occupations [n1, n2] with n1 + n2 >= 1");
      if (!s.max_occupation) s.max_occupation = s.cavity[0] + s.cavity[1];
      require(*s.max_occupation >= std::max(s.cavity[0], s.cavity[1]), "n_max below the initial occupations");
      if (!s.trajectories) s.trajectories = s.circuit == "rate-check" ? 2000 : 500;
      if (s.circuit == "rate-check") {
        require(s.g_eff > 0.0, "rate-check needs g_eff > 0");
        require(s.cavity == std::vector<int>{1, 1}, "rate-check starts from |1,1>");
        if (s.kappa_grid.empty()) s.kappa_grid = {5.0, 10.0, 20.0, std::sqrt(500.0), 50.0, 100.0};
        detail::require_positive_list(s.kappa_grid, "kappa_grid");
        require(std::is_sorted(s.kappa_grid.begin(), s.kappa_grid.end()), "kappa_grid must be sorted");
        for (double& k : s.kappa_grid) k *= s.g_eff;
      }
    }
    require(*s.trajectories >= 1, "M must be at least 1");
  } else if (s.command == "fit") {
    require(!s.profile.empty(), "fit needs a profile CSV");
    require(std::filesystem::exists(s.profile), "profile CSV not found: " + s.profile);
    resolve_analysis(s);
  }
  if (s.output.empty()) {
    const char* root = std::getenv(kOutputRootVariable);
    s.output = (std::filesystem::path(root && *root ? root : "mchain-out") / s.command).string();
  }
  return s;
}

/// Result of one command: the process exit code and the final manifest.
struct RunOutcome {
  int exit_code = exit_code::kSuccess;
  Json manifest;
};

namespace detail {

inline Json base_manifest(const ExperimentSpec& spec) {
  Json m;
  m["tool"] = "mchain";
  m["version"] = kVersion;
  m["command"] = spec.command;
  m["master_seed"] = spec.seed;
  m["spec"] = spec_to_json(spec);
  return m;
}

inline std::filesystem::path out_path(const ExperimentSpec& spec, const char* name) {
  return std::filesystem::path(spec.output) / name;
}

inline void write_json(const std::filesystem::path& path, const Json& j) { io::write_file(path, j.dump(2) + "\n"); }

inline StateVector initial_state(const ExperimentSpec& spec, const BasisPtr& basis) {
  if (spec.initial == "dark") return build_bec_dark_state(basis);
  if (spec.occupations.empty()) return StateVector::uniform_fock(basis);
  return StateVector::fock(basis, spec.occupations);
}

inline std::vector<EntropyKind> entropy_kinds(const ExperimentSpec& spec) {
  std::vector<EntropyKind> kinds{EntropyKind::von_neumann()};
  for (double a : spec.renyi_alphas) kinds.push_back(EntropyKind::renyi(a));
  return kinds;
}

inline io::CsvTable profile_table() {
  return io::CsvTable({"gamma", "L", "t", "l", "kind", "alpha", "mean", "stderr", "M"});
}

inline void append_profile(io::CsvTable& table, const EntropyProfile& p, std::size_t samples) {
  for (int l = 1; l < p.sites; ++l) {
    table.row() << p.gamma << p.sites << p.time << l << p.kind.name() << p.kind.alpha << p.at(l) << p.stderr_at(l)
                << samples;
    table.end_row();
  }
}

inline Json fit_record(const EntropyProfile& p, const CftFit& f) {
  Json j;
  j["gamma"] = p.gamma;
  j["L"] = p.sites;
  j["t"] = p.time;
  j["kind"] = p.kind.name();
  j["alpha"] = p.kind.alpha;
  j["c"] = f.central_charge;
  j["s0"] = f.residual_entropy;
  j["c_stderr"] = f.c_stderr();
  j["s0_stderr"] = f.s0_stderr();
  j["residual_rms"] = f.residual_rms;
  j["l_min"] = f.l_min;
  j["l_max"] = f.l_max;
  return j;
}

inline CftFit fit_with_spec(const ExperimentSpec& spec, const EntropyProfile& p) {
  const auto window = spec.fit_window.value_or(default_fit_window(p.sites));
  return fit_profile(p, window.first, window.second,
                     spec.weighting == "weighted" ? FitWeighting::Weighted : FitWeighting::Unweighted);
}

inline MonitoringConfig monitoring_config(const ExperimentSpec& spec) {
  MonitoringConfig cfg;
  cfg.phase_lock_rate = *spec.phase_lock_rate;
  cfg.dephase_rate = *spec.dephase_rate;
  cfg.dt = spec.dt.value_or(0.0);
  cfg.t_max = *spec.t_max;
  cfg.seed = spec.seed;
  cfg.snapshot_times = spec.snapshot_times;
  return cfg;
}

inline io::CsvTable observable_table(const EnsembleResult& ens) {
  io::CsvTable table({"t", "trajectory_id", "observable_name", "value_re", "value_im"});
  for (std::size_t k = 0; k < ens.config.snapshot_times.size(); ++k)
    for (std::size_t m = 0; m < ens.size(); ++m)
      for (std::size_t o = 0; o < ens.observable_names.size(); ++o) {
        const Complex v = ens.trajectories[m].snapshots[k].observables[o];
        table.row() << ens.config.snapshot_times[k] << m << ens.observable_names[o] << v.real() << v.imag();
        table.end_row();
      }
  return table;
}

inline io::CsvTable jump_table(const EnsembleResult& ens) {
  io::CsvTable table({"trajectory_id", "t", "channel", "site"});
  for (std::size_t m = 0; m < ens.size(); ++m)
    for (const auto& j : ens.trajectories[m].jumps) {
      table.row() << m << j.time << to_string(j.channel) << j.site;
      table.end_row();
    }
  return table;
}

/// Mean and combined standard error of S̄(L/2) - S̄(L/4).
inline Json half_quarter(const EntropyProfile& p) {
  const int half = p.sites / 2, quarter = std::max(1, p.sites / 4);
  const double diff = p.at(half) - p.at(quarter);
  const double sigma = std::hypot(p.stderr_at(half), p.stderr_at(quarter));
  Json j;
  j["gamma"] = p.gamma;
  j["l_half"] = half;
  j["l_quarter"] = quarter;
  j["S_half"] = p.at(half);
  j["S_quarter"] = p.at(quarter);
  j["difference"] = diff;
  j["combined_stderr"] = sigma;
  return j;
}

}  // namespace detail

inline RunOutcome cmd_trajectories(const ExperimentSpec& spec) {
  const auto basis = build_basis(*spec.sites, *spec.particles, *spec.max_occupation);
  const MonitoredChain chain(basis, *spec.phase_lock_rate, *spec.dephase_rate);
  const auto psi0 = detail::initial_state(spec, basis);
  const auto recorder =
      SnapshotRecorder::with_entropies(*basis, default_observables(basis), detail::entropy_kinds(spec));
  const auto ens =
      run_ensemble(chain, detail::monitoring_config(spec), psi0, recorder, *spec.trajectories, spec.workers);

  auto profiles = detail::profile_table();
  Json half_chain = Json::array();
  for (std::size_t k = 0; k < spec.snapshot_times.size(); ++k)
    for (const auto& kind : ens.entropy_kinds) {
      const auto p = average_profile(ens, k, kind);
      detail::append_profile(profiles, p, ens.size());
      if (kind.is_von_neumann())
        half_chain.push_back({{"t", p.time}, {"mean", p.at(p.sites / 2)}, {"stderr", p.stderr_at(p.sites / 2)}});
    }
  io::write_file(detail::out_path(spec, "observables.csv"), detail::observable_table(ens).text());
  io::write_file(detail::out_path(spec, "jumps.csv"), detail::jump_table(ens).text());
  io::write_file(detail::out_path(spec, "profiles.csv"), profiles.text());

  RunOutcome out;
  out.manifest["dt"] = ens.dt;
  out.manifest["dimension"] = basis->dim();
  out.manifest["total_jumps"] = ens.total_jumps();
  out.manifest["half_chain_entropy"] = half_chain;
  out.manifest["files"] = {"observables.csv", "jumps.csv", "profiles.csv"};
  return out;
}

inline RunOutcome cmd_entropy_scan(const ExperimentSpec& spec) {
  const auto basis = build_basis(*spec.sites, *spec.particles, *spec.max_occupation);
  const auto psi0 = detail::initial_state(spec, basis);
  const auto kinds = detail::entropy_kinds(spec);
  const auto recorder = SnapshotRecorder::with_entropies(*basis, {}, kinds);
  auto profiles = detail::profile_table();
  Json fits = Json::array(), comparisons = Json::array(), steps = Json::array();
  for (std::size_t g = 0; g < spec.gamma_grid.size(); ++g) {
    const double gamma = spec.gamma_grid[g];
    const MonitoredChain chain(basis, 1.0, gamma);
    MonitoringConfig cfg;
    cfg.phase_lock_rate = 1.0;
    cfg.dephase_rate = gamma;
    cfg.dt = spec.dt.value_or(0.0);
    cfg.t_max = *spec.t_max;
    cfg.seed = derive_seed(spec.seed, g);
    cfg.snapshot_times = spec.snapshot_times;
    const auto ens = run_ensemble(chain, cfg, psi0, recorder, *spec.trajectories, spec.workers);
    steps.push_back(ens.dt);
    for (std::size_t k = 0; k < spec.snapshot_times.size(); ++k)
      for (const auto& kind : kinds) {
        const auto p = average_profile(ens, k, kind);
        detail::append_profile(profiles, p, ens.size());
        if (k + 1 == spec.snapshot_times.size()) {
          fits.push_back(detail::fit_record(p, detail::fit_with_spec(spec, p)));
          if (kind.is_von_neumann()) comparisons.push_back(detail::half_quarter(p));
        }
      }
  }
  io::write_file(detail::out_path(spec, "profiles.csv"), profiles.text());
  detail::write_json(detail::out_path(spec, "fits.json"), fits);
  RunOutcome out;
  out.manifest["dt"] = steps;
  out.manifest["half_quarter"] = comparisons;
  out.manifest["files"] = {"profiles.csv", "fits.json"};
  return out;
}

inline RunOutcome cmd_gutzwiller(const ExperimentSpec& spec) {
  GwConfig cfg;
  cfg.phase_lock_rate = 1.0;
  cfg.filling = spec.filling;
  cfg.max_occupation = *spec.max_occupation;
  cfg.dt = *spec.dt;
  cfg.t_max = *spec.t_max;
  cfg.tolerance = spec.tolerance;
  const auto sweep = order_parameter_sweep(spec.gamma_grid, cfg, spec.threshold, spec.bisection_tolerance);
  io::CsvTable table({"gamma", "abs_alpha", "converged", "t_reached"});
  double residual = 0.0;
  for (const auto& p : sweep.points) {
    table.row() << p.gamma << p.abs_alpha << p.converged << p.t_reached;
    table.end_row();
    residual = std::max(residual, p.consistency_residual);
  }
  io::write_file(detail::out_path(spec, "sweep.csv"), table.text());
  RunOutcome out;
  out.manifest["gamma_c"] = sweep.gamma_c ? Json(*sweep.gamma_c) : Json(nullptr);
  out.manifest["threshold"] = sweep.threshold;
  out.manifest["max_consistency_residual"] = residual;
  out.manifest["files"] = {"sweep.csv"};
  return out;
}

inline RunOutcome cmd_lindblad_check(const ExperimentSpec& spec) {
  const auto basis = build_basis(*spec.sites, *spec.particles, *spec.max_occupation);
  const MonitoredChain chain(basis, *spec.phase_lock_rate, *spec.dephase_rate);
  const auto psi0 = detail::initial_state(spec, basis);
  const auto observables = default_observables(basis);
  auto cfg = detail::monitoring_config(spec);
  const auto ens =
      run_ensemble(chain, cfg, psi0, SnapshotRecorder::observables_only(observables), *spec.trajectories, spec.workers);
  const double oracle_gamma = spec.oracle_dephase_rate.value_or(*spec.dephase_rate);
  const auto oracle =
      evolve_lindblad(FullDM::pure(psi0), *spec.phase_lock_rate, oracle_gamma, spec.snapshot_times, ens.dt, observables);
  std::vector<std::string> names;
  for (const auto& o : observables) names.push_back(o.name);
  const auto report = compare_with_ensemble(oracle, ens, names, spec.z_threshold, true);

  io::CsvTable oracle_table({"t", "trajectory_id", "observable_name", "value_re", "value_im"});
  for (std::size_t k = 0; k < oracle.times.size(); ++k)
    for (std::size_t o = 0; o < names.size(); ++o) {
      oracle_table.row() << oracle.times[k] << -1 << names[o] << oracle.values[k][o].real()
                         << oracle.values[k][o].imag();
      oracle_table.end_row();
    }
  io::CsvTable comparison({"t", "observable_name", "part", "oracle", "mean", "stderr", "z"});
  for (const auto& e : report.entries) {
    comparison.row() << e.time << e.observable << (e.imaginary ? "im" : "re") << e.oracle << e.mean << e.stderr << e.z;
    comparison.end_row();
  }
  io::write_file(detail::out_path(spec, "observables.csv"), detail::observable_table(ens).text());
  io::write_file(detail::out_path(spec, "oracle.csv"), oracle_table.text());
  io::write_file(detail::out_path(spec, "comparison.csv"), comparison.text());

  RunOutcome out;
  out.exit_code = report.passed ? exit_code::kSuccess : exit_code::kComparisonFailed;
  out.manifest["dt"] = ens.dt;
  out.manifest["oracle_Gamma"] = oracle_gamma;
  out.manifest["max_abs_z"] = report.max_abs_z;
  out.manifest["passed"] = report.passed;
  out.manifest["files"] = {"observables.csv", "oracle.csv", "comparison.csv"};
  return out;
}

inline RunOutcome cmd_ancilla(const ExperimentSpec& spec) {
  CircuitConfig cfg;
  cfg.g_eff = spec.g_eff;
  cfg.h_eff = spec.h_eff;
  cfg.kappa = *spec.kappa;
  cfg.dt = spec.dt.value_or(0.0);
  cfg.t_max = spec.t_max.value_or(0.0);
  cfg.seed = spec.seed;
  RunOutcome out;

  if (spec.circuit == "rate-check") {
    const auto points = born_markov_rate_check(cfg, spec.kappa_grid, *spec.trajectories, spec.workers);
    io::CsvTable table({"kappa", "kappa_over_g", "predicted", "fitted", "relative_error", "clicks", "sufficient"});
    for (const auto& p : points) {
      table.row() << p.kappa << p.kappa_over_g << p.predicted << p.fitted << p.relative_error << p.clicks
                  << p.sufficient;
      table.end_row();
    }
    io::write_file(detail::out_path(spec, "rates.csv"), table.text());
    const auto& last = points.back();
    out.manifest["largest_kappa_relative_error"] = last.relative_error;
    out.manifest["passed"] = last.sufficient && last.relative_error < 0.15;
    out.manifest["files"] = {"rates.csv"};
    if (!out.manifest["passed"].get<bool>()) out.exit_code = exit_code::kComparisonFailed;
    return out;
  }

  cfg.validate();
  std::vector<CircuitTrajectory> runs;
  if (spec.circuit == "dephasing") {
    Eigen::VectorXcd cavity0 = Eigen::VectorXcd::Zero(spec.cavity[1] + 1);
    cavity0[spec.cavity[0]] = 1.0;
    cavity0[spec.cavity[1]] = 1.0;
    cavity0.normalize();
    runs = run_circuit_ensemble(*spec.trajectories, spec.seed, spec.workers,
                                [&](std::uint64_t s) { return run_dephasing_circuit(cfg, cavity0, s); });
  } else {
    runs = run_circuit_ensemble(*spec.trajectories, spec.seed, spec.workers, [&](std::uint64_t s) {
      return run_phaselock_circuit(cfg, spec.cavity, *spec.max_occupation, s);
    });
  }

  io::CsvTable clicks({"trajectory_id", "t", "channel"});
  Json outcomes = Json::array();
  double max_ancilla = 0.0;
  std::size_t upward = 0, total_clicks = 0;
  std::map<int, std::pair<std::size_t, std::size_t>> by_level;  // level -> (trajectories, clicks)
  std::vector<double> first_clicks;
  for (std::size_t m = 0; m < runs.size(); ++m) {
    const auto& r = runs[m];
    for (const auto& c : r.clicks) {
      clicks.row() << m << c.time << c.channel;
      clicks.end_row();
      if (c.entropy_after > c.entropy_before) ++upward;
    }
    total_clicks += r.clicks.size();
    max_ancilla = std::max(max_ancilla, r.max_ancilla_population);
    Json o;
    o["trajectory_id"] = m;
    o["clicks"] = r.clicks.size();
    o["final_entropy"] = r.final_entropy;
    o["t_reached"] = r.t_reached;
    if (spec.circuit == "dephasing") {
      o["collapsed"] = r.collapsed_level.has_value();
      o["state"] = r.collapsed_level ? Json("|" + std::to_string(*r.collapsed_level) + ">") : Json(nullptr);
      if (r.collapsed_level) {
        auto& slot = by_level[*r.collapsed_level];
        ++slot.first;
        slot.second += r.clicks.size();
      }
    } else {
      o["first_click"] = r.clicks.empty() ? Json(nullptr) : Json(r.clicks.front().time);
      if (!r.clicks.empty()) first_clicks.push_back(r.clicks.front().time);
    }
    outcomes.push_back(o);
  }
  io::write_file(detail::out_path(spec, "clicks.csv"), clicks.text());
  detail::write_json(detail::out_path(spec, "outcomes.json"), outcomes);

  out.manifest["max_ancilla_population"] = max_ancilla;
  out.manifest["born_markov_regime"] = cfg.born_markov_regime();
  if (spec.circuit == "dephasing") {
    Json levels = Json::array();
    for (const auto& [level, counts] : by_level)
      levels.push_back({{"state", "|" + std::to_string(level) + ">"},
                        {"probability", static_cast<double>(counts.first) / static_cast<double>(runs.size())},
                        {"mean_clicks", static_cast<double>(counts.second) / static_cast<double>(counts.first)}});
    out.manifest["collapse"] = levels;
    out.manifest["predicted_dephase_rate"] = cfg.predicted_rate();
  } else {
    const auto pair = build_basis(2, spec.cavity[0] + spec.cavity[1], *spec.max_occupation);
    const auto d = jump_operator(pair, Channel::PhaseLock, 0);
    const double dd = expectation(d.adjoint() * d, StateVector::fock(pair, spec.cavity)).real();
    const auto fit = fit_first_click(first_clicks, runs.size() - first_clicks.size(), cfg.horizon());
    out.manifest["predicted_first_click_rate"] = cfg.predicted_rate() * dd;
    out.manifest["fitted_first_click_rate"] = fit.hazard;
    out.manifest["dark_fraction"] = fit.dark_fraction;
    out.manifest["upward_entropy_fraction"] =
        total_clicks ? static_cast<double>(upward) / static_cast<double>(total_clicks) : 0.0;
  }
  out.manifest["files"] = {"clicks.csv", "outcomes.json"};
  return out;
}

/// Re-fits every (gamma, L, t, kind, alpha) group of a profile CSV.
inline RunOutcome cmd_fit(const ExperimentSpec& spec) {
  const auto data = io::read_csv(spec.profile);
  const std::size_t cg = data.column("gamma"), cL = data.column("L"), ct = data.column("t"), cl = data.column("l"),
                    ck = data.column("kind"), ca = data.column("alpha"), cm = data.column("mean"),
                    cs = data.column("stderr");
  using Key = std::tuple<std::string, std::string, std::string, std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, std::vector<const std::vector<std::string>*>> groups;
  for (const auto& row : data.rows) {
    Key key{row[cg], row[cL], row[ct], row[ck], row[ca]};
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&row);
  }
  Json fits = Json::array();
  for (const auto& key : order) {
    const auto& rows = groups[key];
    EntropyProfile p;
    p.gamma = io::parse_double(std::get<0>(key));
    p.sites = static_cast<int>(io::parse_double(std::get<1>(key)));
    p.time = io::parse_double(std::get<2>(key));
    const double alpha = io::parse_double(std::get<4>(key));
    p.kind = alpha == 1.0 ? EntropyKind::von_neumann() : EntropyKind::renyi(alpha);
    detail::require(p.sites >= 2, "fit: L must be at least 2");
    p.mean.assign(static_cast<std::size_t>(p.sites - 1), std::nan(""));
    p.stderr.assign(static_cast<std::size_t>(p.sites - 1), 0.0);
    for (const auto* row : rows) {
      const int l = static_cast<int>(io::parse_double((*row)[cl]));
      detail::require(l >= 1 && l < p.sites, "fit: l outside [1, L-1]");
      p.mean[static_cast<std::size_t>(l - 1)] = io::parse_double((*row)[cm]);
      p.stderr[static_cast<std::size_t>(l - 1)] = io::parse_double((*row)[cs]);
    }
    const auto fit = detail::fit_with_spec(spec, p);
    for (int l = fit.l_min; l <= fit.l_max; ++l)
      detail::require(!std::isnan(p.at(l)), "fit: profile misses l = " + std::to_string(l));
    fits.push_back(detail::fit_record(p, fit));
  }
  detail::write_json(detail::out_path(spec, "fits.json"), fits);
  RunOutcome out;
  out.manifest["groups"] = order.size();
  out.manifest["files"] = {"fits.json"};
  return out;
}

/// Validates, writes the manifest, runs the command and rewrites the
/// manifest with results. Validation errors propagate before anything is
/// written; numeric guard failures are recorded in the manifest and
/// rethrown.
inline RunOutcome run_experiment(const ExperimentSpec& raw) {
  const ExperimentSpec spec = resolve_spec(raw);
  std::filesystem::create_directories(spec.output);
  Json manifest = detail::base_manifest(spec);
  manifest["status"] = "running";
  detail::write_json(detail::out_path(spec, "manifest.json"), manifest);

  RunOutcome out;
  try {
    if (spec.command == "trajectories") out = cmd_trajectories(spec);
    else if (spec.command == "entropy-scan") out = cmd_entropy_scan(spec);
    else if (spec.command == "gutzwiller") out = cmd_gutzwiller(spec);
    else if (spec.command == "lindblad-check") out = cmd_lindblad_check(spec);
    else if (spec.command == "ancilla") out = cmd_ancilla(spec);
    else out = cmd_fit(spec);
  } catch (const std::exception& e) {
    manifest["status"] = "failed";
    manifest["error"] = e.what();
    detail::write_json(detail::out_path(spec, "manifest.json"), manifest);
    throw;
  }
  manifest["status"] = out.exit_code == exit_code::kSuccess ? "complete" : "comparison_failed";
  manifest["results"] = out.manifest;
  detail::write_json(detail::out_path(spec, "manifest.json"), manifest);
  out.manifest = manifest;
  return out;
}

}  // namespace mchain
