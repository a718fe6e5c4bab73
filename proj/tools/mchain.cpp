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

// Command-line front end: mchain <command> [--config spec.json] [flags].
// Flags override fields of the config file; see README.md for the keys.

#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mchain/experiment.hpp"

namespace {

enum class Kind { Int, UInt, Double, String, IntList, DoubleList };

struct Flag {
  std::string name;  // CLI spelling
  std::string key;   // spec JSON key
  Kind kind;
  std::string help;
};

const std::vector<Flag>& all_flags() {
  static const std::vector<Flag> flags{
      {"--output,-o", "output", Kind::String, "output directory (default $MCHAIN_OUTPUT_ROOT/<command>)"},
      {"--seed", "seed", Kind::UInt, "master seed"},
      {"--workers,-j", "workers", Kind::UInt, "worker threads (results do not depend on it)"},
      {"-L", "L", Kind::Int, "number of sites"},
      {"-N", "N", Kind::Int, "number of particles (default L)"},
      {"--n-max", "n_max", Kind::Int, "local occupation cutoff"},
      {"--gamma", "gamma", Kind::Double, "reduced dephasing rate Gamma/Lambda, with Lambda = 1"},
      {"--Lambda", "Lambda", Kind::Double, "phase-locking rate"},
      {"--Gamma", "Gamma", Kind::Double, "dephasing rate"},
      {"--initial", "initial", Kind::String, "initial state: fock or dark"},
      {"--occupations", "occupations", Kind::IntList, "Fock pattern, comma separated"},
      {"--dt", "dt", Kind::Double, "time step"},
      {"--t-max", "t_max", Kind::Double, "final time"},
      {"-M", "M", Kind::UInt, "number of trajectories"},
      {"--snapshot-times", "snapshot_times", Kind::DoubleList, "snapshot times, comma separated"},
      {"--renyi-alphas", "renyi_alphas", Kind::DoubleList, "Renyi orders besides von Neumann"},
      {"--fit-window", "fit_window", Kind::IntList, "l_min,l_max"},
      {"--weighting", "weighting", Kind::String, "weighted or unweighted"},
      {"--gamma-grid", "gamma_grid", Kind::DoubleList, "sorted gamma values"},
      {"--filling", "filling", Kind::Double, "mean particles per site"},
      {"--tolerance", "tolerance", Kind::Double, "steady-state tolerance on |alpha|"},
      {"--threshold", "threshold", Kind::Double, "|alpha| below which the order counts as gone"},
      {"--bisection-tolerance", "bisection_tolerance", Kind::Double, "resolution of the gamma_c bisection"},
      {"--oracle-Gamma", "oracle_Gamma", Kind::Double, "dephasing rate used by the oracle (negative control)"},
      {"--z-threshold", "z_threshold", Kind::Double, "largest accepted |z|"},
      {"--circuit", "circuit", Kind::String, "dephasing, phaselock or rate-check"},
      {"--g-eff", "g_eff", Kind::Double, "ancilla coupling"},
      {"--h-eff", "h_eff", Kind::Double, "Stark term of the phase-lock scheme"},
      {"--kappa", "kappa", Kind::Double, "ancilla decay rate"},
      {"--kappa-grid", "kappa_grid", Kind::DoubleList, "kappa/g values for rate-check"},
      {"--cavity", "cavity", Kind::IntList, "cavity levels n1,n2 or occupations"},
      {"--profile", "profile", Kind::String, "profile CSV to re-fit"},
  };
  return flags;
}

const std::map<std::string, std::vector<std::string>>& command_keys() {
  static const std::vector<std::string> common{"output", "seed", "workers"};
  static const std::vector<std::string> chain{"L", "N", "n_max", "gamma", "Lambda", "Gamma", "initial",
                                              "occupations", "dt", "t_max", "M", "snapshot_times"};
  static const std::vector<std::string> analysis{"renyi_alphas", "fit_window", "weighting"};
  auto join = [](std::initializer_list<std::vector<std::string>> parts) {
    std::vector<std::string> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  };
  static const std::map<std::string, std::vector<std::string>> keys{
      {"trajectories", join({common, chain, analysis})},
      {"entropy-scan", join({common, chain, analysis, {"gamma_grid"}})},
      {"gutzwiller", join({common, {"n_max", "dt", "t_max", "gamma_grid", "filling", "tolerance", "threshold",
                                    "bisection_tolerance"}})},
      {"lindblad-check", join({common, chain, {"oracle_Gamma", "z_threshold"}})},
      {"ancilla", join({common, {"circuit", "g_eff", "h_eff", "kappa", "kappa_grid", "cavity", "n_max", "dt",
                                 "t_max", "M"}})},
      {"fit", join({common, analysis, {"profile"}})},
  };
  return keys;
}

const char* command_help(const std::string& name) {
  if (name == "trajectories") return "run a monitored-trajectory ensemble and record observables and entropies";
  if (name == "entropy-scan") return "steady-state entropy profiles and central-charge fits over a gamma grid";
  if (name == "gutzwiller") return "single-site mean-field order parameter sweep";
  if (name == "lindblad-check") return "compare ensemble means with the exact master equation";
  if (name == "ancilla") return "cavity + ancilla circuit trajectories";
  return "re-fit an existing profile CSV";
}

mchain::Json parse_value(const Flag& flag, const std::vector<std::string>& raw) {
  using mchain::io::parse_double;
  try {
    switch (flag.kind) {
      case Kind::Int:
        return static_cast<int>(std::stoll(raw.front()));
      case Kind::UInt:
        if (!raw.front().empty() && raw.front()[0] == '-') throw std::invalid_argument("negative");
        return static_cast<std::uint64_t>(std::stoull(raw.front()));
      case Kind::Double:
        return parse_double(raw.front());
      case Kind::String:
        return raw.front();
      case Kind::IntList: {
        mchain::Json out = mchain::Json::array();
        for (const auto& r : raw) out.push_back(static_cast<int>(std::stoll(r)));
        return out;
      }
      case Kind::DoubleList: {
        mchain::Json out = mchain::Json::array();
        for (const auto& r : raw) out.push_back(parse_double(r));
        return out;
      }
    }
  } catch (const std::exception&) {
  }
  throw mchain::ValidationError("bad value for " + flag.name);
}

mchain::Json read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mchain::ValidationError("cannot open config " + path);
  try {
    return mchain::Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw mchain::ValidationError("config " + path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monitored bosonic chain simulator"};
  app.set_version_flag("--version", std::string(mchain::kVersion));
  app.require_subcommand(1);

  struct Parsed {
    std::string config;
    std::map<std::string, std::vector<std::string>> values;
  };
  std::map<std::string, Parsed> parsed;
  std::map<std::string, CLI::App*> subs;
  for (const auto& name : mchain::experiment_commands()) {
    CLI::App* sub = app.add_subcommand(name, command_help(name));
    subs[name] = sub;
    Parsed& p = parsed[name];
    sub->add_option("--config,-c", p.config, "JSON spec; flags override its fields");
    for (const auto& key : command_keys().at(name)) {
      const auto it = std::find_if(all_flags().begin(), all_flags().end(), [&](const Flag& f) { return f.key == key; });
      auto* opt = sub->add_option(it->name, p.values[key], it->help);
      if (it->kind == Kind::IntList || it->kind == Kind::DoubleList) {
        opt->delimiter(',');
      } else {
        opt->expected(1);
      }
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mchain::exit_code::kValidation;
  }

  std::string command;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) command = name;

  try {
    const Parsed& p = parsed.at(command);
    mchain::Json spec_json = p.config.empty() ? mchain::Json::object() : read_config(p.config);
    if (spec_json.is_object() && spec_json.contains("command") && spec_json["command"] != command)
      throw mchain::ValidationError("config is for command '" + spec_json["command"].get<std::string>() + "'");
    for (const auto& [key, raw] : p.values) {
      if (raw.empty()) continue;
      const auto it = std::find_if(all_flags().begin(), all_flags().end(), [&](const Flag& f) { return f.key == key; });
      spec_json[key] = parse_value(*it, raw);
    }
    spec_json["command"] = command;
    const auto outcome = mchain::run_experiment(mchain::spec_from_json(spec_json));
    std::cout << "output: " << outcome.manifest["spec"]["output"].get<std::string>() << "\n";
    std::cout << outcome.manifest["results"].dump(2) << "\n";
    return outcome.exit_code;
  } catch (const mchain::ValidationError& e) {
    std::cerr << "mchain: invalid spec: " << e.what() << "\n";
    return mchain::exit_code::kValidation;
  } catch (const mchain::NumericGuardError& e) {
    std::cerr << "mchain: numeric guard: " << e.what() << "\n";
    return mchain::exit_code::kNumericGuard;
  } catch (const std::exception& e) {
    std::cerr << "mchain: " << e.what() << "\n";
    return 1;
  }
}
