// Copyright 2026 The virtdyn Authors
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

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "virtdyn/virtdyn.hpp"

namespace {

namespace ex = virtdyn::experiments;

constexpr int kExitOk = 0;
constexpr int kExitBadInput = 1;
constexpr int kExitRuntime = 2;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::vector<double> gammas;
  std::vector<double> alphas;
  std::optional<std::string> out;
  std::optional<unsigned> threads;
  std::optional<std::string> chain;
  std::optional<std::string> singular_set;
  std::optional<std::string> median;
  std::optional<double> damping_ratio;
  bool reset_rest = false;
};

ex::ExperimentConfig resolve(const std::string& experiment, const Overrides& o) {
  ex::ExperimentConfig cfg;
  if (!o.config.empty()) {
    std::ifstream f(o.config);
    if (!f) throw virtdyn::InvalidArgument("cannot open config " + o.config);
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw virtdyn::InvalidArgument("config " + o.config + ": " + e.what());
    }
    cfg = ex::config_from_json(j);
  }
  cfg.experiment = ex::experiment_from_string(experiment);
  if (o.seed) cfg.seed = *o.seed;
  if (o.samples) cfg.samples = *o.samples;
  if (!o.gammas.empty()) cfg.gammas = o.gammas;
  if (!o.alphas.empty()) cfg.alphas = o.alphas;
  if (o.out) cfg.out = *o.out;
  if (o.threads) cfg.threads = *o.threads;
  if (o.chain) cfg.chain = *o.chain;
  if (o.singular_set) cfg.singular_set = *o.singular_set;
  if (o.median) {
    cfg = ex::config_from_json({{"median", *o.median}}, cfg);
  }
  if (o.damping_ratio) cfg.closed_loop.damping_ratio = *o.damping_ratio;
  if (o.reset_rest) cfg.closed_loop.reset_rest = true;
  if (cfg.experiment == ex::Experiment::kClosedLoop && !o.gammas.empty()) {
    cfg.closed_loop.gamma = o.gammas.front();
  }
  return cfg;
}

void add_run_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "experiment config JSON")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--samples", o.samples, "sample count (configurations, calls or targets)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--gamma", o.gammas, "FD gamma values")->expected(1, -1);
  cmd->add_option("--alpha", o.alphas, "DLS alpha values")->expected(1, -1);
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--threads", o.threads, "worker threads (0: hardware concurrency)");
  cmd->add_option("--chain", o.chain, "'ur10' or a chain JSON file");
  cmd->add_option("--singular-set", o.singular_set, "reuse a saved singular set (global-singular)");
  cmd->add_option("--median", o.median, "conditioning median: filtered or plain")
      ->check(CLI::IsMember({"filtered", "plain"}));
  cmd->add_option("--damping-ratio", o.damping_ratio, "closed-loop Cartesian damping ratio");
  cmd->add_flag("--reset-rest", o.reset_rest, "closed loop: zero joint velocity every cycle");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtual-dynamics mapping experiments"};
  app.set_version_flag("--version", std::string(virtdyn::kVersion));
  app.require_subcommand(1);

  Overrides overrides;
  std::string chosen;
  for (const char* name :
       {"decoupling", "conditioning", "singular-pass", "global-singular", "timing", "closed-loop"}) {
    auto* cmd = app.add_subcommand(name, std::string("run the ") + name + " experiment");
    add_run_options(cmd, overrides);
    cmd->callback([&chosen, name] { chosen = name; });
  }

  std::string export_path;
  auto* export_cmd = app.add_subcommand("export-chain", "write the UR10 chain as JSON");
  export_cmd->add_option("path", export_path, "output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadInput;
  }

  try {
    if (export_cmd->parsed()) {
      virtdyn::save_chain(virtdyn::ur10_chain(), export_path);
      std::cout << export_path << '\n';
      return kExitOk;
    }
    const ex::ExperimentConfig cfg = resolve(chosen, overrides);
    const ex::RunOutput out = ex::run_experiment(cfg);
    for (const auto& f : out.files) std::cout << f.string() << '\n';
    if (out.metadata.contains("warnings")) {
      for (const auto& w : out.metadata["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
    }
    if (out.exit_code != 0) {
      std::cerr << "error: closed loop diverged for at least one target\n";
    }
    return out.exit_code;
  } catch (const virtdyn::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const virtdyn::Divergence& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const virtdyn::Infeasible& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  }
}
