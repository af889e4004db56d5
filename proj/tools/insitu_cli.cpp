// Copyright 2026 The insitu Authors
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

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <vector>

#include "insitu/scenario.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kRuntime = 3;

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"insitu: reconstruct in situ signals from time-resolved qubit measurements"};
  app.require_subcommand(1);

  std::vector<std::string> run_files;
  std::string out_dir = env_or("INSITU_OUTPUT_ROOT", "insitu-out");
  std::uint64_t seed = 0;
  int jobs = 1;
  bool serial = false;
  auto* run = app.add_subcommand("run", "Run scenario files and write artifacts");
  run->add_option("files", run_files, "Scenario files")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output root (default: $INSITU_OUTPUT_ROOT or ./insitu-out)");
  auto* seed_opt = run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--jobs", jobs, "Scenario files run concurrently")->check(CLI::PositiveNumber);
  run->add_flag("--serial", serial, "Use the serial reference kernels");

  std::string validate_file;
  auto* validate = app.add_subcommand("validate", "Statically check a scenario file");
  validate->add_option("file", validate_file, "Scenario file")->required();

  std::string list_dir = env_or("INSITU_SCENARIO_DIR", INSITU_DEFAULT_SCENARIO_DIR);
  auto* list = app.add_subcommand("list", "List bundled scenarios");
  list->add_option("--dir", list_dir, "Scenario directory (default: $INSITU_SCENARIO_DIR or bundled)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  if (*validate) {
    try {
      const insitu::Scenario sc = insitu::load_scenario(validate_file);
      std::cout << validate_file << ": ok (" << sc.name << ", " << sc.base.inputs() << " unknown signals, "
                << sc.observable_sets.size() << " observable sets)\n";
      return kOk;
    } catch (const insitu::ScenarioError& e) {
      std::cerr << e.what() << "\n";
      return kValidation;
    }
  }

  if (*list) {
    const auto files = insitu::list_scenarios(list_dir);
    if (files.empty()) std::cerr << "no scenarios in " << list_dir << "\n";
    for (const auto& f : files) {
      try {
        const insitu::Scenario sc = insitu::load_scenario(f);
        std::cout << sc.name << "\t" << f.string() << "\t" << sc.description << "\n";
      } catch (const insitu::ScenarioError& e) {
        std::cout << f.stem().string() << "\t" << f.string() << "\tINVALID: " << e.what() << "\n";
      }
    }
    return kOk;
  }

  // run
  std::vector<insitu::Scenario> scenarios;
  for (const auto& f : run_files) {
    try {
      scenarios.push_back(insitu::load_scenario(f));
    } catch (const insitu::ScenarioError& e) {
      std::cerr << e.what() << "\n";
      return kValidation;
    }
  }
  insitu::RunOptions options;
  if (seed_opt->count() > 0) options.seed = seed;
  options.execution = serial ? insitu::Execution::Serial : insitu::Execution::Parallel;

  std::mutex io_guard;
  int status = kOk;
  auto run_one = [&](std::size_t i) {
    try {
      const insitu::RunResult r = insitu::run_scenario(scenarios[i], out_dir, options);
      const std::lock_guard<std::mutex> lock(io_guard);
      std::cout << scenarios[i].name << ": " << r.artifacts.size() << " artifacts in " << r.directory.string() << "\n";
    } catch (const std::exception& e) {
      const std::lock_guard<std::mutex> lock(io_guard);
      std::cerr << scenarios[i].name << ": " << e.what() << "\n";
      status = kRuntime;
    }
  };
  if (jobs > 1 && scenarios.size() > 1) {
    insitu::set_threads(jobs);
    insitu::for_each_index(scenarios.size(), insitu::Execution::Parallel, run_one);
    insitu::set_threads(0);
  } else {
    for (std::size_t i = 0; i < scenarios.size(); ++i) run_one(i);
  }
  return status;
}
