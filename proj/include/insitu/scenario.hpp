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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "insitu/baseline_lsq.hpp"
#include "insitu/inversion.hpp"
#include "insitu/parallel.hpp"

namespace insitu {

/// Static problem in a scenario file. what() is "<file>:<line>: <field>: <message>".
class ScenarioError : public std::invalid_argument {
 public:
  ScenarioError(std::string file, int line, std::string field, const std::string& message);
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

/// Failure while executing a validated scenario; carries the pipeline stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

enum class Output { Verdict, ForwardRecord, InversionReport, RamseyBranches, LsqResult };

struct ObservableSet {
  std::string name;
  std::vector<std::string> observables;  // Pauli-product names, e.g. "s1y", "s1z*s2z"
};

struct NoiseCase {
  std::string name;
  NoiseSpec spec;  // spec.seed is derived per repetition at run time
  int seeds = 1;
};

struct LsqGuess {
  std::string name;
  std::vector<SignalSpec> initial_guess;
};

struct Scenario {
  std::string name;
  std::string description;
  std::string source;  // file path, for diagnostics
  std::string text;    // file bytes, hashed into the manifest

  int qubits = 1;
  /// Drift, controls and initial state; observables are filled per set.
  ProbeModel base;
  std::vector<SignalSpec> truth;  // one per control
  std::vector<ObservableSet> observable_sets;  // [0] is the primary set
  double horizon = 0.0;
  IntegratorConfig integrator;
  InversionConfig inversion;
  int dilation = 5;
  std::vector<NoiseCase> noise;
  std::optional<LsqConfig> lsq;
  std::vector<LsqGuess> lsq_guesses;
  std::set<Output> outputs;
  std::uint64_t seed = 0;

  ProbeModel model_for(const ObservableSet& set) const;
};

Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>");
/// Parses and fully validates, including the invertibility rank requirement.
Scenario load_scenario(const std::filesystem::path& path);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  Execution execution = Execution::Parallel;
};

struct RunResult {
  std::filesystem::path directory;
  nlohmann::json summary;
  std::vector<std::string> artifacts;
};

/// Runs verdict -> forward -> noise -> invert / baseline and writes artifacts plus
/// manifest.json into out_root / scenario.name. Throws StageError.
RunResult run_scenario(const Scenario& scenario, const std::filesystem::path& out_root,
                       const RunOptions& options = {});

/// Scenario files (*.yaml) in dir, sorted by name.
std::vector<std::filesystem::path> list_scenarios(const std::filesystem::path& dir);

/// Median of per-seed relative errors for one noise case (helper shared with tests).
double median(std::vector<double> values);

}  // namespace insitu
