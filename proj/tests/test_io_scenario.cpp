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

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <doctest.h>

#include "insitu/io.hpp"
#include "insitu/scenario.hpp"

using namespace insitu;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = INSITU_TEST_SCENARIO_DIR;

fs::path scratch(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  fs::path p = fs::temp_directory_path() / ("insitu-test-" + tag + "-" + std::to_string(rng()));
  fs::create_directories(p);
  return p;
}

const char* kMinimal = R"(name: tiny
model:
  kind: qubits
  qubits: 1
  controls:
    - {name: u, hamiltonian: s1z}
  initial_state:
    - {p0: 0.5, phase: 90 deg}
signals:
  u: {shape: sinusoid, amplitude: 1 rad/ns, frequency: 1 rad/ns}
observables: [s1x]
horizon: 2 ns
integrator: {dt: 0.01 ns, sample_every: 1}
)";

std::string replace(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, from.size(), to);
}

template <class Fn>
std::string scenario_error(Fn&& fn, std::string* field = nullptr) {
  try {
    fn();
  } catch (const ScenarioError& e) {
    if (field) *field = e.field();
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("record csv round trip") {
  MeasurementRecord r;
  r.t0 = 0.0;
  r.dt = 0.1;
  r.values.resize(4, 2);
  r.values << 0.1, -0.25, 1.0 / 3.0, 0.5, -1.0, 2e-7, 0.999999999999, 0.0;
  const std::string csv = io::record_csv(r);
  CHECK(csv.rfind("t,y1,y2\n", 0) == 0);
  const MeasurementRecord back = io::parse_record_csv(csv);
  CHECK(back.samples() == 4);
  CHECK(back.dt == doctest::Approx(0.1));
  CHECK((back.values - r.values).cwiseAbs().maxCoeff() < 1e-11);
  CHECK_THROWS(io::parse_record_csv("time,a\n0,1\n"));
  CHECK_THROWS(io::parse_record_csv("t,y1\n0,1\n0.1,abc\n"));
}

TEST_CASE("artifact formats") {
  InversionReport rep;
  rep.reconstructed.dt = 0.5;
  rep.reconstructed.values = Eigen::MatrixXd::Constant(3, 2, 0.25);
  rep.smin = {0.1, 1e-5, 0.2};
  rep.smax = {1.0, 1.0, 1.0};
  rep.flagged = {false, true, false};
  rep.singular_windows = {{0.5, 0.5}};
  rep.reference_scale = 2.0;
  const std::string csv = io::report_csv(rep);
  CHECK(csv.rfind("t,u1_hat,u2_hat,smin,smax,flag\n", 0) == 0);
  CHECK(csv.find("\n0.5,0.25,0.25,1e-05,1,1\n") != std::string::npos);
  const auto w = io::windows_json(rep, 1e-3);
  CHECK(w.dump().find("0.5") != std::string::npos);
  CHECK(io::cost_history_csv({3.0, 2.0}) == "iter,cost\n0,3\n1,2\n");
  CHECK(io::format_number(0.1 + 0.2) == "0.3");
}

TEST_CASE("sha256") {
  CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const fs::path dir = scratch("sha");
  const std::string hash = io::write_file(dir / "x.txt", "abc");
  CHECK(hash == io::sha256_hex("abc"));
  CHECK(io::read_file(dir / "x.txt") == "abc");
  fs::remove_all(dir);
}

TEST_CASE("scenario parsing") {
  const Scenario sc = parse_scenario(kMinimal, "tiny.yaml");
  CHECK(sc.name == "tiny");
  CHECK(sc.horizon == doctest::Approx(2.0));
  CHECK(sc.base.inputs() == 1);
  CHECK(sc.observable_sets.front().observables == std::vector<std::string>{"s1x"});
  CHECK(sc.outputs.contains(Output::Verdict));

  const Scenario mhz = parse_scenario(replace(kMinimal, "amplitude: 1 rad/ns", "amplitude: 10 MHz"));
  CHECK(std::get<Sinusoid>(mhz.truth[0].shape()).amplitude == doctest::Approx(mhz_to_rad_per_ns(10.0)));
  const Scenario us = parse_scenario(replace(kMinimal, "horizon: 2 ns", "horizon: 0.002 us"));
  CHECK(us.horizon == doctest::Approx(2.0));
}

TEST_CASE("scenario validation errors") {
  std::string field;
  std::string msg = scenario_error([] { parse_scenario(replace(kMinimal, "observables: [s1x]\n", ""), "tiny.yaml"); }, &field);
  CHECK(field == "observables");
  CHECK(msg.find("tiny.yaml:") == 0);
  CHECK(msg.find("missing") != std::string::npos);

  msg = scenario_error([] { parse_scenario(replace(kMinimal, "horizon: 2 ns", "horizon: 2"), "x"); }, &field);
  CHECK(field == "horizon");
  CHECK(msg.find("unit") != std::string::npos);

  msg = scenario_error([] { parse_scenario(replace(kMinimal, "horizon: 2 ns", "horizon: 2 MHz"), "x"); }, &field);
  CHECK(field == "horizon");

  msg = scenario_error([] { parse_scenario(replace(kMinimal, "horizon: 2 ns", "horizon: 2.005 ns"), "x"); }, &field);
  CHECK(msg.find("multiple") != std::string::npos);

  msg = scenario_error([] { parse_scenario(std::string(kMinimal) + "colour: blue\n", "x"); }, &field);
  CHECK(field == "colour");
  CHECK(msg.find("unknown field") != std::string::npos);

  msg = scenario_error([] { parse_scenario(replace(kMinimal, "[s1x]", "[s9q]"), "x"); }, &field);
  CHECK(field.find("observables") == 0);

  msg = scenario_error([] { parse_scenario(std::string(kMinimal) + "outputs: [lsq_result]\n", "x"); }, &field);
  CHECK(field == "outputs");

  const std::string under = R"(name: under
model: {kind: two_qubit, w1: unknown, w2: unknown, g: unknown, initial_state: reference}
signals:
  w1: {shape: constant, value: 1 MHz}
  w2: {shape: constant, value: 1 MHz}
  g: {shape: constant, value: 1 MHz}
observables: [s1x, s1y]
horizon: 10 ns
)";
  msg = scenario_error([&] { parse_scenario(under, "under.yaml"); }, &field);
  CHECK(field == "observables");
  CHECK(msg.find("under-instrumented") != std::string::npos);
  CHECK(msg.find("rank") != std::string::npos);

  // Line numbers point into the file.
  std::string bad_line;
  scenario_error([&] { parse_scenario(replace(kMinimal, "sample_every: 1", "sample_every: 0"), "x"); });
  bad_line = scenario_error([] { parse_scenario(replace(kMinimal, "phase: 90 deg", "phase: 90 furlongs"), "x"); });
  CHECK(bad_line.find("x:8:") == 0);
}

TEST_CASE("bundled scenarios") {
  const auto files = list_scenarios(kScenarios);
  CHECK(files.size() >= 5);
  std::vector<std::string> names;
  for (const auto& f : files) {
    const Scenario sc = load_scenario(f);
    names.push_back(sc.name);
    CHECK(sc.name == f.stem().string());
  }
  for (const char* required : {"ramsey_ambiguity", "two_qubit_single_g", "two_qubit_redundant", "mimo_three_signals", "noise_study"}) {
    CHECK(std::find(names.begin(), names.end(), required) != names.end());
  }
  CHECK(list_scenarios(kScenarios / "does-not-exist").empty());
}

TEST_CASE("round trip on every bundled invertible scenario") {
  for (const auto& f : list_scenarios(kScenarios)) {
    const Scenario sc = load_scenario(f);
    for (const auto& set : sc.observable_sets) {
      CAPTURE(sc.name);
      CAPTURE(set.name);
      const ProbeModel m = sc.model_for(set);
      const auto v = transform_observables(m);
      if (!v.invertible) continue;
      const auto sim = simulate(m, sc.truth, sc.horizon, sc.integrator);
      const auto rep = invert(m, v, sim.record, sc.inversion);
      std::vector<bool> mask = valid_mask(rep.flagged, sc.dilation);
      // With as many observables as signals in the MIMO case the estimate is only local.
      if (m.inputs() > 1 && m.outputs() == m.inputs()) {
        bool before = true;
        for (std::size_t k = 0; k < mask.size(); ++k) {
          before = before && mask[k];
          mask[k] = before;
        }
      }
      CHECK(relative_l2_error(rep.reconstructed, sc.truth, mask).back() <= 1e-3);
    }
  }
}

TEST_CASE("runs are reproducible and serial equals parallel") {
  const Scenario sc = load_scenario(kScenarios / "noise_study.yaml");
  const fs::path a = scratch("a");
  const fs::path b = scratch("b");
  const RunResult ra = run_scenario(sc, a, {std::nullopt, Execution::Parallel});
  const RunResult rb = run_scenario(sc, b, {std::nullopt, Execution::Serial});
  REQUIRE(ra.artifacts == rb.artifacts);
  for (const auto& file : ra.artifacts) {
    CAPTURE(file);
    CHECK(io::read_file(ra.directory / file) == io::read_file(rb.directory / file));
  }

  const auto manifest = nlohmann::json::parse(io::read_file(ra.directory / "manifest.json"));
  std::size_t listed = 0;
  for (const auto& entry : fs::directory_iterator(ra.directory)) {
    const std::string name = entry.path().filename().string();
    if (name == "manifest.json") continue;
    bool found = false;
    for (const auto& art : manifest.at("artifacts")) {
      if (art.at("file") == name) {
        found = true;
        CHECK(art.at("sha256") == io::sha256_hex(io::read_file(entry.path())));
      }
    }
    CHECK(found);
    ++listed;
  }
  CHECK(listed == manifest.at("artifacts").size());
  CHECK(manifest.at("config_sha256") == io::sha256_hex(sc.text));

  const RunResult other = run_scenario(sc, b, {std::uint64_t{99}, Execution::Parallel});
  CHECK(io::read_file(other.directory / "noise_measurement_high.csv") !=
        io::read_file(ra.directory / "noise_measurement_high.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("ramsey output shows identical mirror records") {
  const Scenario sc = load_scenario(kScenarios / "ramsey_ambiguity.yaml");
  const fs::path dir = scratch("ramsey");
  const RunResult r = run_scenario(sc, dir);
  CHECK(r.summary.at("ramsey").at("max_record_difference").get<double>() <= 1e-9);
  CHECK(r.summary.at("ramsey").at("max_branch_separation").get<double>() > 1.0);
  CHECK(r.summary.at("sets").at("primary").at("rel_error_outside_windows").at("pooled").get<double>() <= 1e-3);
  const std::string csv = io::read_file(r.directory / "ramsey_branches.csv");
  CHECK(csv.rfind("t,y,y_mirror,u_minus_branch,u_plus_branch,u_true,branch_point\n", 0) == 0);
  fs::remove_all(dir);
}
