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

#include <array>
#include <cmath>
#include <numbers>

#include <doctest.h>

#include "insitu/inversion.hpp"
#include "oracles.hpp"

using namespace insitu;

namespace {

MeasurementRecord sampled(double dt, int n, double (*f)(double)) {
  MeasurementRecord r;
  r.dt = dt;
  r.values.resize(n, 1);
  for (int k = 0; k < n; ++k) r.values(k, 0) = f(k * dt);
  return r;
}

ProbeModel phase_qubit(const Ket& psi0) {
  ProbeModel m;
  m.controls = {GeneratorTerm::hamiltonian(pauli(Pauli::Z))};
  m.observables = {pauli(Pauli::X)};
  m.initial_state = DensityState::from_ket(psi0);
  m.control_names = {"u"};
  m.observable_names = {"sx"};
  return m;
}

ProbeModel two_qubit_g(std::initializer_list<const char*> names) {
  std::vector<OperatorMatrix> obs;
  std::vector<std::string> labels;
  for (const char* n : names) {
    obs.push_back(pauli_product(n, 2));
    labels.emplace_back(n);
  }
  return build_two_qubit_model(Coefficient::known(mhz_to_rad_per_ns(1)), Coefficient::known(mhz_to_rad_per_ns(1)),
                               Coefficient::identify(), obs, labels);
}

double window_measure(const InversionReport& r) {
  double total = 0.0;
  for (const auto& [a, b] : r.singular_windows) total += b - a + r.reconstructed.dt;
  return total;
}

double trace_distance(const OperatorMatrix& a, const OperatorMatrix& b) {
  Eigen::SelfAdjointEigenSolver<OperatorMatrix> es(a - b);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

}  // namespace

TEST_CASE("derivative estimates") {
  const auto affine = estimate_derivatives(sampled(0.1, 50, [](double t) { return t; }), 1, DerivativeScheme::three_point());
  CHECK((affine.derivatives[1].array() - 1.0).abs().maxCoeff() < 1e-12);

  const auto sine = estimate_derivatives(sampled(0.01, 1000, [](double t) { return std::sin(t); }), 1,
                                         DerivativeScheme::three_point());
  double worst = 0.0;
  for (int k = 1; k < 999; ++k) worst = std::max(worst, std::abs(sine.derivatives[1](k, 0) - std::cos(0.01 * k)));
  CHECK(worst <= 2e-5);

  const auto quad = estimate_derivatives(sampled(0.1, 40, [](double t) { return t * t; }), 2, DerivativeScheme::three_point());
  CHECK((quad.derivatives[2].array() - 2.0).abs().maxCoeff() < 1e-9);

  const auto sg = estimate_derivatives(sampled(0.05, 200, [](double t) { return std::sin(t); }), 2,
                                       DerivativeScheme::savitzky_golay(7, 4));
  double worst2 = 0.0;
  for (int k = 0; k < 200; ++k) worst2 = std::max(worst2, std::abs(sg.derivatives[2](k, 0) + std::sin(0.05 * k)));
  CHECK(worst2 < 1e-3);

  CHECK_THROWS(estimate_derivatives(sampled(0.1, 2, [](double t) { return t; }), 1, DerivativeScheme::three_point()));
  CHECK_THROWS(estimate_derivatives(sampled(0.1, 50, [](double t) { return t; }), 1, DerivativeScheme::savitzky_golay(6, 3)));
  CHECK(affine.at(1, 1.234)(0) == doctest::Approx(1.0));
}

TEST_CASE("readout examples") {
  const auto plus = phase_qubit(qubit_ket(0.5, 0.0));
  const auto v = transform_observables(plus);
  const InverseSystem at_plus(plus, v);
  CHECK(at_plus.coupling(plus.initial_state.matrix()).norm() < 1e-15);
  CHECK_THROWS_AS(at_plus.readout(plus.initial_state.matrix(), Eigen::VectorXd::Ones(1), 1e-3), SingularReadoutError);

  const auto iphase = phase_qubit(qubit_ket(0.5, std::numbers::pi / 2));
  const InverseSystem sys(iphase, transform_observables(iphase));
  const OperatorMatrix& rho = iphase.initial_state.matrix();
  CHECK(sys.coupling(rho)(0, 0) == doctest::Approx(-2.0));
  CHECK(std::abs(sys.drift_terms(rho)(0)) < 1e-15);
  CHECK(sys.reference_scale() == doctest::Approx(2.0));

  // Forward simulation with constant u gives ydot(0) = -2u.
  const std::vector<SignalSpec> in{ConstantSignal{0.3}};
  const auto sim = simulate(iphase, in, 1.0, IntegratorConfig{0.001, 1});
  const auto d = estimate_derivatives(sim.record, 1, DerivativeScheme::three_point());
  Eigen::VectorXd ydot(1);
  ydot << d.derivatives[1](1, 0);
  const Readout r = sys.readout(sim.trajectory[1], ydot, 1e-3);
  CHECK(r.u(0) == doctest::Approx(0.3).epsilon(1e-5));

  Eigen::MatrixXd square(2, 2);
  square << 2.0, 1.0, -1.0, 3.0;
  const Eigen::VectorXd rhs = Eigen::Vector2d(0.5, -2.0);
  const Readout solved = readout_inputs(square, rhs);
  CHECK((solved.u - square.fullPivLu().solve(rhs)).norm() < 1e-10);
  CHECK(solved.singular_values.size() == 2);
  CHECK(solved.singular_values(0) >= solved.singular_values(1));

  CHECK_THROWS_AS(readout_inputs(Eigen::MatrixXd::Zero(2, 2), rhs), SingularReadoutError);
  CHECK_THROWS_AS(readout_inputs(square, Eigen::VectorXd::Ones(3)), DimensionError);
}

TEST_CASE("degree-two round trip on the biased qubit") {
  ProbeModel m = phase_qubit(qubit_ket(0.5, 0.0));
  m.drift = {GeneratorTerm::hamiltonian(mhz_to_rad_per_ns(10.0) * pauli(Pauli::X))};
  m.observables = {pauli(Pauli::Z)};
  m.observable_names = {"sz"};
  const auto v = transform_observables(m);
  REQUIRE(v.relative_degree == 2);
  const std::vector<SignalSpec> truth{Sinusoid{0.05, 0.5, 0.0}};
  const auto sim = simulate(m, truth, 50.0, IntegratorConfig{0.1, 1});
  InversionConfig cfg;
  cfg.derivative_scheme = DerivativeScheme::savitzky_golay(7, 4);
  const auto rep = invert(m, v, sim.record, cfg);
  CHECK(rep.singular_windows.empty());
  CHECK(relative_l2_error(rep.reconstructed, truth, valid_mask(rep.flagged, 5)).back() <= 1e-3);
}

TEST_CASE("single-input two-qubit inversion") {
  const std::vector<SignalSpec> g{distorted_step_mhz(10.0, 0.0, 20.0)};
  InversionConfig cfg;
  cfg.singular_threshold = 1e-2;
  cfg.output_feedback = 0.1;

  const auto single = two_qubit_g({"s1y"});
  const auto sim1 = simulate(single, g, 150.0, IntegratorConfig{0.1, 1});
  const auto r1 = invert(single, transform_observables(single), sim1.record, cfg);
  CHECK(r1.singular_windows.size() >= 1);
  for (const auto& [a, b] : r1.singular_windows) {
    CHECK(a > 0.0);
    CHECK(b < 150.0);
  }
  CHECK(relative_l2_error(r1.reconstructed, g, valid_mask(r1.flagged, 5)).back() <= 1e-2);

  const auto redundant = two_qubit_g({"s1y", "s2x"});
  const auto sim2 = simulate(redundant, g, 150.0, IntegratorConfig{0.1, 1});
  const auto r2 = invert(redundant, transform_observables(redundant), sim2.record, cfg);
  CHECK(r2.singular_windows.empty());
  CHECK(relative_l2_error(r2.reconstructed, g, {}).back() <= 1e-3);
  CHECK(window_measure(r2) <= window_measure(r1));

  // Report bookkeeping.
  CHECK(r1.smin.size() == static_cast<std::size_t>(sim1.record.samples()));
  CHECK(r1.flagged.size() == r1.smin.size());
  CHECK(r1.state_path.size() == r1.smin.size());
  for (std::size_t k = 0; k < r1.smin.size(); ++k) {
    CHECK(r1.smin[k] <= r1.smax[k]);
    CHECK(r1.flagged[k] == (r1.smin[k] < cfg.singular_threshold * r1.reference_scale));
  }
}

TEST_CASE("inverse state path follows the forward trajectory") {
  const std::vector<SignalSpec> g{distorted_step_mhz(10.0, 0.0, 20.0)};
  const auto redundant = two_qubit_g({"s1y", "s2x"});
  const auto sim = simulate(redundant, g, 150.0, IntegratorConfig{0.05, 1});
  InversionConfig cfg;
  cfg.singular_threshold = 1e-2;
  cfg.output_feedback = 0.1;
  cfg.derivative_scheme = DerivativeScheme::savitzky_golay(7, 4);
  const auto rep = invert(redundant, transform_observables(redundant), sim.record, cfg);
  const auto mask = valid_mask(rep.flagged, 5);
  double worst = 0.0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k]) worst = std::max(worst, trace_distance(rep.state_path[k], sim.trajectory[k]));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("extra observables never enlarge the singular set") {
  const std::vector<SignalSpec> in{distorted_step_mhz(8, 0, 30), distorted_step_mhz(5, 10, 15), distorted_step_mhz(10, 0, 20)};
  const std::array<Ket, 2> qubits{qubit_ket(2.0 / 3.0, std::numbers::pi / 4), qubit_ket(0.75, std::numbers::pi / 3)};
  const DensityState psi0 = DensityState::from_ket(product_ket(qubits));
  InversionConfig cfg;
  cfg.singular_threshold = 1e-3;
  auto run = [&](std::initializer_list<const char*> names) {
    std::vector<OperatorMatrix> obs;
    for (const char* n : names) obs.push_back(pauli_product(n, 2));
    const auto m = build_two_qubit_model(Coefficient::identify(), Coefficient::identify(), Coefficient::identify(), obs, {}, psi0);
    const auto sim = simulate(m, in, 60.0, IntegratorConfig{0.1, 1});
    return invert(m, transform_observables(m), sim.record, cfg);
  };
  const auto three = run({"s1x", "s1y", "s2x"});
  const auto four = run({"s1x", "s1y", "s2x", "s2y"});
  const auto five = run({"s1x", "s1y", "s2x", "s2y", "s1z"});
  CHECK(three.singular_windows.size() >= 1);
  CHECK(window_measure(four) <= window_measure(three));
  CHECK(window_measure(five) <= window_measure(four));
  CHECK(five.singular_windows.empty());
}

TEST_CASE("direct Ramsey readout") {
  const auto m = phase_qubit(qubit_ket(0.5, 0.0));
  const std::vector<SignalSpec> in{Sinusoid{1.0, 1.0, 0.0}};
  const auto sim = simulate(m, in, 2.0, IntegratorConfig{0.001, 1});
  const auto br = ramsey_direct(sim.record);
  for (Eigen::Index k = 300; k <= 2000; k += 100) {
    const double t = sim.record.time(k);
    CHECK(br.minus_branch.values(k, 0) == doctest::Approx(std::sin(t)).epsilon(1e-4));
    CHECK(br.plus_branch.values(k, 0) == doctest::Approx(-std::sin(t)).epsilon(1e-4));
  }

  const std::vector<SignalSpec> zero{ConstantSignal{0.0}};
  const auto flat = ramsey_direct(simulate(m, zero, 2.0, IntegratorConfig{0.01, 1}).record);
  CHECK(flat.minus_branch.values.cwiseAbs().maxCoeff() == 0.0);
  CHECK(flat.plus_branch.values.cwiseAbs().maxCoeff() == 0.0);
  CHECK(flat.branch_point.front());

  MeasurementRecord two;
  two.dt = 0.1;
  two.values = Eigen::MatrixXd::Zero(10, 2);
  CHECK_THROWS(ramsey_direct(two));
}

TEST_CASE("masks and errors") {
  const std::vector<bool> flagged{false, false, false, false, true, false, false, false, false, false};
  const auto mask = valid_mask(flagged, 2);
  const std::vector<bool> expected{true, true, false, false, false, false, false, true, true, true};
  CHECK(mask == expected);
  CHECK(valid_mask(flagged, 0)[4] == false);
  CHECK(valid_mask(flagged, 0)[3] == true);

  SignalTrace rec;
  rec.dt = 1.0;
  rec.values = Eigen::MatrixXd::Constant(4, 1, 2.0);
  const std::vector<SignalSpec> truth{ConstantSignal{1.0}};
  CHECK(relative_l2_error(rec, truth, {}).front() == doctest::Approx(1.0));
  const std::vector<SignalSpec> two{ConstantSignal{1.0}, ConstantSignal{1.0}};
  CHECK_THROWS_AS(relative_l2_error(rec, two, {}), DimensionError);
}

TEST_CASE("inversion configuration and record checks") {
  InversionConfig cfg;
  cfg.singular_threshold = -1.0;
  CHECK_THROWS(cfg.check());
  cfg = {};
  cfg.substeps = 0;
  CHECK_THROWS(cfg.check());
  cfg = {};
  cfg.output_feedback = -0.5;
  CHECK_THROWS(cfg.check());

  const auto m = phase_qubit(qubit_ket(0.5, std::numbers::pi / 2));
  MeasurementRecord wrong;
  wrong.dt = 0.1;
  wrong.values = Eigen::MatrixXd::Zero(20, 2);
  CHECK_THROWS(invert(m, transform_observables(m), wrong, InversionConfig{}));
}
