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

#include <atomic>
#include <stdexcept>

#include <doctest.h>

#include "insitu/baseline_lsq.hpp"
#include "insitu/parallel.hpp"

using namespace insitu;

namespace {

ProbeModel single_g() {
  return build_two_qubit_model(Coefficient::known(mhz_to_rad_per_ns(1)), Coefficient::known(mhz_to_rad_per_ns(1)),
                               Coefficient::identify(), {pauli_product("s1y", 2)});
}

// Bin averages of the distorted step, exactly representable by the optimizer.
PiecewiseConstant binned_step(int bins, double horizon) {
  const SignalSpec step = distorted_step_mhz(10.0, 0.0, 20.0);
  PiecewiseConstant p{0.0, horizon / bins, {}};
  for (int b = 0; b < bins; ++b) p.values.push_back(step((b + 0.5) * p.width));
  return p;
}

}  // namespace

TEST_CASE("least-squares cost") {
  const auto model = single_g();
  const IntegratorConfig ic{0.1, 1};
  const std::vector<SignalSpec> truth{distorted_step_mhz(10.0, 0.0, 20.0)};
  const auto rec = simulate(model, truth, 40.0, ic).record;

  CHECK(lsq_cost(model, truth, rec, ic) <= 1e-10);
  const std::vector<SignalSpec> zero{ConstantSignal{0.0}};
  CHECK(lsq_cost(model, zero, rec, ic) > 0.0);
  CHECK(record_energy(rec) > 0.0);

  // Five bins refined to ten with repeated values describe the same signal.
  const PiecewiseConstant coarse{0.0, 8.0, {0.01, 0.05, -0.02, 0.04, 0.06}};
  PiecewiseConstant fine{0.0, 4.0, {}};
  for (double v : coarse.values) fine.values.insert(fine.values.end(), {v, v});
  const std::vector<SignalSpec> a{coarse};
  const std::vector<SignalSpec> b{fine};
  CHECK(lsq_cost(model, a, rec, ic) == doctest::Approx(lsq_cost(model, b, rec, ic)).epsilon(1e-12));

  // The truth is a local minimum.
  const double at_truth = lsq_cost(model, truth, rec, ic);
  for (double eps : {-1e-3, -1e-4, 1e-4, 1e-3}) {
    const std::vector<SignalSpec> bumped{truth[0].with_perturbation(Multisine{{eps}, {0.3}, {0.0}})};
    CHECK(at_truth <= lsq_cost(model, bumped, rec, ic));
  }

  MeasurementRecord shifted = rec;
  shifted.t0 = 1.0;
  CHECK_THROWS(lsq_cost(model, truth, shifted, ic));
  CHECK_THROWS(lsq_cost(model, truth, rec, IntegratorConfig{0.1, 2}));
}

TEST_CASE("bin packing") {
  const Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(6, 1.0, 6.0);
  const auto s = unpack_bins(p, 2, 0.0, 30.0);
  REQUIRE(s.size() == 2);
  CHECK(s[1].values == std::vector<double>{4.0, 5.0, 6.0});
  CHECK(s[0].width == doctest::Approx(10.0));
  CHECK_THROWS_AS(unpack_bins(p, 4, 0.0, 30.0), DimensionError);
}

TEST_CASE("gradient matches a central difference and is execution independent") {
  const auto model = single_g();
  const IntegratorConfig ic{0.1, 1};
  const std::vector<SignalSpec> truth{distorted_step_mhz(10.0, 0.0, 20.0)};
  const auto rec = simulate(model, truth, 40.0, ic).record;
  Eigen::VectorXd x = Eigen::VectorXd::Constant(8, mhz_to_rad_per_ns(5.0));
  x(3) = 0.0;
  const double h = 1e-4 * x.cwiseAbs().maxCoeff();
  const std::vector<SignalSpec> at_x{unpack_bins(x, 1, 0.0, rec.t_end())[0]};
  const double base = lsq_cost(model, at_x, rec, ic);

  const Eigen::VectorXd serial = lsq_gradient(model, rec, x, h, ic, Execution::Serial, base);
  const Eigen::VectorXd parallel = lsq_gradient(model, rec, x, h, ic, Execution::Parallel, base);
  CHECK(serial == parallel);

  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd up = x, down = x;
    up(i) += h;
    down(i) -= h;
    const std::vector<SignalSpec> su{unpack_bins(up, 1, 0.0, rec.t_end())[0]};
    const std::vector<SignalSpec> sd{unpack_bins(down, 1, 0.0, rec.t_end())[0]};
    const double central = (lsq_cost(model, su, rec, ic) - lsq_cost(model, sd, rec, ic)) / (2.0 * h);
    CHECK(serial(i) == doctest::Approx(central).epsilon(1e-2).scale(1e-6 * serial.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("identification from a good guess") {
  const auto model = single_g();
  const IntegratorConfig ic{0.1, 1};
  const double horizon = 40.0;
  const PiecewiseConstant truth = binned_step(8, horizon);
  const std::vector<SignalSpec> in{truth};
  const auto rec = simulate(model, in, horizon, ic).record;

  LsqConfig cfg;
  cfg.n_bins = 8;
  cfg.max_iters = 150;
  cfg.initial_guess = {constant_mhz(10.0)};
  cfg.integrator = ic;
  const LsqResult r = lsq_identify(model, rec, cfg);

  for (std::size_t k = 1; k < r.cost_history.size(); ++k) CHECK(r.cost_history[k] <= r.cost_history[k - 1]);
  CHECK(r.terminal_cost <= 1e-6 * record_energy(rec));
  REQUIRE(r.signals.size() == 1);
  double err = 0.0, ref = 0.0;
  for (std::size_t b = 0; b < truth.values.size(); ++b) {
    err += std::pow(r.signals[0].values[b] - truth.values[b], 2);
    ref += std::pow(truth.values[b], 2);
  }
  CHECK(std::sqrt(err / ref) <= 5e-2);
  CHECK(r.iterations <= cfg.max_iters);
  CHECK(static_cast<int>(r.cost_history.size()) == r.iterations + 1);

  // Serial and parallel runs are identical.
  cfg.max_iters = 5;
  LsqConfig serial = cfg;
  serial.execution = Execution::Serial;
  CHECK(lsq_identify(model, rec, serial).cost_history == lsq_identify(model, rec, cfg).cost_history);
}

TEST_CASE("fixed step and stopping rules") {
  const auto model = single_g();
  const IntegratorConfig ic{0.1, 1};
  const std::vector<SignalSpec> in{distorted_step_mhz(10.0, 0.0, 20.0)};
  const auto rec = simulate(model, in, 20.0, ic).record;
  LsqConfig cfg;
  cfg.n_bins = 4;
  cfg.max_iters = 3;
  cfg.step_rule = LsqConfig::StepRule::FixedStep;
  cfg.step = 1e-4;
  cfg.initial_guess = {constant_mhz(8.0)};
  cfg.integrator = ic;
  const auto fixed = lsq_identify(model, rec, cfg);
  CHECK(fixed.iterations == 3);
  CHECK(fixed.stop_reason == "max_iters");
  CHECK(fixed.terminal_cost <= fixed.cost_history.front());

  cfg.step_rule = LsqConfig::StepRule::Backtracking;
  cfg.max_iters = 100;
  cfg.tol = 1e3;
  CHECK(lsq_identify(model, rec, cfg).stop_reason == "tolerance");

  cfg.initial_guess = {};
  CHECK_THROWS(lsq_identify(model, rec, cfg));
  LsqConfig bad;
  bad.n_bins = 0;
  CHECK_THROWS(bad.check());
  bad = {};
  bad.fd_relative = 0.0;
  CHECK_THROWS(bad.check());
}

TEST_CASE("parallel loop helper") {
  std::vector<int> hits(1000, 0);
  for_each_index(hits.size(), Execution::Parallel, [&](std::size_t i) { hits[i] += static_cast<int>(i); });
  for (std::size_t i = 0; i < hits.size(); ++i) CHECK(hits[i] == static_cast<int>(i));

  std::atomic<int> calls{0};
  CHECK_THROWS_AS(for_each_index(50, Execution::Parallel,
                                 [&](std::size_t i) {
                                   ++calls;
                                   if (i == 17) throw std::runtime_error("boom");
                                 }),
                  std::runtime_error);
  CHECK(calls.load() == 50);
  CHECK_THROWS_AS(for_each_index(5, Execution::Serial, [](std::size_t) { throw std::logic_error("x"); }), std::logic_error);

  const int before = available_threads();
  set_threads(2);
  CHECK(available_threads() == 2);
  set_threads(0);
  CHECK(available_threads() == before);
}
