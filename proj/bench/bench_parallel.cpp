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

// Serial reference vs OpenMP kernels: the least-squares finite-difference
// gradient and a batch of noisy inversions over seeds.

#include <numbers>

#include <benchmark/benchmark.h>

#include "insitu/baseline_lsq.hpp"
#include "insitu/inversion.hpp"
#include "insitu/parallel.hpp"

namespace {

using namespace insitu;

struct GradientCase {
  ProbeModel model;
  MeasurementRecord record;
  Eigen::VectorXd params;
  IntegratorConfig integrator{0.1, 1};
  double base = 0.0;

  GradientCase()
      : model(build_two_qubit_model(Coefficient::known(mhz_to_rad_per_ns(1)), Coefficient::known(mhz_to_rad_per_ns(1)),
                                    Coefficient::identify(), {pauli_product("s1y", 2)})) {
    const std::vector<SignalSpec> truth{distorted_step_mhz(10.0, 0.0, 20.0)};
    record = simulate(model, truth, 150.0, integrator).record;
    params = Eigen::VectorXd::Constant(50, mhz_to_rad_per_ns(10.0));
    const std::vector<SignalSpec> at{unpack_bins(params, 1, 0.0, record.t_end())[0]};
    base = lsq_cost(model, at, record, integrator);
  }
};

void BM_LsqGradient(benchmark::State& state) {
  static const GradientCase c;
  const auto ex = state.range(0) == 0 ? Execution::Serial : Execution::Parallel;
  for (auto _ : state) {
    benchmark::DoNotOptimize(lsq_gradient(c.model, c.record, c.params, 1e-6, c.integrator, ex, c.base));
  }
  state.SetLabel(ex == Execution::Serial ? "serial" : "parallel");
  state.counters["threads"] = available_threads();
}

void BM_NoiseBatch(benchmark::State& state) {
  ProbeModel model;
  model.controls = {GeneratorTerm::hamiltonian(pauli(Pauli::Z))};
  model.observables = {pauli(Pauli::X)};
  model.initial_state = DensityState::from_ket(qubit_ket(0.5, std::numbers::pi / 2));
  model.control_names = {"u"};
  model.observable_names = {"sx"};
  const auto verdict = transform_observables(model);
  const std::vector<SignalSpec> truth{Sinusoid{1.0, 1.0, 0.0}};
  const IntegratorConfig ic{0.02, 1};
  InversionConfig cfg;
  cfg.singular_threshold = 1e-1;
  cfg.output_feedback = 5.0;
  const auto ex = state.range(0) == 0 ? Execution::Serial : Execution::Parallel;

  for (auto _ : state) {
    std::vector<double> errors(20);
    for_each_index(errors.size(), ex, [&](std::size_t r) {
      NoiseSpec spec;
      spec.target = NoiseSpec::Target::Evolution;
      spec.band = NoiseSpec::Band::High;
      spec.variance = 1e-2;
      spec.seed = r;
      const auto noisy = inject_noise(truth, spec);
      const auto rec = simulate(model, noisy, 12.5, ic).record;
      const auto rep = invert(model, verdict, rec, cfg);
      errors[r] = relative_l2_error(rep.reconstructed, truth, valid_mask(rep.flagged, 5)).back();
    });
    benchmark::DoNotOptimize(errors.data());
  }
  state.SetLabel(ex == Execution::Serial ? "serial" : "parallel");
  state.counters["threads"] = available_threads();
}

}  // namespace

BENCHMARK(BM_LsqGradient)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NoiseBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
