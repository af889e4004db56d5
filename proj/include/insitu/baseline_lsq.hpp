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

#include <string>
#include <vector>

#include "insitu/forward_sim.hpp"
#include "insitu/parallel.hpp"

namespace insitu {

struct LsqConfig {
  enum class StepRule { FixedStep, Backtracking };

  int n_bins = 50;
  /// One guess per unknown signal; sampled at bin centres to seed the bins.
  std::vector<SignalSpec> initial_guess;
  int max_iters = 200;
  StepRule step_rule = StepRule::Backtracking;
  /// FixedStep: the step eta. Backtracking: the first trial step.
  double step = 1.0;
  /// Stop when an accepted step lowers the cost by less than tol.
  double tol = 0.0;
  /// Finite-difference perturbation, relative to the signal scale.
  double fd_relative = 1e-4;
  IntegratorConfig integrator;
  Execution execution = Execution::Parallel;

  void check() const;
};

struct LsqResult {
  std::vector<PiecewiseConstant> signals;  // best iterate, one per unknown
  std::vector<double> cost_history;        // cost of the accepted iterate, starting at the guess
  double terminal_cost = 0.0;
  int iterations = 0;
  std::string stop_reason;
};

/// Trapezoid integral over the record grid of sum_l (y_l - F_l[candidate])^2.
/// The integrator must reproduce the record's sample spacing.
double lsq_cost(const ProbeModel& model, std::span<const SignalSpec> candidate,
                const MeasurementRecord& record, const IntegratorConfig& integrator);

/// Trapezoid integral of sum_l y_l^2.
double record_energy(const MeasurementRecord& record);

/// Piecewise-constant signals on [t0, t_end] from a flat parameter vector.
std::vector<PiecewiseConstant> unpack_bins(const Eigen::VectorXd& params, std::size_t signals,
                                           double t0, double t_end);

/// Forward-difference gradient of lsq_cost with respect to every bin value.
/// Each component is an independent simulation, so the parallel and serial
/// paths return bit-identical vectors.
Eigen::VectorXd lsq_gradient(const ProbeModel& model, const MeasurementRecord& record,
                             const Eigen::VectorXd& params, double perturbation,
                             const IntegratorConfig& integrator, Execution execution,
                             double base_cost);

LsqResult lsq_identify(const ProbeModel& model, const MeasurementRecord& record, const LsqConfig& cfg);

}  // namespace insitu
