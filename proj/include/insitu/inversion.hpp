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

#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "insitu/forward_sim.hpp"
#include "insitu/invertibility.hpp"

namespace insitu {

/// Readout matrix lost rank where the inversion cannot proceed.
class SingularReadoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DerivativeScheme {
  enum class Kind { ThreePoint, SavitzkyGolay };

  Kind kind = Kind::ThreePoint;
  int window = 7;  // SavitzkyGolay only; odd, >= 5
  int degree = 3;

  static DerivativeScheme three_point() { return {}; }
  static DerivativeScheme savitzky_golay(int window, int degree) {
    return {Kind::SavitzkyGolay, window, degree};
  }
};

struct InversionConfig {
  enum class HoldPolicy { HoldLast, Zero };

  DerivativeScheme derivative_scheme;
  /// A sample is singular when s_min(M) < singular_threshold * s_ref, where
  /// s_ref bounds |M| over all states (see InverseSystem::reference_scale).
  double singular_threshold = 1e-3;
  /// Singular values below pinv_cutoff * s_max(M) are dropped by the pseudo-inverse.
  double pinv_cutoff = 1e-3;
  HoldPolicy hold_policy = HoldPolicy::HoldLast;
  int substeps = 1;  // RK4 steps per record interval
  /// Rate (1/ns) pulling each transformed expectation <O'_k> back onto its
  /// measured value; 0 integrates the bare inverse system.
  double output_feedback = 0.0;

  void check() const;
};

/// derivatives[k] holds d^k y / dt^k (samples x channels); derivatives[0] = y.
struct DerivativeTraces {
  double t0 = 0.0;
  double dt = 1.0;
  std::vector<Eigen::MatrixXd> derivatives;

  /// Linear interpolation of every channel of derivative `order` at time t.
  Eigen::VectorXd at(int order, double t) const;
};

DerivativeTraces estimate_derivatives(const MeasurementRecord& record, int order,
                                      const DerivativeScheme& scheme);

struct Readout {
  Eigen::VectorXd u;
  Eigen::VectorXd singular_values;  // descending
};

/// Least-squares solution of M u = rhs by truncated SVD pseudo-inverse.
/// Throws SingularReadoutError if every singular value is below 1e-14.
Readout readout_inputs(const Eigen::MatrixXd& coupling, const Eigen::VectorXd& rhs,
                       double pinv_cutoff = 1e-3);

/// The transformed measurement equations of a verdict, evaluated on states.
class InverseSystem {
 public:
  InverseSystem(const ProbeModel& model, const InvertibilityVerdict& verdict);

  /// M_{k,j}(rho) = <L_j* O'_k>.
  Eigen::MatrixXd coupling(const OperatorMatrix& rho) const;
  /// <L0* O'_k>.
  Eigen::VectorXd drift_terms(const OperatorMatrix& rho) const;
  /// f_k = sum_{i,d} coefficients(i, d) y_i^(d+1).
  Eigen::VectorXd measured_terms(const DerivativeTraces& traces, double t) const;
  /// f_k from derivative values; derivs[d] is the n-vector of y^(d).
  Eigen::VectorXd measured_terms(std::span<const Eigen::VectorXd> derivs) const;

  /// <O'_k> reconstructed from the record: sum_{i,d} coefficients(i, d) y_i^(d).
  Eigen::VectorXd measured_levels(const DerivativeTraces& traces, double t) const;
  /// <O'_k> on a state.
  Eigen::VectorXd state_levels(const OperatorMatrix& rho) const;

  Readout readout(const OperatorMatrix& rho, const Eigen::VectorXd& measured,
                  double pinv_cutoff) const;

  /// sqrt(sum_{k,j} ||L_j* O'_k||^2), an upper bound on ||M(rho)||_F.
  double reference_scale() const { return reference_scale_; }
  int max_order() const { return max_order_; }
  std::size_t rows() const { return rows_.size(); }
  std::size_t inputs() const { return inputs_; }

 private:
  struct Row {
    std::vector<OperatorMatrix> control;  // L_j* O'_k
    OperatorMatrix drift;                 // L0* O'_k
    OperatorMatrix op;                    // O'_k
    Eigen::MatrixXd coefficients;
  };
  std::vector<Row> rows_;
  std::size_t inputs_ = 0;
  std::size_t outputs_ = 0;
  int max_order_ = 1;
  double reference_scale_ = 0.0;
};

struct InversionReport {
  SignalTrace reconstructed;
  std::vector<double> smin;
  std::vector<double> smax;
  std::vector<bool> flagged;
  std::vector<std::pair<double, double>> singular_windows;  // [t_start, t_end] ns
  std::vector<OperatorMatrix> state_path;
  double reference_scale = 0.0;
};

/// Integrates the inverse system driven by the record. Inside singular samples
/// the input follows cfg.hold_policy. Throws SingularReadoutError when the
/// initial state already gives a singular readout.
InversionReport invert(const ProbeModel& model, const InvertibilityVerdict& verdict,
                       const MeasurementRecord& record, const InversionConfig& cfg);

/// Sample mask excluding flagged samples dilated by `dilation` on each side.
std::vector<bool> valid_mask(const std::vector<bool>& flagged, int dilation);

/// ||u_hat - u||_2 / ||u||_2 over samples where mask is true; one value per channel
/// and the pooled value last.
std::vector<double> relative_l2_error(const SignalTrace& reconstructed,
                                      std::span<const SignalSpec> truth,
                                      const std::vector<bool>& mask);

struct RamseyBranches {
  SignalTrace minus_branch;  // -ydot / (2 sqrt(1 - y^2))
  SignalTrace plus_branch;   // +ydot / (2 sqrt(1 - y^2))
  std::vector<bool> branch_point;
};

/// Direct phase readout for H = u sz, O = sx, where y = cos(2 int u).
RamseyBranches ramsey_direct(const MeasurementRecord& record);

}  // namespace insitu
