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

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "insitu/signal_model.hpp"

namespace insitu {

inline constexpr double kOperatorRankTolerance = 1e-9;

/// Fewer measured observables than unknown inputs.
class UnderInstrumentedError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// (L_1* O, ..., L_m* O) for one observable O.
using ControlArray = std::vector<OperatorMatrix>;

ControlArray control_array(std::span<const GeneratorTerm> controls, const OperatorMatrix& obs);

struct ObservableArray {
  std::vector<ControlArray> rows;
};

/// Real vectorization of a control array: real and imaginary parts of every
/// entry of every operator, length 2 * m * dim^2.
Eigen::VectorXd vectorize(const ControlArray& row);

/// Rank over the reals of the vectorized rows (threshold 1e-9 x largest singular value).
int operator_rank(const ObservableArray& rows, double rel_tol = kOperatorRankTolerance);

/// Bound on ||L* X|| / ||X||: 2||H|| for Hamiltonian terms, 4||C||^2 for dissipators.
double generator_scale(const GeneratorTerm& term);

/// One row of the transformed measurement equations
///   <L0* op> + <Lc* op> u = sum_{i,d} coefficients(i, d) * y_i^(d+1),
/// where <op> = sum_{i,d} coefficients(i, d) * y_i^(d) and d < order.
struct TransformedObservable {
  OperatorMatrix op;
  int order = 1;                 // highest derivative of y entering the row
  Eigen::MatrixXd coefficients;  // n x order
  bool pivot = false;            // part of the independent set
  std::vector<int> source_indices() const;
};

struct InvertibilityVerdict {
  bool invertible = false;
  std::optional<int> relative_degree;  // nullopt = infinite
  std::vector<TransformedObservable> transformed;
  std::string notes;

  nlohmann::json to_json() const;
};

/// SISO relative degree from the relaxed operator condition: the first k with
/// L1* (L0*)^k O != 0 gives alpha = k + 1. Searches up to dim^4.
InvertibilityVerdict relative_degree_siso(const ProbeModel& model);

/// Observable elimination for m inputs and n >= m outputs. Each round splits
/// the candidates into a pivoted independent part and a dependent part, and
/// replaces each dependent observable O~ (with Lc* O~ = V Lc* O_piv) by
/// L0* O~ - V L0* O_piv for the next derivative order.
InvertibilityVerdict transform_observables(const ProbeModel& model);

}  // namespace insitu
