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

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "insitu/inversion.hpp"

namespace insitu::io {

/// `t,y1,...,yn`, 12 significant digits.
std::string record_csv(const MeasurementRecord& record);
MeasurementRecord parse_record_csv(std::string_view text);

/// `t,u1_hat,...,um_hat,smin,smax,flag`.
std::string report_csv(const InversionReport& report);
/// Windows sidecar: reference scale, threshold and the [t_start, t_end] list.
nlohmann::json windows_json(const InversionReport& report, double singular_threshold);

/// `t,<names...>` for any sampled signal set.
std::string series_csv(const TimeSeries& series, const std::vector<std::string>& names);

/// `iter,cost`.
std::string cost_history_csv(const std::vector<double>& history);

std::string format_number(double v);

std::string sha256_hex(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
/// Writes bytes and returns their SHA-256.
std::string write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace insitu::io
