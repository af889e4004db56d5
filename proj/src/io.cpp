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

#include "insitu/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace insitu::io {

namespace {

void write_row(std::ostringstream& out, double t, const Eigen::RowVectorXd& row) {
  out << format_number(t);
  for (Eigen::Index c = 0; c < row.size(); ++c) out << ',' << format_number(row(c));
  out << '\n';
}

}  // namespace

std::string format_number(double v) {
  std::ostringstream out;
  out << std::setprecision(12) << v;
  return out.str();
}

std::string series_csv(const TimeSeries& series, const std::vector<std::string>& names) {
  if (static_cast<Eigen::Index>(names.size()) != series.channels()) {
    throw std::invalid_argument("series_csv: one column name per channel required");
  }
  std::ostringstream out;
  out << 't';
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (Eigen::Index k = 0; k < series.samples(); ++k) write_row(out, series.time(k), series.values.row(k));
  return out.str();
}

std::string record_csv(const MeasurementRecord& record) {
  std::vector<std::string> names;
  for (Eigen::Index c = 0; c < record.channels(); ++c) names.push_back("y" + std::to_string(c + 1));
  return series_csv(record, names);
}

MeasurementRecord parse_record_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,", 0) != 0) {
    throw std::invalid_argument("record csv: missing 't,y1,...' header");
  }
  const auto columns = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
  std::vector<double> times;
  std::vector<double> values;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    Eigen::Index count = 0;
    while (std::getline(row, cell, ',')) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw std::invalid_argument("record csv: bad number on line " + std::to_string(line_no));
      }
      (count == 0 ? times : values).push_back(v);
      ++count;
    }
    if (count != columns + 1) {
      throw std::invalid_argument("record csv: wrong column count on line " + std::to_string(line_no));
    }
  }
  if (times.size() < 2) throw std::invalid_argument("record csv: need at least two samples");
  MeasurementRecord record;
  record.t0 = times.front();
  record.dt = times[1] - times[0];
  record.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Eigen::Index>(times.size()), columns);
  return record;
}

std::string report_csv(const InversionReport& report) {
  const SignalTrace& u = report.reconstructed;
  std::ostringstream out;
  out << 't';
  for (Eigen::Index j = 0; j < u.channels(); ++j) out << ",u" << j + 1 << "_hat";
  out << ",smin,smax,flag\n";
  for (Eigen::Index k = 0; k < u.samples(); ++k) {
    out << format_number(u.time(k));
    for (Eigen::Index j = 0; j < u.channels(); ++j) out << ',' << format_number(u.values(k, j));
    const auto i = static_cast<std::size_t>(k);
    out << ',' << format_number(report.smin[i]) << ',' << format_number(report.smax[i]) << ','
        << (report.flagged[i] ? 1 : 0) << '\n';
  }
  return out.str();
}

nlohmann::json windows_json(const InversionReport& report, double singular_threshold) {
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& [a, b] : report.singular_windows) windows.push_back({{"t_start", a}, {"t_end", b}});
  return {{"reference_scale", report.reference_scale},
          {"singular_threshold", singular_threshold},
          {"windows", windows}};
}

std::string cost_history_csv(const std::vector<double>& history) {
  std::ostringstream out;
  out << "iter,cost\n";
  for (std::size_t i = 0; i < history.size(); ++i) out << i << ',' << format_number(history[i]) << '\n';
  return out.str();
}

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return out.str();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
  return sha256_hex(bytes);
}

}  // namespace insitu::io
