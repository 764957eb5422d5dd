#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfmon/result.hpp"

// Calibration table shared between the bench-sweep procedure that produces it
// and the code inversion that consumes it. Kept separate from both so neither
// module has to include the other.

namespace tfmon {

struct CalibrationPoint {
  double set_temp_c = 0.0;
  double tx_volts = 0.0;   // amplifier output at the transmitter
  int rx_code = 0;         // ADC code observed at the receiver

  bool operator==(const CalibrationPoint&) const = default;
};

struct CalibrationTable {
  std::vector<CalibrationPoint> points;  // ascending set_temp_c
  double slope_codes_per_volt = 0.0;
  double intercept_codes = 0.0;
  double max_residual_codes = 0.0;

  bool operator==(const CalibrationTable&) const = default;
};

inline void validate(const CalibrationTable& table) {
  if (table.points.size() < 2)
    throw Error(Errc::Uncalibrated, "calibration table needs at least 2 points");
  for (std::size_t i = 1; i < table.points.size(); ++i) {
    if (table.points[i].set_temp_c <= table.points[i - 1].set_temp_c)
      throw Error(Errc::InvalidConfig, "calibration temps must be strictly increasing");
    if (table.points[i].rx_code < table.points[i - 1].rx_code)
      throw Error(Errc::InvalidConfig, "calibration codes must be non-decreasing");
  }
}

// Piecewise-linear interpolation of temperature over the (code, temp) pairs.
inline Result<double> table_temperature(const CalibrationTable& table, int code) {
  if (table.points.size() < 2)
    return fail(Errc::Uncalibrated, "calibration table empty or too small");
  const auto& pts = table.points;
  if (code < pts.front().rx_code || code > pts.back().rx_code) {
    std::ostringstream msg;
    msg << "code " << code << " outside calibrated span [" << pts.front().rx_code
        << ", " << pts.back().rx_code << "]";
    return fail(Errc::OutOfRange, msg.str());
  }
  auto hi = std::lower_bound(pts.begin(), pts.end(), code,
                             [](const CalibrationPoint& p, int c) { return p.rx_code < c; });
  if (hi == pts.begin()) return pts.front().set_temp_c;
  auto lo = hi - 1;
  if (hi == pts.end()) return pts.back().set_temp_c;
  const double code_span = static_cast<double>(hi->rx_code - lo->rx_code);
  if (code_span == 0.0) return lo->set_temp_c;  // plateau: both points share the code
  const double t = (code - lo->rx_code) / code_span;
  return lo->set_temp_c + t * (hi->set_temp_c - lo->set_temp_c);
}

inline nlohmann::ordered_json to_json(const CalibrationTable& table) {
  nlohmann::ordered_json j;
  j["schema"] = "tfmon-calibration/1";
  auto pts = nlohmann::ordered_json::array();
  for (const auto& p : table.points) {
    pts.push_back({{"temp_c", p.set_temp_c}, {"tx_volts", p.tx_volts}, {"rx_code", p.rx_code}});
  }
  j["points"] = pts;
  j["slope_codes_per_volt"] = table.slope_codes_per_volt;
  j["intercept_codes"] = table.intercept_codes;
  j["max_residual_codes"] = table.max_residual_codes;
  return j;
}

inline CalibrationTable table_from_json(const nlohmann::json& j) {
  CalibrationTable table;
  if (!j.is_object() || !j.contains("points") || !j["points"].is_array())
    throw Error(Errc::InvalidConfig, "calibration table JSON missing points array");
  for (const auto& pj : j["points"]) {
    CalibrationPoint p;
    p.set_temp_c = pj.at("temp_c").get<double>();
    p.tx_volts = pj.at("tx_volts").get<double>();
    p.rx_code = pj.at("rx_code").get<int>();
    table.points.push_back(p);
  }
  table.slope_codes_per_volt = j.value("slope_codes_per_volt", 0.0);
  table.intercept_codes = j.value("intercept_codes", 0.0);
  table.max_residual_codes = j.value("max_residual_codes", 0.0);
  validate(table);
  return table;
}

inline std::string to_csv(const std::vector<CalibrationPoint>& points) {
  std::ostringstream out;
  out << "temp_c,tx_volts,rx_code\n";
  out.precision(10);
  for (const auto& p : points)
    out << p.set_temp_c << ',' << p.tx_volts << ',' << p.rx_code << '\n';
  return out.str();
}

inline CalibrationTable load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open calibration table: " + path);
  nlohmann::json j;
  in >> j;
  return table_from_json(j);
}

}  // namespace tfmon
