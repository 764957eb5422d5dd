#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <type_traits>
#include <vector>

#include "tfmon/calibration_table.hpp"
#include "tfmon/frame_codec.hpp"
#include "tfmon/network_sim.hpp"
#include "tfmon/signal_chain.hpp"

// Bench calibration done in software: sweep a set of controlled temperatures
// through the forward chain, observe the code at the receiving end (directly,
// or across a simulated radio link), fit code-vs-voltage with least squares
// and check that the relation stays affine to within a code.

namespace tfmon {

struct IdealTransport {};

// Calibration frames cross a real simulated link; drops leave holes in the
// sweep instead of aborting it.
struct SimulatedTransport {
  const Topology* topology = nullptr;
  std::uint64_t src = 0;
  RadioModel radio;
  SimRng* rng = nullptr;
};

struct SweepResult {
  std::vector<CalibrationPoint> points;
  std::vector<double> missing_temps;  // dropped after retries (TransportFailure)
};

namespace detail {

inline std::optional<int> receive_code(int code, const SimulatedTransport& t) {
  TelemetryPayload p;
  p.source_addr = t.src;
  p.temp_code = static_cast<std::uint16_t>(code);
  auto frame = encode(p).value();
  auto outcome = transmit(*t.topology, t.src, t.radio, *t.rng);
  if (!outcome.ok()) throw Error(outcome.error(), outcome.message());
  if (!delivered(outcome.value())) return std::nullopt;
  return decode(frame).value().temp_code;  // bit-exact over the clean link
}

}  // namespace detail

template <typename Transport>
SweepResult run_sweep(const std::vector<double>& temps, const SignalChain& chain,
                      Transport transport) {
  if (temps.size() < 2)
    throw Error(Errc::DegenerateInput, "sweep needs at least 2 temperatures");
  for (std::size_t i = 1; i < temps.size(); ++i)
    if (temps[i] <= temps[i - 1])
      throw Error(Errc::InvalidConfig, "sweep temperatures must be strictly increasing");

  SweepResult result;
  for (double temp_c : temps) {
    const double tx_volts = chain_voltage(chain, temp_c);  // throws OutOfRange
    const int code = adc_sample(chain.adc, tx_volts, 0);
    std::optional<int> rx_code;
    if constexpr (std::is_same_v<Transport, IdealTransport>) {
      rx_code = code;
    } else {
      rx_code = detail::receive_code(code, transport);
    }
    if (rx_code)
      result.points.push_back({temp_c, tx_volts, *rx_code});
    else
      result.missing_temps.push_back(temp_c);
  }
  return result;
}

struct AffineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double max_residual = 0.0;
};

// Least-squares fit of rx_code against tx_volts.
inline AffineFit fit_affine(const std::vector<CalibrationPoint>& points) {
  if (points.size() < 2)
    throw Error(Errc::DegenerateInput, "fit needs at least 2 points");

  double mean_v = 0.0, mean_c = 0.0;
  for (const auto& p : points) {
    mean_v += p.tx_volts;
    mean_c += p.rx_code;
  }
  mean_v /= static_cast<double>(points.size());
  mean_c /= static_cast<double>(points.size());

  double var_v = 0.0, cov = 0.0;
  for (const auto& p : points) {
    const double dv = p.tx_volts - mean_v;
    var_v += dv * dv;
    cov += dv * (p.rx_code - mean_c);
  }
  if (var_v == 0.0)
    throw Error(Errc::DegenerateInput, "all sweep voltages are equal");

  AffineFit fit;
  fit.slope = cov / var_v;
  fit.intercept = mean_c - fit.slope * mean_v;
  for (const auto& p : points) {
    const double r = std::abs(p.rx_code - (fit.slope * p.tx_volts + fit.intercept));
    fit.max_residual = std::max(fit.max_residual, r);
  }
  return fit;
}

inline CalibrationTable build_table(const std::vector<CalibrationPoint>& points) {
  auto fit = fit_affine(points);
  CalibrationTable table;
  table.points = points;
  table.slope_codes_per_volt = fit.slope;
  table.intercept_codes = fit.intercept;
  table.max_residual_codes = fit.max_residual;
  validate(table);
  return table;
}

struct ConstancyCheck {
  bool pass = false;
  double worst_residual = 0.0;
  CalibrationPoint worst_point;
};

// The received code must track the transmitter voltage as one straight line
// across the whole sweep; floor quantization is the only tolerated deviation.
inline ConstancyCheck verify_constancy(const CalibrationTable& table,
                                       double tolerance_codes = 1.0) {
  auto fit = fit_affine(table.points);
  ConstancyCheck check;
  check.worst_residual = 0.0;
  for (const auto& p : table.points) {
    const double r = std::abs(p.rx_code - (fit.slope * p.tx_volts + fit.intercept));
    if (r >= check.worst_residual) {
      check.worst_residual = r;
      check.worst_point = p;
    }
  }
  check.pass = check.worst_residual <= tolerance_codes;
  return check;
}

// Relative spread of code/volts across points at or above min_volts. Only
// meaningful for a zero-offset chain, where the relation passes through the
// origin and the ratio is the slope.
inline double ratio_spread(const std::vector<CalibrationPoint>& points,
                           double min_volts = 0.5) {
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& p : points) {
    if (p.tx_volts < min_volts) continue;
    const double ratio = p.rx_code / p.tx_volts;
    if (first) {
      lo = hi = ratio;
      first = false;
    } else {
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
  }
  if (first || hi == 0.0)
    throw Error(Errc::DegenerateInput, "no points at or above the voltage floor");
  return (hi - lo) / hi;
}

inline std::vector<double> sweep_temperatures(double from_c, double to_c, double step_c) {
  if (step_c <= 0.0) throw Error(Errc::InvalidConfig, "sweep step must be > 0");
  std::vector<double> temps;
  for (double t = from_c; t <= to_c + 1e-9; t += step_c) temps.push_back(t);
  return temps;
}

// Default bench sweep over the chain's valid span, used to provision device
// tables when the scenario does not name an external table file.
inline CalibrationTable default_table(const SignalChain& chain, double step_c = 10.0) {
  auto temps = sweep_temperatures(chain.rtd.valid_min_c, chain.rtd.valid_max_c, step_c);
  auto sweep = run_sweep(temps, chain, IdealTransport{});
  return build_table(sweep.points);
}

}  // namespace tfmon
