#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>

#include "tfmon/calibration_table.hpp"
#include "tfmon/result.hpp"

// Analog measurement chain, modeled as pure functions:
// RTD resistance -> Wheatstone bridge differential -> op-amp gain/offset ->
// 10-bit ADC code, plus the binary oil-level float switch.

namespace tfmon {

struct RtdModel {
  double r0_ohms = 100.0;       // PT100 default
  double coeff_a = 3.9083e-3;   // 1/degC
  double coeff_b = -5.775e-7;   // 1/degC^2
  double valid_min_c = -40.0;
  double valid_max_c = 120.0;

  bool operator==(const RtdModel&) const = default;
};

struct BridgeCircuit {
  double excitation_volts = 5.0;
  double r_ref_ohms = 100.0;  // completion arm opposite the RTD
  double half_ratio = 0.5;    // fixed divider on the reference half

  bool operator==(const BridgeCircuit&) const = default;
};

struct AmplifierStage {
  double gain = 6.0;
  double offset_volts = 1.8;
  double rail_low = 0.0;
  double rail_high = 5.0;

  bool operator==(const AmplifierStage&) const = default;
};

struct AdcModel {
  int resolution_bits = 10;
  double vref_volts = 5.0;
  int channel_count = 8;

  int full_scale() const { return (1 << resolution_bits) - 1; }

  bool operator==(const AdcModel&) const = default;
};

enum class OilState : std::uint8_t { Normal = 0, Low = 1 };

constexpr std::string_view to_string(OilState s) {
  return s == OilState::Low ? "Low" : "Normal";
}

struct OilLevelSensor {
  double level_mm = 0.0;
  double low_threshold_mm = 100.0;
};

struct SignalChain {
  RtdModel rtd;
  BridgeCircuit bridge;
  AmplifierStage amplifier;
  AdcModel adc;

  bool operator==(const SignalChain&) const = default;
};

inline double rtd_resistance(const RtdModel& m, double temp_c) {
  if (temp_c < m.valid_min_c || temp_c > m.valid_max_c) {
    std::ostringstream msg;
    msg << "temp " << temp_c << " C outside RTD valid range [" << m.valid_min_c
        << ", " << m.valid_max_c << "]";
    throw Error(Errc::OutOfRange, msg.str());
  }
  return m.r0_ohms * (1.0 + m.coeff_a * temp_c + m.coeff_b * temp_c * temp_c);
}

// Differential bridge output; zero when the RTD equals the reference arm.
inline double bridge_output(const BridgeCircuit& b, double r_rtd_ohms) {
  if (r_rtd_ohms <= 0.0)
    throw Error(Errc::OutOfRange, "bridge requires a positive RTD resistance");
  return b.excitation_volts * (r_rtd_ohms / (r_rtd_ohms + b.r_ref_ohms) - b.half_ratio);
}

inline double amplify(const AmplifierStage& a, double v_diff) {
  double out = a.gain * v_diff + a.offset_volts;
  if (out < a.rail_low) return a.rail_low;
  if (out > a.rail_high) return a.rail_high;
  return out;
}

// Floor quantization, clamped to the code range; never errors on voltage.
inline int adc_sample(const AdcModel& adc, double volts, int channel) {
  if (channel < 0 || channel >= adc.channel_count) {
    std::ostringstream msg;
    msg << "channel " << channel << " not in [0, " << adc.channel_count << ")";
    throw Error(Errc::BadChannel, msg.str());
  }
  if (std::isnan(volts)) return 0;
  const int fs = adc.full_scale();
  double code = std::floor(volts / adc.vref_volts * fs);
  if (code < 0.0) return 0;
  if (code > fs) return fs;
  return static_cast<int>(code);
}

inline OilState oil_level_state(const OilLevelSensor& s) {
  return s.level_mm < s.low_threshold_mm ? OilState::Low : OilState::Normal;
}

inline double chain_voltage(const SignalChain& c, double temp_c) {
  return amplify(c.amplifier, bridge_output(c.bridge, rtd_resistance(c.rtd, temp_c)));
}

inline int chain_code(const SignalChain& c, double temp_c, int channel = 0) {
  return adc_sample(c.adc, chain_voltage(c, temp_c), channel);
}

// Engineering-unit recovery through the calibration table (piecewise-linear
// over its (code, temp) pairs).
inline double temperature_from_code(const CalibrationTable& table, int code) {
  auto r = table_temperature(table, code);
  if (!r.ok()) throw Error(r.error(), r.message());
  return r.value();
}

inline void validate_chain(const SignalChain& c) {
  if (c.rtd.r0_ohms <= 0.0) throw Error(Errc::InvalidConfig, "rtd.r0_ohms must be > 0");
  if (c.rtd.valid_min_c >= c.rtd.valid_max_c)
    throw Error(Errc::InvalidConfig, "rtd.valid_range_c must satisfy min < max");
  // dR/dT = r0 (a + 2bT) is linear in T, so positive endpoints mean the
  // resistance is strictly increasing across the whole valid range
  if (c.rtd.coeff_a + 2.0 * c.rtd.coeff_b * c.rtd.valid_min_c <= 0.0 ||
      c.rtd.coeff_a + 2.0 * c.rtd.coeff_b * c.rtd.valid_max_c <= 0.0)
    throw Error(Errc::InvalidConfig,
                "rtd coefficients must give a strictly increasing resistance on valid_range_c");
  if (c.bridge.excitation_volts <= 0.0)
    throw Error(Errc::InvalidConfig, "bridge.excitation_volts must be > 0");
  if (c.bridge.r_ref_ohms <= 0.0)
    throw Error(Errc::InvalidConfig, "bridge.r_ref_ohms must be > 0");
  if (c.amplifier.gain <= 0.0) throw Error(Errc::InvalidConfig, "amplifier.gain must be > 0");
  if (c.amplifier.rail_low >= c.amplifier.rail_high)
    throw Error(Errc::InvalidConfig, "amplifier rails must satisfy low < high");
  if (c.adc.resolution_bits <= 0 || c.adc.resolution_bits > 16)
    throw Error(Errc::InvalidConfig, "adc.resolution_bits out of supported range");
  if (c.adc.vref_volts <= 0.0) throw Error(Errc::InvalidConfig, "adc.vref_volts must be > 0");
  if (c.adc.channel_count <= 0) throw Error(Errc::InvalidConfig, "adc.channel_count must be > 0");
}

}  // namespace tfmon
