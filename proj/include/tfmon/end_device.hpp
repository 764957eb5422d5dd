#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <utility>
#include <vector>

#include "tfmon/calibration.hpp"
#include "tfmon/frame_codec.hpp"
#include "tfmon/network_sim.hpp"
#include "tfmon/signal_chain.hpp"

// Transmitter-side state machine: sample the signal chain on a fixed period,
// classify against thresholds, keep the last N records locally, and emit an
// encoded frame for the radio.

namespace tfmon {

struct DeviceConfig {
  std::uint64_t device_addr = 0;
  double sample_period_s = 60.0;
  double temp_high_c = 90.0;
  double oil_low_mm = 100.0;
  int adc_channel_temp = 0;
  SignalChain chain;
  std::size_t ring_capacity = 64;
  BatteryModel battery;
  CalibrationTable table;  // empty -> provisioned from the chain at init

  bool operator==(const DeviceConfig&) const = default;
};

struct TelemetryRecord {
  std::uint8_t sequence = 0;
  std::uint32_t timestamp_s = 0;
  std::uint16_t temp_code = 0;
  double temp_c_local = 0.0;  // device-side engineering value, not transmitted
  OilState oil_state = OilState::Normal;
  std::uint8_t status_flags = 0;
  std::uint16_t battery_mv = 0;

  bool operator==(const TelemetryRecord&) const = default;
};

struct EnvironmentSample {
  double temp_c = 20.0;
  double oil_level_mm = 150.0;
};

// Fixed-capacity record store, oldest evicted first.
template <typename T>
class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(T value) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(value));
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  const T& back() const { return items_.back(); }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
};

inline std::uint8_t classify(double temp_c, OilState oil, const DeviceConfig& cfg) {
  std::uint8_t flags = 0;
  if (oil == OilState::Low) flags |= kFlagOilLow;
  if (temp_c >= cfg.temp_high_c) flags |= kFlagTempHigh;  // inclusive threshold
  return flags;
}

// Linear discharge from 3300 mV to 2100 mV across the lifetime estimate.
inline std::uint16_t battery_mv_at(const BatteryModel& battery, std::uint64_t t_ms) {
  const double life_h = lifetime_hours(battery);
  const double elapsed_h = static_cast<double>(t_ms) / 3'600'000.0;
  const double frac = std::min(1.0, elapsed_h / life_h);
  return static_cast<std::uint16_t>(std::lround(3300.0 - 1200.0 * frac));
}

class DeviceState {
 public:
  const DeviceConfig& config() const { return cfg_; }
  std::uint8_t sequence() const { return sequence_; }
  const RingBuffer<TelemetryRecord>& ring() const { return ring_; }

  // One full acquisition cycle at simulated time now_ms. Samples the chain,
  // classifies, records locally and returns the record plus its wire frame.
  std::pair<TelemetryRecord, std::vector<std::uint8_t>> sample_cycle(
      const EnvironmentSample& env, std::uint64_t now_ms) {
    TelemetryRecord rec;
    rec.temp_code = static_cast<std::uint16_t>(
        chain_code(cfg_.chain, env.temp_c, cfg_.adc_channel_temp));
    rec.temp_c_local = temperature_from_code(cfg_.table, rec.temp_code);
    rec.oil_state = oil_level_state({env.oil_level_mm, cfg_.oil_low_mm});
    rec.status_flags = classify(rec.temp_c_local, rec.oil_state, cfg_);
    rec.timestamp_s = static_cast<std::uint32_t>(now_ms / 1000);
    rec.battery_mv = battery_mv_at(cfg_.battery, now_ms);

    sequence_ = static_cast<std::uint8_t>((sequence_ + 1) & 0xFF);
    rec.sequence = sequence_;
    ring_.push(rec);

    TelemetryPayload p;
    p.source_addr = cfg_.device_addr;
    p.sequence = rec.sequence;
    p.timestamp_s = rec.timestamp_s;
    p.temp_code = rec.temp_code;
    p.status_flags = rec.status_flags;
    p.battery_mv = rec.battery_mv;
    return {rec, encode(p).value()};
  }

  friend DeviceState init_device(DeviceConfig cfg);

 private:
  explicit DeviceState(DeviceConfig cfg)
      : cfg_(std::move(cfg)), ring_(cfg_.ring_capacity) {}

  DeviceConfig cfg_;
  std::uint8_t sequence_ = 0;
  RingBuffer<TelemetryRecord> ring_;
};

// Validates the configuration, provisions a calibration table if none was
// supplied, and returns a reset device (sequence 0, empty buffer).
inline DeviceState init_device(DeviceConfig cfg) {
  if (cfg.sample_period_s <= 0.0)
    throw Error(Errc::InvalidConfig, "sample_period_s must be > 0");
  if (cfg.ring_capacity < 1)
    throw Error(Errc::InvalidConfig, "ring_capacity must be >= 1");
  validate_chain(cfg.chain);
  if (cfg.chain.adc.resolution_bits > 10)
    throw Error(Errc::InvalidConfig,
                "adc.resolution_bits must be <= 10: temp_code is a 10-bit wire field");
  if (cfg.adc_channel_temp < 0 || cfg.adc_channel_temp >= cfg.chain.adc.channel_count)
    throw Error(Errc::InvalidConfig, "adc_channel_temp must be a valid ADC channel");
  validate(cfg.battery);
  if (cfg.table.points.empty())
    cfg.table = default_table(cfg.chain);
  else
    validate(cfg.table);
  return DeviceState(std::move(cfg));
}

}  // namespace tfmon
