#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "tfmon/coordinator.hpp"
#include "tfmon/end_device.hpp"
#include "tfmon/network_sim.hpp"
#include "tfmon/scenario.hpp"

// Ties the pieces together: devices sample on their periods, frames cross the
// simulated radio, the coordinator ingests. All randomness flows from the one
// scenario seed, so the same (scenario, seed) yields byte-identical trace and
// logs, and the trace can be replayed into a fresh coordinator.

namespace tfmon {

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
  static const char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0x0F]);
  }
  return out;
}

inline std::vector<std::uint8_t> from_hex(const std::string& hex) {
  if (hex.size() % 2 != 0) throw Error(Errc::InvalidConfig, "odd-length hex string");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(Errc::InvalidConfig, "invalid hex digit");
  };
  std::vector<std::uint8_t> out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2)
    out.push_back(static_cast<std::uint8_t>((nibble(hex[i]) << 4) | nibble(hex[i + 1])));
  return out;
}

struct DeviceSnapshot {
  std::uint64_t addr = 0;
  std::uint8_t sequence = 0;
  std::vector<TelemetryRecord> ring;
};

struct PerDeviceCounters {
  std::uint64_t samples = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;  // retries exhausted or no route
};

struct RunResult {
  std::vector<std::string> trace_lines;
  std::vector<std::string> reading_lines;
  std::vector<std::string> alarm_lines;
  Coordinator::Stats stats;
  std::map<std::uint64_t, PerDeviceCounters> per_device;
  std::map<std::uint64_t, std::uint64_t> coordinator_gaps;
  std::vector<DeviceSnapshot> device_snapshots;
  LcdBuffer final_lcd;
};

namespace detail {

inline nlohmann::ordered_json record_to_json(const TelemetryRecord& rec) {
  return nlohmann::ordered_json{
      {"seq", rec.sequence},
      {"t_dev", rec.timestamp_s},
      {"temp_code", rec.temp_code},
      {"temp_c_local", rec.temp_c_local},
      {"oil", std::string(to_string(rec.oil_state))},
      {"flags", rec.status_flags},
      {"batt_mv", rec.battery_mv},
  };
}

struct SampleEvent {
  std::uint64_t addr;
};
struct DeliveryEvent {
  std::uint64_t addr;
  std::vector<std::uint8_t> frame;
  int hops;
};
struct DropEvent {
  std::uint64_t addr;
  int at_hop;
  int attempts;
};
using SimEvent = std::variant<SampleEvent, DeliveryEvent, DropEvent>;

}  // namespace detail

inline std::vector<DeviceProfile> device_profiles(const ScenarioConfig& cfg) {
  std::vector<DeviceProfile> profiles;
  for (const auto& dev : cfg.devices) {
    auto state = init_device(dev.config);  // validates and provisions the table
    DeviceProfile p;
    p.addr = dev.config.device_addr;
    p.temp_high_c = dev.config.temp_high_c;
    p.sample_period_s = dev.config.sample_period_s;
    p.table = state.config().table;
    profiles.push_back(std::move(p));
  }
  return profiles;
}

inline RunResult run_simulation(const ScenarioConfig& cfg) {
  using namespace detail;

  auto topology = build_topology(cfg.nodes, cfg.max_range_m);
  SimRng rng(cfg.seed);

  std::map<std::uint64_t, DeviceState> devices;
  std::map<std::uint64_t, const DeviceScenario*> scenarios;
  for (const auto& dev : cfg.devices) {
    devices.emplace(dev.config.device_addr, init_device(dev.config));
    scenarios.emplace(dev.config.device_addr, &dev);
  }

  Coordinator coordinator(
      CoordinatorConfig{cfg.coordinator.hysteresis_c, cfg.coordinator.offline_multiplier},
      device_profiles(cfg));
  std::ostringstream readings_log, alarms_log;
  coordinator.attach_logs(&readings_log, &alarms_log);

  RunResult result;
  auto trace = [&result](const nlohmann::ordered_json& j) {
    result.trace_lines.push_back(j.dump());
  };
  auto trace_alarm = [&](const AlarmEvent& e) {
    trace({{"event", "alarm"},
           {"t_s", static_cast<double>(e.at_ms) / 1000.0},
           {"node", cfg.coordinator.node_id},
           {"addr", e.device_addr},
           {"kind", std::string(to_string(e.kind))},
           {"state", std::string(to_string(e.state))}});
  };

  const std::uint64_t duration_ms = cfg.duration_ms();
  EventQueue<SimEvent> queue;
  for (const auto& [addr, dev] : devices) queue.schedule(0, SampleEvent{addr});

  while (auto popped = queue.pop()) {
    const auto t = popped->first;
    // silence checks due before this event fire first, keeping the trace
    // ordered by timestamp
    for (const auto& alarm : coordinator.advance_to(t)) trace_alarm(alarm);

    if (const auto* sample = std::get_if<SampleEvent>(&popped->second)) {
      auto& dev = devices.at(sample->addr);
      const auto* scn = scenarios.at(sample->addr);
      EnvironmentSample env{scn->temp_c.value_at(t), scn->oil_level_mm.value_at(t)};
      auto [rec, frame] = dev.sample_cycle(env, t);
      ++result.per_device[sample->addr].samples;
      trace({{"event", "sample"},
             {"t_s", static_cast<double>(t) / 1000.0},
             {"node", sample->addr},
             {"seq", rec.sequence},
             {"temp_code", rec.temp_code},
             {"temp_c", rec.temp_c_local},
             {"oil", std::string(to_string(rec.oil_state))},
             {"flags", rec.status_flags},
             {"batt_mv", rec.battery_mv}});

      auto outcome = transmit(topology, sample->addr, cfg.radio, rng, t);
      if (!outcome.ok()) {
        ++result.per_device[sample->addr].dropped;
        trace({{"event", "dropped"},
               {"t_s", static_cast<double>(t) / 1000.0},
               {"node", sample->addr},
               {"reason", "no_route"}});
      } else if (const auto* ok = std::get_if<Delivered>(&outcome.value())) {
        queue.schedule(ok->at_ms, DeliveryEvent{sample->addr, std::move(frame), ok->hops});
      } else {
        const auto& drop = std::get<Dropped>(outcome.value());
        queue.schedule(drop.at_ms, DropEvent{sample->addr, drop.at_hop, drop.attempts});
      }

      const std::uint64_t next =
          t + static_cast<std::uint64_t>(dev.config().sample_period_s * 1000.0 + 0.5);
      if (next < duration_ms) queue.schedule(next, SampleEvent{sample->addr});
    } else if (const auto* delivery = std::get_if<DeliveryEvent>(&popped->second)) {
      auto out = coordinator.ingest(delivery->frame, t, delivery->hops);
      for (const auto& alarm : out.alarms)
        if (alarm.at_ms < t) trace_alarm(alarm);
      if (out.reading) {
        ++result.per_device[delivery->addr].delivered;
        const auto& r = *out.reading;
        const auto lcd = coordinator.lcd();
        trace({{"event", "reading"},
               {"t_s", static_cast<double>(t) / 1000.0},
               {"node", cfg.coordinator.node_id},
               {"addr", r.device_addr},
               {"seq", r.sequence},
               {"temp_c", r.temp_c},
               {"temp_code", r.temp_code},
               {"oil", std::string(to_string(r.oil_state))},
               {"batt_mv", r.battery_mv},
               {"hops", r.hops},
               {"frame", to_hex(delivery->frame)},
               {"lcd", {lcd.rows[0], lcd.rows[1]}}});
      } else {
        trace({{"event", "decode_error"},
               {"t_s", static_cast<double>(t) / 1000.0},
               {"node", cfg.coordinator.node_id},
               {"error", std::string(to_string(*out.error))}});
      }
      for (const auto& alarm : out.alarms)
        if (alarm.at_ms >= t) trace_alarm(alarm);
    } else {
      const auto& drop = std::get<DropEvent>(popped->second);
      ++result.per_device[drop.addr].dropped;
      trace({{"event", "dropped"},
             {"t_s", static_cast<double>(t) / 1000.0},
             {"node", drop.addr},
             {"at_hop", drop.at_hop},
             {"attempts", drop.attempts},
             {"reason", "retries"}});
    }
  }

  for (const auto& alarm : coordinator.advance_to(duration_ms)) trace_alarm(alarm);

  for (const auto& [addr, dev] : devices) {
    DeviceSnapshot snap;
    snap.addr = addr;
    snap.sequence = dev.sequence();
    for (const auto& rec : dev.ring()) snap.ring.push_back(rec);
    result.device_snapshots.push_back(std::move(snap));
    result.coordinator_gaps[addr] = coordinator.gap_frames(addr);
  }
  result.stats = coordinator.stats();
  result.final_lcd = coordinator.lcd();

  auto split_lines = [](const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
  };
  result.reading_lines = split_lines(readings_log.str());
  result.alarm_lines = split_lines(alarms_log.str());
  return result;
}

struct ReplayResult {
  std::vector<std::string> reading_lines;
  std::vector<std::string> alarm_lines;
  Coordinator::Stats stats;
  std::map<std::uint64_t, std::uint64_t> coordinator_gaps;
};

// Re-ingests the delivered frames of a recorded trace into a fresh
// coordinator at their recorded times; with the same scenario this
// reproduces the reading and alarm logs byte for byte.
inline ReplayResult replay_trace(const std::vector<std::string>& trace_lines,
                                 const ScenarioConfig& cfg) {
  Coordinator coordinator(
      CoordinatorConfig{cfg.coordinator.hysteresis_c, cfg.coordinator.offline_multiplier},
      device_profiles(cfg));
  std::ostringstream readings_log, alarms_log;
  coordinator.attach_logs(&readings_log, &alarms_log);

  for (const auto& line : trace_lines) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::InvalidConfig, std::string("bad trace line: ") + e.what());
    }
    if (!j.contains("t_s")) continue;
    const auto t_ms = static_cast<std::uint64_t>(j["t_s"].get<double>() * 1000.0 + 0.5);
    if (j.value("event", "") == "reading" && j.contains("frame")) {
      coordinator.ingest(from_hex(j["frame"].get<std::string>()), t_ms,
                         j.value("hops", 0));
    } else {
      coordinator.advance_to(t_ms);
    }
  }
  coordinator.advance_to(cfg.duration_ms());

  ReplayResult result;
  result.stats = coordinator.stats();
  for (const auto& dev : cfg.devices)
    result.coordinator_gaps[dev.config.device_addr] =
        coordinator.gap_frames(dev.config.device_addr);

  std::istringstream rin(readings_log.str());
  std::string line;
  while (std::getline(rin, line)) result.reading_lines.push_back(line);
  std::istringstream ain(alarms_log.str());
  while (std::getline(ain, line)) result.alarm_lines.push_back(line);
  return result;
}

}  // namespace tfmon
