#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfmon/calibration_table.hpp"
#include "tfmon/frame_codec.hpp"
#include "tfmon/signal_chain.hpp"

// Receiver-side service: decode frames, convert codes back to engineering
// units, persist readings to an append-only JSON Lines log, drive the 2x16
// LCD, and run the per-device alarm state machines (threshold with
// hysteresis, oil edges, silence detection).

namespace tfmon {

struct Reading {
  std::uint64_t device_addr = 0;
  std::uint8_t sequence = 0;
  std::uint32_t device_timestamp_s = 0;
  std::uint32_t received_at_s = 0;
  double temp_c = 0.0;  // coordinator-derived from temp_code
  std::uint16_t temp_code = 0;
  OilState oil_state = OilState::Normal;
  std::uint16_t battery_mv = 0;
  int hops = 0;

  bool operator==(const Reading&) const = default;
};

enum class AlarmKind : std::uint8_t { TempHigh, OilLow, DeviceOffline };
enum class AlarmState : std::uint8_t { Raised, Cleared };

constexpr std::string_view to_string(AlarmKind k) {
  switch (k) {
    case AlarmKind::TempHigh: return "TempHigh";
    case AlarmKind::OilLow: return "OilLow";
    case AlarmKind::DeviceOffline: return "DeviceOffline";
  }
  return "?";
}

constexpr std::string_view to_string(AlarmState s) {
  return s == AlarmState::Raised ? "Raised" : "Cleared";
}

struct AlarmEvent {
  std::uint64_t device_addr = 0;
  AlarmKind kind = AlarmKind::TempHigh;
  AlarmState state = AlarmState::Raised;
  std::uint64_t at_ms = 0;
  std::optional<Reading> snapshot;  // omitted for DeviceOffline
};

// Exact 2x16 character emulation of the status display.
struct LcdBuffer {
  std::array<std::string, 2> rows{std::string(16, ' '), std::string(16, ' ')};

  bool operator==(const LcdBuffer&) const = default;
};

inline LcdBuffer render_lcd(const Reading& r) {
  char row1[32];
  char row2[32];
  std::snprintf(row1, sizeof(row1), "D%04llX T:%5.1fC",
                static_cast<unsigned long long>(r.device_addr & 0xFFFF), r.temp_c);
  std::snprintf(row2, sizeof(row2), "OIL:%-3s S:%03u",
                r.oil_state == OilState::Low ? "LOW" : "OK",
                static_cast<unsigned>(r.sequence));
  LcdBuffer lcd;
  lcd.rows[0] = row1;
  lcd.rows[1] = row2;
  for (auto& row : lcd.rows) row.resize(16, ' ');
  return lcd;
}

inline nlohmann::ordered_json reading_to_json(const Reading& r) {
  return nlohmann::ordered_json{
      {"addr", r.device_addr},
      {"seq", r.sequence},
      {"t_dev", r.device_timestamp_s},
      {"t_rx", r.received_at_s},
      {"temp_c", r.temp_c},
      {"temp_code", r.temp_code},
      {"oil", std::string(to_string(r.oil_state))},
      {"batt_mv", r.battery_mv},
      {"hops", r.hops},
  };
}

inline Reading reading_from_json(const nlohmann::json& j) {
  Reading r;
  r.device_addr = j.at("addr").get<std::uint64_t>();
  r.sequence = j.at("seq").get<std::uint8_t>();
  r.device_timestamp_s = j.at("t_dev").get<std::uint32_t>();
  r.received_at_s = j.at("t_rx").get<std::uint32_t>();
  r.temp_c = j.at("temp_c").get<double>();
  r.temp_code = j.at("temp_code").get<std::uint16_t>();
  r.oil_state = j.at("oil").get<std::string>() == "Low" ? OilState::Low : OilState::Normal;
  r.battery_mv = j.at("batt_mv").get<std::uint16_t>();
  r.hops = j.at("hops").get<int>();
  return r;
}

inline nlohmann::ordered_json alarm_to_json(const AlarmEvent& e) {
  nlohmann::ordered_json j{
      {"addr", e.device_addr},
      {"kind", std::string(to_string(e.kind))},
      {"state", std::string(to_string(e.state))},
      {"t_s", static_cast<double>(e.at_ms) / 1000.0},
  };
  if (e.snapshot) {
    j["reading"] = reading_to_json(*e.snapshot);
  }
  return j;
}

// What the coordinator must know about each configured transmitter.
struct DeviceProfile {
  std::uint64_t addr = 0;
  double temp_high_c = 90.0;
  double sample_period_s = 60.0;
  CalibrationTable table;
};

struct CoordinatorConfig {
  double hysteresis_c = 2.0;
  double offline_multiplier = 3.0;
};

class Coordinator {
 public:
  struct IngestOutcome {
    std::optional<Reading> reading;
    std::optional<Errc> error;
    std::vector<AlarmEvent> alarms;  // offline events fired first, then edges
  };

  struct Stats {
    std::uint64_t frames_ok = 0;
    std::uint64_t frames_bad = 0;
    std::uint64_t unknown_device = 0;
    std::uint64_t alarms_raised = 0;
    std::uint64_t alarms_cleared = 0;
    std::map<std::string, std::uint64_t> decode_errors;
  };

  Coordinator(CoordinatorConfig cfg, std::vector<DeviceProfile> profiles,
              std::uint64_t start_ms = 0)
      : cfg_(cfg) {
    for (auto& p : profiles) {
      validate(p.table);
      auto addr = p.addr;
      PerDevice dev;
      dev.profile = std::move(p);
      if (!devices_.emplace(addr, std::move(dev)).second)
        throw Error(Errc::InvalidConfig, "duplicate device address in coordinator profile");
      schedule_offline_check(addr, start_ms);
    }
  }

  void attach_logs(std::ostream* readings, std::ostream* alarms) {
    readings_out_ = readings;
    alarms_out_ = alarms;
  }

  // Fires every silence check due strictly before t_ms.
  std::vector<AlarmEvent> advance_to(std::uint64_t t_ms) {
    std::vector<AlarmEvent> fired;
    while (!checks_.empty() && checks_.top().due_ms < t_ms) {
      auto check = checks_.top();
      checks_.pop();
      auto& dev = devices_.at(check.addr);
      if (dev.readings_seen != check.readings_at_schedule) continue;  // stale
      if (dev.offline_raised) continue;
      dev.offline_raised = true;
      fired.push_back(emit_alarm({check.addr, AlarmKind::DeviceOffline,
                                  AlarmState::Raised, check.due_ms, std::nullopt}));
    }
    return fired;
  }

  IngestOutcome ingest(std::span<const std::uint8_t> raw, std::uint64_t received_at_ms,
                       int hops) {
    IngestOutcome out;
    out.alarms = advance_to(received_at_ms);

    auto decoded = decode(raw);
    if (!decoded.ok()) {
      ++stats_.frames_bad;
      ++stats_.decode_errors[std::string(to_string(decoded.error()))];
      out.error = decoded.error();
      return out;
    }
    const auto& p = decoded.value();
    auto it = devices_.find(p.source_addr);
    if (it == devices_.end()) {
      ++stats_.unknown_device;
      out.error = Errc::UnknownDevice;
      return out;
    }
    auto& dev = it->second;

    // a frame can be well-formed yet carry a code the device's table cannot
    // invert; discard it like any other bad frame instead of tearing down
    // the service
    auto temp = table_temperature(dev.profile.table, p.temp_code);
    if (!temp.ok()) {
      ++stats_.frames_bad;
      ++stats_.decode_errors[std::string(to_string(temp.error()))];
      out.error = temp.error();
      return out;
    }

    Reading r;
    r.device_addr = p.source_addr;
    r.sequence = p.sequence;
    r.device_timestamp_s = p.timestamp_s;
    r.received_at_s = static_cast<std::uint32_t>(received_at_ms / 1000);
    r.temp_code = p.temp_code;
    r.temp_c = temp.value();
    r.oil_state = (p.status_flags & kFlagOilLow) ? OilState::Low : OilState::Normal;
    r.battery_mv = p.battery_mv;
    r.hops = hops;

    ++stats_.frames_ok;
    track_sequence(dev, p.sequence);
    dev.readings_seen += 1;
    dev.last_reading = r;
    dev.last_rx_ms = received_at_ms;
    readings_.push_back(r);
    persist_reading(r);

    lcd_ = render_lcd(r);  // latest reading wins across devices

    for (auto& e : alarm_edges(dev, r, p.status_flags, received_at_ms))
      out.alarms.push_back(e);
    schedule_offline_check(r.device_addr, received_at_ms);

    out.reading = r;
    return out;
  }

  const LcdBuffer& lcd() const { return lcd_; }
  const Stats& stats() const { return stats_; }
  const std::vector<Reading>& readings() const { return readings_; }
  const std::vector<AlarmEvent>& alarm_log() const { return alarms_; }

  std::uint64_t gap_frames(std::uint64_t addr) const {
    auto it = devices_.find(addr);
    return it == devices_.end() ? 0 : it->second.gap_frames;
  }

  // Read-only query surface; also the wire handler for the local service.
  nlohmann::ordered_json query(const nlohmann::json& request) const {
    if (!request.is_object() || !request.contains("kind") || !request["kind"].is_string())
      throw Error(Errc::MalformedQuery, "request must be {\"kind\": ...}");
    const std::string kind = request["kind"].get<std::string>();
    if (kind == "devices") return query_devices();
    if (kind == "readings") return query_readings(request);
    if (kind == "alarms") return query_alarms(request);
    if (kind == "stats") return query_stats();
    throw Error(Errc::MalformedQuery, "unknown query kind: " + kind);
  }

  // Rebuilds reading counts and last-known per-device state from the logs.
  void restore_from_logs(std::istream& readings_log, std::istream& alarms_log) {
    std::string line;
    while (std::getline(readings_log, line)) {
      if (line.empty()) continue;
      Reading r = reading_from_json(nlohmann::json::parse(line));
      auto it = devices_.find(r.device_addr);
      if (it == devices_.end()) continue;
      auto& dev = it->second;
      ++stats_.frames_ok;
      track_sequence(dev, r.sequence);
      dev.readings_seen += 1;
      dev.last_reading = r;
      dev.last_rx_ms = static_cast<std::uint64_t>(r.received_at_s) * 1000;
      readings_.push_back(r);
      lcd_ = render_lcd(r);
    }
    while (std::getline(alarms_log, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      AlarmEvent e;
      e.device_addr = j.at("addr").get<std::uint64_t>();
      const std::string kind = j.at("kind").get<std::string>();
      e.kind = kind == "TempHigh" ? AlarmKind::TempHigh
               : kind == "OilLow" ? AlarmKind::OilLow
                                  : AlarmKind::DeviceOffline;
      e.state = j.at("state").get<std::string>() == "Raised" ? AlarmState::Raised
                                                             : AlarmState::Cleared;
      e.at_ms = static_cast<std::uint64_t>(j.at("t_s").get<double>() * 1000.0 + 0.5);
      if (j.contains("reading")) e.snapshot = reading_from_json(j["reading"]);
      alarms_.push_back(e);
      e.state == AlarmState::Raised ? ++stats_.alarms_raised : ++stats_.alarms_cleared;
      auto it = devices_.find(e.device_addr);
      if (it == devices_.end()) continue;
      const bool raised = e.state == AlarmState::Raised;
      switch (e.kind) {
        case AlarmKind::TempHigh: it->second.temp_high_raised = raised; break;
        case AlarmKind::OilLow: it->second.oil_low_raised = raised; break;
        case AlarmKind::DeviceOffline: it->second.offline_raised = raised; break;
      }
    }
  }

 private:
  struct PerDevice {
    DeviceProfile profile;
    std::uint64_t readings_seen = 0;
    std::optional<Reading> last_reading;
    std::optional<std::uint64_t> last_rx_ms;
    std::optional<std::uint8_t> last_seq;
    std::uint64_t gap_frames = 0;
    bool temp_high_raised = false;
    bool oil_low_raised = false;
    bool offline_raised = false;
  };

  struct OfflineCheck {
    std::uint64_t due_ms;
    std::uint64_t addr;
    std::uint64_t readings_at_schedule;
    bool operator>(const OfflineCheck& o) const {
      return due_ms != o.due_ms ? due_ms > o.due_ms : addr > o.addr;
    }
  };

  void schedule_offline_check(std::uint64_t addr, std::uint64_t from_ms) {
    const auto& dev = devices_.at(addr);
    const auto silence_ms = static_cast<std::uint64_t>(
        cfg_.offline_multiplier * dev.profile.sample_period_s * 1000.0);
    checks_.push({from_ms + silence_ms, addr, dev.readings_seen});
  }

  void track_sequence(PerDevice& dev, std::uint8_t seq) {
    // modular distance from the previous sequence; devices count from 1
    const std::uint8_t prev = dev.last_seq.value_or(0);
    const std::uint8_t dist = static_cast<std::uint8_t>(seq - prev);
    if (dist > 1) dev.gap_frames += dist - 1;
    dev.last_seq = seq;
  }

  std::vector<AlarmEvent> alarm_edges(PerDevice& dev, const Reading& r,
                                      std::uint8_t flags, std::uint64_t t_ms) {
    std::vector<AlarmEvent> events;
    if (dev.offline_raised) {
      dev.offline_raised = false;
      events.push_back(emit_alarm(
          {r.device_addr, AlarmKind::DeviceOffline, AlarmState::Cleared, t_ms, std::nullopt}));
    }
    if (!dev.temp_high_raised && (flags & kFlagTempHigh)) {
      dev.temp_high_raised = true;
      events.push_back(
          emit_alarm({r.device_addr, AlarmKind::TempHigh, AlarmState::Raised, t_ms, r}));
    } else if (dev.temp_high_raised &&
               r.temp_c <= dev.profile.temp_high_c - cfg_.hysteresis_c) {
      dev.temp_high_raised = false;
      events.push_back(
          emit_alarm({r.device_addr, AlarmKind::TempHigh, AlarmState::Cleared, t_ms, r}));
    }
    if (!dev.oil_low_raised && r.oil_state == OilState::Low) {
      dev.oil_low_raised = true;
      events.push_back(
          emit_alarm({r.device_addr, AlarmKind::OilLow, AlarmState::Raised, t_ms, r}));
    } else if (dev.oil_low_raised && r.oil_state == OilState::Normal) {
      dev.oil_low_raised = false;
      events.push_back(
          emit_alarm({r.device_addr, AlarmKind::OilLow, AlarmState::Cleared, t_ms, r}));
    }
    return events;
  }

  AlarmEvent emit_alarm(AlarmEvent e) {
    e.state == AlarmState::Raised ? ++stats_.alarms_raised : ++stats_.alarms_cleared;
    alarms_.push_back(e);
    if (alarms_out_) {
      *alarms_out_ << alarm_to_json(e).dump() << '\n';
      alarms_out_->flush();
    }
    return e;
  }

  void persist_reading(const Reading& r) {
    if (!readings_out_) return;
    *readings_out_ << reading_to_json(r).dump() << '\n';
    readings_out_->flush();
  }

  nlohmann::ordered_json query_devices() const {
    auto rows = nlohmann::ordered_json::array();
    for (const auto& [addr, dev] : devices_) {
      nlohmann::ordered_json row{
          {"addr", addr},
          {"readings", dev.readings_seen},
          {"gap_frames", dev.gap_frames},
          {"offline", dev.offline_raised},
      };
      if (dev.last_rx_ms)
        row["last_seen_s"] = static_cast<double>(*dev.last_rx_ms) / 1000.0;
      else
        row["last_seen_s"] = nullptr;
      row["last"] = dev.last_reading ? reading_to_json(*dev.last_reading)
                                     : nlohmann::ordered_json(nullptr);
      rows.push_back(row);
    }
    return rows;
  }

  nlohmann::ordered_json query_readings(const nlohmann::json& request) const {
    if (!request.contains("addr") || !request["addr"].is_number())
      throw Error(Errc::MalformedQuery, "readings query needs a numeric addr");
    const auto addr = request["addr"].get<std::uint64_t>();
    if (!devices_.count(addr))
      throw Error(Errc::UnknownDevice, "no configured device with that address");
    const double from_s = request.value("from_s", 0.0);
    const double to_s = request.value("to_s", 4294967295.0);
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : readings_) {
      if (r.device_addr != addr) continue;
      if (r.received_at_s < from_s || r.received_at_s > to_s) continue;
      rows.push_back(reading_to_json(r));
    }
    return rows;
  }

  nlohmann::ordered_json query_alarms(const nlohmann::json& request) const {
    const double since_s = request.value("since_s", 0.0);
    auto rows = nlohmann::ordered_json::array();
    for (const auto& e : alarms_) {
      if (static_cast<double>(e.at_ms) / 1000.0 < since_s) continue;
      rows.push_back(alarm_to_json(e));
    }
    return rows;
  }

  nlohmann::ordered_json query_stats() const {
    nlohmann::ordered_json gaps = nlohmann::ordered_json::object();
    for (const auto& [addr, dev] : devices_) gaps[std::to_string(addr)] = dev.gap_frames;
    return nlohmann::ordered_json{
        {"frames_ok", stats_.frames_ok},
        {"frames_bad", stats_.frames_bad},
        {"unknown_device", stats_.unknown_device},
        {"alarms_raised", stats_.alarms_raised},
        {"alarms_cleared", stats_.alarms_cleared},
        {"readings", readings_.size()},
        {"decode_errors", stats_.decode_errors},
        {"gap_frames", gaps},
    };
  }

  CoordinatorConfig cfg_;
  std::map<std::uint64_t, PerDevice> devices_;
  std::vector<Reading> readings_;
  std::vector<AlarmEvent> alarms_;
  Stats stats_;
  LcdBuffer lcd_;
  std::priority_queue<OfflineCheck, std::vector<OfflineCheck>, std::greater<>> checks_;
  std::ostream* readings_out_ = nullptr;
  std::ostream* alarms_out_ = nullptr;
};

}  // namespace tfmon
