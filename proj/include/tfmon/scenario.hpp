#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfmon/coordinator.hpp"
#include "tfmon/end_device.hpp"
#include "tfmon/network_sim.hpp"

// Declarative scenario file: one JSON document describing topology, radio,
// devices (with their full analog chains and environment profiles) and the
// coordinator. Everything the run needs flows from here plus the seed.

namespace tfmon {

inline constexpr std::string_view kScenarioSchema = "tfmon-scenario/1";

// Piecewise-constant environment profile: value holds from each step's time
// until the next step.
struct StepProfile {
  struct Step {
    std::uint64_t at_ms = 0;
    double value = 0.0;
    bool operator==(const Step&) const = default;
  };
  std::vector<Step> steps;

  double value_at(std::uint64_t t_ms) const {
    if (steps.empty()) throw Error(Errc::InvalidConfig, "environment profile has no steps");
    double v = steps.front().value;
    for (const auto& s : steps) {
      if (s.at_ms > t_ms) break;
      v = s.value;
    }
    return v;
  }

  static StepProfile constant(double value) { return {{Step{0, value}}}; }

  bool operator==(const StepProfile&) const = default;
};

struct DeviceScenario {
  DeviceConfig config;
  std::string calibration_table_path;  // empty -> table provisioned at init
  StepProfile temp_c = StepProfile::constant(70.0);
  StepProfile oil_level_mm = StepProfile::constant(150.0);

  bool operator==(const DeviceScenario&) const = default;
};

struct CoordinatorScenario {
  std::uint64_t node_id = 0;
  double hysteresis_c = 2.0;
  double offline_multiplier = 3.0;
  std::string readings_log = "readings.jsonl";
  std::string alarms_log = "alarms.jsonl";

  bool operator==(const CoordinatorScenario&) const = default;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  double duration_s = 600.0;
  double max_range_m = 1000.0;
  std::vector<Node> nodes;
  RadioModel radio;
  std::vector<DeviceScenario> devices;
  CoordinatorScenario coordinator;

  std::uint64_t duration_ms() const {
    return static_cast<std::uint64_t>(duration_s * 1000.0 + 0.5);
  }

  bool operator==(const ScenarioConfig&) const = default;
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& where, const std::string& what) {
  throw Error(Errc::InvalidConfig, where + ": " + what);
}

inline double require_number(const nlohmann::json& j, const std::string& key,
                             const std::string& where) {
  if (!j.contains(key) || !j[key].is_number())
    config_error(where, "missing or non-numeric field '" + key + "'");
  return j[key].get<double>();
}

inline std::uint64_t require_address(const nlohmann::json& j, const std::string& key,
                                     const std::string& where) {
  if (j.contains(key)) {
    const auto& v = j[key];
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
      return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  config_error(where, "missing unsigned '" + key + "'");
}

inline StepProfile profile_from_json(const nlohmann::json& j, const std::string& where) {
  StepProfile p;
  if (j.is_number()) return StepProfile::constant(j.get<double>());
  if (!j.is_array() || j.empty())
    config_error(where, "expected a number or a non-empty array of {at_s, value}");
  for (const auto& sj : j) {
    if (!sj.is_object() || !sj.contains("at_s") || !sj.contains("value"))
      config_error(where, "each step needs at_s and value");
    StepProfile::Step s;
    s.at_ms = static_cast<std::uint64_t>(sj["at_s"].get<double>() * 1000.0 + 0.5);
    s.value = sj["value"].get<double>();
    if (!p.steps.empty() && s.at_ms <= p.steps.back().at_ms)
      config_error(where, "step times must be strictly increasing");
    p.steps.push_back(s);
  }
  return p;
}

inline nlohmann::ordered_json profile_to_json(const StepProfile& p) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : p.steps)
    arr.push_back({{"at_s", static_cast<double>(s.at_ms) / 1000.0}, {"value", s.value}});
  return arr;
}

inline NodeRole role_from_string(const std::string& s, const std::string& where) {
  if (s == "coordinator") return NodeRole::Coordinator;
  if (s == "router") return NodeRole::Router;
  if (s == "end_device") return NodeRole::EndDevice;
  config_error(where, "unknown role '" + s + "'");
}

}  // namespace detail

inline ScenarioConfig scenario_from_json(const nlohmann::json& j,
                                         const std::filesystem::path& base_dir = ".") {
  using detail::config_error;
  if (!j.is_object()) config_error("scenario", "top level must be an object");
  if (j.value("schema", "") != kScenarioSchema)
    config_error("schema", "expected \"" + std::string(kScenarioSchema) + "\"");

  ScenarioConfig cfg;
  cfg.seed = j.value("seed", std::uint64_t{1});
  cfg.duration_s = j.value("duration_s", 600.0);
  if (cfg.duration_s <= 0.0) config_error("duration_s", "must be > 0");

  if (!j.contains("topology") || !j["topology"].is_object())
    config_error("topology", "missing section");
  const auto& tj = j["topology"];
  cfg.max_range_m = tj.value("max_range_m", 1000.0);
  if (!tj.contains("nodes") || !tj["nodes"].is_array() || tj["nodes"].empty())
    config_error("topology.nodes", "need at least one node");
  for (std::size_t i = 0; i < tj["nodes"].size(); ++i) {
    const auto& nj = tj["nodes"][i];
    const std::string where = "topology.nodes[" + std::to_string(i) + "]";
    Node n;
    n.id = detail::require_address(nj, "id", where);
    n.role = detail::role_from_string(nj.value("role", "end_device"), where);
    n.x_m = detail::require_number(nj, "x_m", where);
    n.y_m = detail::require_number(nj, "y_m", where);
    cfg.nodes.push_back(n);
  }

  if (j.contains("radio")) {
    const auto& rj = j["radio"];
    cfg.radio.per_link_loss_prob = rj.value("loss_prob", 0.0);
    cfg.radio.max_retries = rj.value("max_retries", 3);
    cfg.radio.ack_timeout_ms = rj.value("ack_timeout_ms", 50u);
    cfg.radio.tx_duration_ms = rj.value("tx_duration_ms", 5u);
    validate(cfg.radio);
  }

  if (!j.contains("devices") || !j["devices"].is_array() || j["devices"].empty())
    config_error("devices", "need at least one device");
  for (std::size_t i = 0; i < j["devices"].size(); ++i) {
    const auto& dj = j["devices"][i];
    const std::string where = "devices[" + std::to_string(i) + "]";
    DeviceScenario dev;
    auto& c = dev.config;
    c.device_addr = detail::require_address(dj, "addr", where);
    c.sample_period_s = dj.value("sample_period_s", 60.0);
    c.temp_high_c = dj.value("temp_high_c", 90.0);
    c.oil_low_mm = dj.value("oil_low_mm", 100.0);
    c.adc_channel_temp = dj.value("adc_channel_temp", 0);
    c.ring_capacity = dj.value("ring_capacity", std::size_t{64});
    if (dj.contains("chain")) {
      const auto& cj = dj["chain"];
      if (cj.contains("rtd")) {
        const auto& rj = cj["rtd"];
        c.chain.rtd.r0_ohms = rj.value("r0_ohms", 100.0);
        c.chain.rtd.coeff_a = rj.value("coeff_a", 3.9083e-3);
        c.chain.rtd.coeff_b = rj.value("coeff_b", -5.775e-7);
        if (rj.contains("valid_range_c")) {
          const auto& vr = rj["valid_range_c"];
          if (!vr.is_array() || vr.size() != 2)
            config_error(where + ".chain.rtd.valid_range_c", "expected [min, max]");
          c.chain.rtd.valid_min_c = vr[0].get<double>();
          c.chain.rtd.valid_max_c = vr[1].get<double>();
        }
      }
      if (cj.contains("bridge")) {
        const auto& bj = cj["bridge"];
        c.chain.bridge.excitation_volts = bj.value("excitation_volts", 5.0);
        c.chain.bridge.r_ref_ohms = bj.value("r_ref_ohms", 100.0);
        c.chain.bridge.half_ratio = bj.value("half_ratio", 0.5);
      }
      if (cj.contains("amplifier")) {
        const auto& aj = cj["amplifier"];
        c.chain.amplifier.gain = aj.value("gain", 6.0);
        c.chain.amplifier.offset_volts = aj.value("offset_volts", 1.8);
        c.chain.amplifier.rail_low = aj.value("rail_low", 0.0);
        c.chain.amplifier.rail_high = aj.value("rail_high", 5.0);
      }
      if (cj.contains("adc")) {
        const auto& aj = cj["adc"];
        c.chain.adc.resolution_bits = aj.value("resolution_bits", 10);
        c.chain.adc.vref_volts = aj.value("vref_volts", 5.0);
        c.chain.adc.channel_count = aj.value("channel_count", 8);
      }
    }
    if (dj.contains("battery")) {
      const auto& bj = dj["battery"];
      c.battery.capacity_mah = bj.value("capacity_mah", 1000.0);
      c.battery.active_current_ma = bj.value("active_current_ma", 40.0);
      c.battery.sleep_current_ma = bj.value("sleep_current_ma", 0.01);
      c.battery.duty_cycle = bj.value("duty_cycle", 0.01);
    }
    if (dj.contains("calibration_table")) {
      dev.calibration_table_path = dj["calibration_table"].get<std::string>();
      const auto path = base_dir / dev.calibration_table_path;
      if (!std::filesystem::exists(path))
        config_error(where + ".calibration_table", "file not found: " + path.string());
      c.table = load_table(path.string());
    }
    if (dj.contains("environment")) {
      const auto& ej = dj["environment"];
      if (ej.contains("temp_c"))
        dev.temp_c = detail::profile_from_json(ej["temp_c"], where + ".environment.temp_c");
      if (ej.contains("oil_level_mm"))
        dev.oil_level_mm =
            detail::profile_from_json(ej["oil_level_mm"], where + ".environment.oil_level_mm");
    }
    cfg.devices.push_back(std::move(dev));
  }

  if (j.contains("coordinator")) {
    const auto& cj = j["coordinator"];
    cfg.coordinator.node_id = cj.value("node_id", std::uint64_t{0});
    cfg.coordinator.hysteresis_c = cj.value("hysteresis_c", 2.0);
    cfg.coordinator.offline_multiplier = cj.value("offline_multiplier", 3.0);
    cfg.coordinator.readings_log = cj.value("readings_log", "readings.jsonl");
    cfg.coordinator.alarms_log = cj.value("alarms_log", "alarms.jsonl");
  }

  // cross-references: topology must build, devices must be end-device nodes
  auto topology = build_topology(cfg.nodes, cfg.max_range_m);
  if (cfg.coordinator.node_id == 0)
    cfg.coordinator.node_id = topology.coordinator_id();
  else if (cfg.coordinator.node_id != topology.coordinator_id())
    config_error("coordinator.node_id", "does not match the topology's coordinator node");
  for (const auto& dev : cfg.devices) {
    if (!topology.has_node(dev.config.device_addr))
      config_error("devices", "addr " + std::to_string(dev.config.device_addr) +
                                  " has no topology node");
    if (topology.node(dev.config.device_addr).role != NodeRole::EndDevice)
      config_error("devices", "addr " + std::to_string(dev.config.device_addr) +
                                  " must map to an end_device node");
  }
  return cfg;
}

inline nlohmann::ordered_json to_json(const ScenarioConfig& cfg) {
  nlohmann::ordered_json j;
  j["schema"] = kScenarioSchema;
  j["seed"] = cfg.seed;
  j["duration_s"] = cfg.duration_s;

  auto nodes = nlohmann::ordered_json::array();
  for (const auto& n : cfg.nodes) {
    nodes.push_back({{"id", n.id},
                     {"role", std::string(to_string(n.role))},
                     {"x_m", n.x_m},
                     {"y_m", n.y_m}});
  }
  j["topology"] = {{"max_range_m", cfg.max_range_m}, {"nodes", nodes}};
  j["radio"] = {{"loss_prob", cfg.radio.per_link_loss_prob},
                {"max_retries", cfg.radio.max_retries},
                {"ack_timeout_ms", cfg.radio.ack_timeout_ms},
                {"tx_duration_ms", cfg.radio.tx_duration_ms}};

  auto devices = nlohmann::ordered_json::array();
  for (const auto& dev : cfg.devices) {
    const auto& c = dev.config;
    nlohmann::ordered_json dj{
        {"addr", c.device_addr},
        {"sample_period_s", c.sample_period_s},
        {"temp_high_c", c.temp_high_c},
        {"oil_low_mm", c.oil_low_mm},
        {"adc_channel_temp", c.adc_channel_temp},
        {"ring_capacity", c.ring_capacity},
        {"chain",
         {{"rtd",
           {{"r0_ohms", c.chain.rtd.r0_ohms},
            {"coeff_a", c.chain.rtd.coeff_a},
            {"coeff_b", c.chain.rtd.coeff_b},
            {"valid_range_c", {c.chain.rtd.valid_min_c, c.chain.rtd.valid_max_c}}}},
          {"bridge",
           {{"excitation_volts", c.chain.bridge.excitation_volts},
            {"r_ref_ohms", c.chain.bridge.r_ref_ohms},
            {"half_ratio", c.chain.bridge.half_ratio}}},
          {"amplifier",
           {{"gain", c.chain.amplifier.gain},
            {"offset_volts", c.chain.amplifier.offset_volts},
            {"rail_low", c.chain.amplifier.rail_low},
            {"rail_high", c.chain.amplifier.rail_high}}},
          {"adc",
           {{"resolution_bits", c.chain.adc.resolution_bits},
            {"vref_volts", c.chain.adc.vref_volts},
            {"channel_count", c.chain.adc.channel_count}}}}},
        {"battery",
         {{"capacity_mah", c.battery.capacity_mah},
          {"active_current_ma", c.battery.active_current_ma},
          {"sleep_current_ma", c.battery.sleep_current_ma},
          {"duty_cycle", c.battery.duty_cycle}}},
        {"environment",
         {{"temp_c", detail::profile_to_json(dev.temp_c)},
          {"oil_level_mm", detail::profile_to_json(dev.oil_level_mm)}}},
    };
    if (!dev.calibration_table_path.empty())
      dj["calibration_table"] = dev.calibration_table_path;
    devices.push_back(dj);
  }
  j["devices"] = devices;
  j["coordinator"] = {{"node_id", cfg.coordinator.node_id},
                      {"hysteresis_c", cfg.coordinator.hysteresis_c},
                      {"offline_multiplier", cfg.coordinator.offline_multiplier},
                      {"readings_log", cfg.coordinator.readings_log},
                      {"alarms_log", cfg.coordinator.alarms_log}};
  return j;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidConfig, "cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::InvalidConfig, path + ": " + e.what());
  }
  return scenario_from_json(j, std::filesystem::path(path).parent_path());
}

}  // namespace tfmon
