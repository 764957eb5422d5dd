// tfmon: run transformer-telemetry simulations, serve the coordinator,
// calibrate signal chains, replay captures, and inspect run artifacts.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tfmon/calibration.hpp"
#include "tfmon/coordinator.hpp"
#include "tfmon/query_service.hpp"
#include "tfmon/scenario.hpp"
#include "tfmon/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
};

tfmon::ScenarioConfig load_config(const CommonOpts& opts) {
  if (opts.config_path.empty())
    throw tfmon::Error(tfmon::Errc::InvalidConfig,
                       "no config file given (use --config or TFMON_CONFIG)");
  return tfmon::load_scenario(opts.config_path);
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw tfmon::Error(tfmon::Errc::IoError, "cannot write " + path.string());
  for (const auto& line : lines) out << line << '\n';
}

ordered_json snapshot_to_json(const tfmon::DeviceSnapshot& snap) {
  auto ring = ordered_json::array();
  for (const auto& rec : snap.ring) ring.push_back(tfmon::detail::record_to_json(rec));
  return ordered_json{{"addr", snap.addr}, {"sequence", snap.sequence}, {"ring", ring}};
}

ordered_json stats_to_json(const tfmon::Coordinator::Stats& stats) {
  return ordered_json{{"frames_ok", stats.frames_ok},
                      {"frames_bad", stats.frames_bad},
                      {"unknown_device", stats.unknown_device},
                      {"alarms_raised", stats.alarms_raised},
                      {"alarms_cleared", stats.alarms_cleared},
                      {"decode_errors", stats.decode_errors}};
}

int cmd_simulate(const CommonOpts& opts, std::uint64_t* seed_override,
                 double* duration_override, const std::string& trace_name) {
  auto cfg = load_config(opts);
  if (seed_override) cfg.seed = *seed_override;
  if (duration_override) {
    if (*duration_override <= 0.0)
      throw tfmon::Error(tfmon::Errc::InvalidConfig, "--duration must be > 0");
    cfg.duration_s = *duration_override;
  }

  auto run = tfmon::run_simulation(cfg);

  const fs::path out(opts.out_dir);
  write_lines(out / trace_name, run.trace_lines);
  write_lines(out / cfg.coordinator.readings_log, run.reading_lines);
  write_lines(out / cfg.coordinator.alarms_log, run.alarm_lines);

  ordered_json state{{"schema", "tfmon-state/1"}};
  auto devices = ordered_json::array();
  std::uint64_t dropped_total = 0;
  auto per_device = ordered_json::object();
  for (const auto& snap : run.device_snapshots) devices.push_back(snapshot_to_json(snap));
  for (const auto& [addr, counters] : run.per_device) {
    dropped_total += counters.dropped;
    per_device[std::to_string(addr)] = {{"samples", counters.samples},
                                        {"delivered", counters.delivered},
                                        {"dropped", counters.dropped},
                                        {"gap_frames", run.coordinator_gaps.at(addr)}};
  }
  state["devices"] = devices;
  state["per_device"] = per_device;
  state["stats"] = stats_to_json(run.stats);
  state["lcd"] = {run.final_lcd.rows[0], run.final_lcd.rows[1]};
  state["logs"] = {{"readings", cfg.coordinator.readings_log},
                   {"alarms", cfg.coordinator.alarms_log}};
  {
    std::ofstream sout(out / "state.json", std::ios::trunc);
    sout << state.dump(2) << '\n';
  }

  std::cout << "simulated " << cfg.duration_s << " s, seed " << cfg.seed << "\n"
            << "frames ok:      " << run.stats.frames_ok << "\n"
            << "frames dropped: " << dropped_total << "\n"
            << "frames bad:     " << run.stats.frames_bad << "\n"
            << "alarms:         " << run.stats.alarms_raised << " raised, "
            << run.stats.alarms_cleared << " cleared\n"
            << "trace:          " << (out / trace_name).string() << "\n"
            << "readings log:   " << (out / cfg.coordinator.readings_log).string() << "\n"
            << "alarms log:     " << (out / cfg.coordinator.alarms_log).string() << "\n";
  return kExitOk;
}

int cmd_serve(const CommonOpts& opts, const std::string& listen,
              const std::string& frame_listen, const std::string& frames_file,
              bool frames_stdin) {
  auto cfg = load_config(opts);

  auto split_hostport = [](const std::string& s, std::uint16_t fallback_port) {
    auto colon = s.rfind(':');
    if (colon == std::string::npos)
      return std::pair<std::string, std::uint16_t>(s, fallback_port);
    const std::string port_text = s.substr(colon + 1);
    if (port_text.empty() || port_text.find_first_not_of("0123456789") != std::string::npos)
      throw tfmon::Error(tfmon::Errc::InvalidConfig, "bad port in listen address: " + s);
    const long port = std::stol(port_text);
    if (port < 1 || port > 65535)
      throw tfmon::Error(tfmon::Errc::InvalidConfig, "port out of range: " + s);
    return std::pair<std::string, std::uint16_t>(s.substr(0, colon),
                                                 static_cast<std::uint16_t>(port));
  };
  auto [host, qport] = split_hostport(listen, 7600);
  auto [fhost, fport] = split_hostport(frame_listen, 7601);
  if (fhost != host)
    throw tfmon::Error(tfmon::Errc::InvalidConfig, "query and frame ports must share a host");

  tfmon::Coordinator coordinator(
      tfmon::CoordinatorConfig{cfg.coordinator.hysteresis_c, cfg.coordinator.offline_multiplier},
      tfmon::device_profiles(cfg));

  const fs::path out(opts.out_dir);
  fs::create_directories(out);
  const auto readings_path = out / cfg.coordinator.readings_log;
  const auto alarms_path = out / cfg.coordinator.alarms_log;

  // pick up where a previous service left off: the logs are the state
  if (fs::exists(readings_path) || fs::exists(alarms_path)) {
    std::ifstream rin(readings_path), ain(alarms_path);
    coordinator.restore_from_logs(rin, ain);
    if (coordinator.stats().frames_ok > 0)
      std::cout << "restored " << coordinator.stats().frames_ok << " readings from "
                << readings_path.string() << "\n";
  }

  std::ofstream readings_log(readings_path, std::ios::app);
  std::ofstream alarms_log(alarms_path, std::ios::app);
  coordinator.attach_logs(&readings_log, &alarms_log);

  tfmon::QueryServer server(coordinator, {host, qport, fport});

  if (!frames_file.empty()) {
    std::ifstream in(frames_file, std::ios::binary);
    if (!in) throw tfmon::Error(tfmon::Errc::IoError, "cannot open " + frames_file);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    server.ingest_stream(bytes);
  }
  if (frames_stdin) {
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(std::cin)),
                                    std::istreambuf_iterator<char>());
    server.ingest_stream(bytes);
  }

  std::cout << "serving queries on " << host << ":" << qport << ", frames on " << host << ":"
            << fport << "\n";
  std::cout.flush();
  server.run();
  readings_log.flush();
  alarms_log.flush();
  std::cout << "shutdown: " << coordinator.stats().frames_ok << " frames ok, "
            << coordinator.stats().frames_bad << " bad\n";
  return kExitOk;
}

int cmd_calibrate(const CommonOpts& opts, double from_c, double to_c, double step_c,
                  const std::string& transport, double tolerance, const std::string& csv_path,
                  const std::string& table_path) {
  // chain comes from the first configured device, or library defaults when
  // no config was given
  tfmon::SignalChain chain;
  if (!opts.config_path.empty()) {
    auto cfg = load_config(opts);
    if (cfg.devices.empty())
      throw tfmon::Error(tfmon::Errc::InvalidConfig, "config has no devices to calibrate");
    chain = cfg.devices[0].config.chain;
  }

  auto temps = tfmon::sweep_temperatures(from_c, to_c, step_c);
  tfmon::SweepResult sweep;
  if (transport == "ideal") {
    sweep = tfmon::run_sweep(temps, chain, tfmon::IdealTransport{});
  } else if (transport == "simulated") {
    auto topo = tfmon::build_topology(
        {{1, tfmon::NodeRole::Coordinator, 0, 0}, {2, tfmon::NodeRole::EndDevice, 500, 0}});
    tfmon::SimRng rng(1);
    tfmon::SimulatedTransport link{&topo, 2, tfmon::RadioModel{}, &rng};
    sweep = tfmon::run_sweep(temps, chain, link);
  } else {
    throw tfmon::Error(tfmon::Errc::InvalidConfig, "transport must be ideal or simulated");
  }

  auto table = tfmon::build_table(sweep.points);
  auto check = tfmon::verify_constancy(table, tolerance);

  if (!csv_path.empty()) {
    std::ofstream csv(csv_path, std::ios::trunc);
    csv << tfmon::to_csv(sweep.points);
  }
  if (!table_path.empty()) {
    std::ofstream tout(table_path, std::ios::trunc);
    tout << tfmon::to_json(table).dump(2) << '\n';
  }

  std::cout << "sweep " << from_c << ".." << to_c << " C step " << step_c << " ("
            << sweep.points.size() << " points";
  if (!sweep.missing_temps.empty())
    std::cout << ", " << sweep.missing_temps.size() << " dropped";
  std::cout << ")\n"
            << "slope:        " << table.slope_codes_per_volt << " codes/V\n"
            << "intercept:    " << table.intercept_codes << " codes\n"
            << "max residual: " << table.max_residual_codes << " codes\n"
            << "constancy:    " << (check.pass ? "PASS" : "FAIL") << " (tolerance " << tolerance
            << ")\n";

  // with no amplifier offset the relation passes through the origin, so
  // code/volts itself must stay constant
  bool ratio_ok = true;
  if (chain.amplifier.offset_volts == 0.0) {
    const double spread = tfmon::ratio_spread(sweep.points, 0.5);
    ratio_ok = spread <= 0.01;
    std::cout << "ratio spread: " << spread * 100.0 << "% over points >= 0.5 V ("
              << (ratio_ok ? "PASS" : "FAIL") << ", limit 1%)\n";
  }

  if (!check.pass) {
    std::cout << "worst point:  " << check.worst_point.set_temp_c << " C, residual "
              << check.worst_residual << "\n";
  }
  return (check.pass && ratio_ok) ? kExitOk : kExitRuntime;
}

int cmd_replay(const CommonOpts& opts, const std::string& trace_path) {
  auto cfg = load_config(opts);
  std::ifstream in(trace_path);
  if (!in) throw tfmon::Error(tfmon::Errc::IoError, "cannot open trace: " + trace_path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);

  auto replay = tfmon::replay_trace(lines, cfg);
  const fs::path out(opts.out_dir);
  write_lines(out / cfg.coordinator.readings_log, replay.reading_lines);
  write_lines(out / cfg.coordinator.alarms_log, replay.alarm_lines);
  std::cout << "replayed " << lines.size() << " trace events: " << replay.stats.frames_ok
            << " frames ok, " << replay.stats.frames_bad << " bad\n";
  return kExitOk;
}

int cmd_inspect(const std::string& run_dir, bool rings, bool logs, bool stats) {
  const fs::path dir(run_dir);
  const bool all = !rings && !logs && !stats;

  ordered_json state;
  if (fs::exists(dir / "state.json")) {
    std::ifstream in(dir / "state.json");
    in >> state;
  }

  if (all || rings) {
    if (state.contains("devices")) {
      for (const auto& dev : state["devices"]) {
        for (const auto& rec : dev["ring"]) {
          ordered_json line{{"type", "ring"}, {"addr", dev["addr"]}};
          for (auto it = rec.begin(); it != rec.end(); ++it) line[it.key()] = it.value();
          std::cout << line.dump() << '\n';
        }
      }
    }
  }
  if (all || logs) {
    std::string readings_name = "readings.jsonl";
    std::string alarms_name = "alarms.jsonl";
    if (state.contains("logs")) {
      readings_name = state["logs"].value("readings", readings_name);
      alarms_name = state["logs"].value("alarms", alarms_name);
    }
    for (const std::string& name : {readings_name, alarms_name}) {
      std::ifstream in(dir / name);
      std::string line;
      const std::string type = name == readings_name ? "reading" : "alarm";
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        ordered_json entry{{"type", type}};
        auto j = json::parse(line);
        for (auto it = j.begin(); it != j.end(); ++it) entry[it.key()] = it.value();
        std::cout << entry.dump() << '\n';
      }
    }
  }
  if (all || stats) {
    ordered_json line{{"type", "stats"}};
    if (state.contains("stats")) {
      for (auto it = state["stats"].begin(); it != state["stats"].end(); ++it)
        line[it.key()] = it.value();
      line["per_device"] = state.value("per_device", ordered_json::object());
    } else {
      line["frames_ok"] = 0;
      line["frames_bad"] = 0;
      line["unknown_device"] = 0;
      line["alarms_raised"] = 0;
      line["alarms_cleared"] = 0;
      line["per_device"] = ordered_json::object();
    }
    std::cout << line.dump() << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transformer telemetry simulator and coordinator service"};
  app.require_subcommand(1);

  CommonOpts common;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "scenario config file")
        ->envname("TFMON_CONFIG");
    sub->add_option("--out", common.out_dir, "output directory for logs and artifacts");
  };

  // simulate
  auto* simulate = app.add_subcommand("simulate", "run a scenario to completion");
  add_common(simulate);
  std::uint64_t seed_override = 0;
  double duration_override = 0.0;
  std::string trace_name = "trace.jsonl";
  auto* seed_opt = simulate->add_option("--seed", seed_override, "override the scenario seed");
  auto* dur_opt =
      simulate->add_option("--duration", duration_override, "override duration_s");
  simulate->add_option("--trace", trace_name, "trace file name inside --out");

  // serve
  auto* serve = app.add_subcommand("serve", "run the coordinator as a local service");
  add_common(serve);
  std::string listen = "127.0.0.1:7600";
  std::string frame_listen = "127.0.0.1:7601";
  std::string frames_file;
  bool frames_stdin = false;
  serve->add_option("--listen", listen, "host:port for length-prefixed JSON queries");
  serve->add_option("--frame-listen", frame_listen, "host:port for raw telemetry frames");
  serve->add_option("--frames-file", frames_file, "ingest a frame capture file at startup");
  serve->add_flag("--frames-stdin", frames_stdin, "ingest a frame capture from stdin");

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "run a calibration sweep and fit");
  add_common(calibrate);
  double from_c = -40.0, to_c = 120.0, step_c = 10.0, tolerance = 1.0;
  std::string transport = "ideal", csv_path, table_path;
  calibrate->add_option("--from", from_c, "sweep start, deg C");
  calibrate->add_option("--to", to_c, "sweep end, deg C");
  calibrate->add_option("--step", step_c, "sweep step, deg C");
  calibrate->add_option("--transport", transport, "ideal | simulated");
  calibrate->add_option("--tolerance", tolerance, "constancy tolerance in codes");
  calibrate->add_option("--csv", csv_path, "write sweep points as CSV");
  calibrate->add_option("--table", table_path, "write the fitted table as JSON");

  // replay
  auto* replay = app.add_subcommand("replay", "re-ingest a recorded trace");
  add_common(replay);
  std::string trace_path = "trace.jsonl";
  replay->add_option("--trace", trace_path, "trace file to replay");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "dump run artifacts as JSON lines");
  std::string run_dir = ".";
  bool rings = false, logs = false, stats = false;
  inspect->add_option("--run", run_dir, "run directory (simulate --out)");
  inspect->add_flag("--rings", rings, "device ring buffers only");
  inspect->add_flag("--logs", logs, "reading/alarm logs only");
  inspect->add_flag("--stats", stats, "counters only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (simulate->parsed())
      return cmd_simulate(common, seed_opt->count() ? &seed_override : nullptr,
                          dur_opt->count() ? &duration_override : nullptr, trace_name);
    if (serve->parsed())
      return cmd_serve(common, listen, frame_listen, frames_file, frames_stdin);
    if (calibrate->parsed())
      return cmd_calibrate(common, from_c, to_c, step_c, transport, tolerance, csv_path,
                           table_path);
    if (replay->parsed()) return cmd_replay(common, trace_path);
    if (inspect->parsed()) return cmd_inspect(run_dir, rings, logs, stats);
  } catch (const tfmon::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case tfmon::Errc::InvalidConfig:
      case tfmon::Errc::NoCoordinator:
      case tfmon::Errc::MultipleCoordinators:
      case tfmon::Errc::DuplicateNodeId:
        return kExitConfig;
      default:
        return kExitRuntime;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
