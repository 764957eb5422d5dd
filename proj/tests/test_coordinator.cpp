#include "tfmon/coordinator.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sstream>
#include <vector>

#include "tfmon/end_device.hpp"

using namespace tfmon;
using Catch::Matchers::WithinAbs;

namespace {

constexpr std::uint64_t kAddr = 0x13A200DEADBEEFULL;

DeviceConfig device_config() {
  DeviceConfig cfg;
  cfg.device_addr = kAddr;
  return cfg;
}

std::vector<DeviceProfile> profiles() {
  DeviceProfile p;
  p.addr = kAddr;
  p.temp_high_c = 90.0;
  p.sample_period_s = 60.0;
  p.table = default_table(SignalChain{});
  return {p};
}

std::vector<std::uint8_t> frame_for(DeviceState& dev, double temp_c, double oil_mm,
                                    std::uint64_t t_ms) {
  return dev.sample_cycle({temp_c, oil_mm}, t_ms).second;
}

}  // namespace

TEST_CASE("happy path ingestion persists one reading per frame") {
  Coordinator coord(CoordinatorConfig{}, profiles());
  auto dev = init_device(device_config());

  auto out = coord.ingest(frame_for(dev, 70.0, 150.0, 0), 5, 1);
  REQUIRE(out.reading.has_value());
  CHECK_FALSE(out.error.has_value());
  CHECK(coord.stats().frames_ok == 1);
  CHECK(coord.readings().size() == 1);

  const auto& r = *out.reading;
  CHECK(r.device_addr == kAddr);
  CHECK(r.sequence == 1);
  CHECK(r.hops == 1);
  CHECK_THAT(r.temp_c, WithinAbs(70.0, 0.5));
  CHECK(r.oil_state == OilState::Normal);
  CHECK(r.received_at_s >= r.device_timestamp_s);
}

TEST_CASE("coordinator temperature equals the device-side inversion") {
  Coordinator coord(CoordinatorConfig{}, profiles());
  auto dev = init_device(device_config());
  for (double t : {-30.0, 0.0, 25.0, 70.0, 95.0, 115.0}) {
    auto [rec, frame] = dev.sample_cycle({t, 150.0}, 0);
    auto out = coord.ingest(frame, 10, 1);
    REQUIRE(out.reading.has_value());
    CHECK(out.reading->temp_c == rec.temp_c_local);  // same table, same interpolation
  }
}

TEST_CASE("corrupted frame is counted and discarded") {
  Coordinator coord(CoordinatorConfig{}, profiles());
  auto dev = init_device(device_config());
  auto frame = frame_for(dev, 70.0, 150.0, 0);
  frame[7] ^= 0x40;

  auto out = coord.ingest(frame, 5, 1);
  CHECK_FALSE(out.reading.has_value());
  CHECK(out.error == Errc::ChecksumMismatch);
  CHECK(coord.stats().frames_bad == 1);
  CHECK(coord.readings().empty());
  CHECK(coord.stats().decode_errors.at("ChecksumMismatch") == 1);
}

TEST_CASE("uninvertible temp codes are discarded, not fatal") {
  Coordinator coord(CoordinatorConfig{}, profiles());
  TelemetryPayload p;
  p.source_addr = kAddr;
  p.sequence = 1;
  p.temp_code = 1023;  // default-chain tables never reach full scale
  auto out = coord.ingest(encode(p).value(), 0, 1);
  CHECK_FALSE(out.reading.has_value());
  CHECK(out.error == Errc::OutOfRange);
  CHECK(coord.stats().frames_bad == 1);
  CHECK(coord.readings().empty());
}

TEST_CASE("frames from unconfigured addresses are rejected") {
  Coordinator coord(CoordinatorConfig{}, profiles());
  auto other = device_config();
  other.device_addr = 0x42;
  auto dev = init_device(other);

  auto out = coord.ingest(frame_for(dev, 70.0, 150.0, 0), 5, 1);
  CHECK(out.error == Errc::UnknownDevice);
  CHECK(coord.stats().unknown_device == 1);
  CHECK(coord.readings().empty());
}

TEST_CASE("lcd renders the documented 2x16 format") {
  Reading r;
  r.device_addr = kAddr;  // ends in BEEF
  r.temp_c = 100.0;
  r.oil_state = OilState::Normal;
  r.sequence = 42;
  auto lcd = render_lcd(r);
  CHECK(lcd.rows[0] == "DBEEF T:100.0C  ");
  CHECK(lcd.rows[1] == "OIL:OK  S:042   ");

  r.oil_state = OilState::Low;
  r.temp_c = -12.3;
  lcd = render_lcd(r);
  CHECK(lcd.rows[0] == "DBEEF T:-12.3C  ");
  CHECK(lcd.rows[1].rfind("OIL:LOW", 0) == 0);

  for (const auto& row : lcd.rows) {
    CHECK(row.size() == 16);
    for (char c : row) CHECK((c >= 0x20 && c < 0x7F));
  }
}

TEST_CASE("temp alarm: one raise and one clear across 85-95-96-85") {
  Coordinator coord(CoordinatorConfig{}, profiles());  // threshold 90, hysteresis 2
  auto dev = init_device(device_config());

  std::vector<AlarmEvent> events;
  std::uint64_t t = 0;
  for (double temp : {85.0, 95.0, 96.0, 85.0}) {
    auto out = coord.ingest(frame_for(dev, temp, 150.0, t), t, 1);
    for (auto& e : out.alarms) events.push_back(e);
    t += 60'000;
  }
  REQUIRE(events.size() == 2);
  CHECK(events[0].kind == AlarmKind::TempHigh);
  CHECK(events[0].state == AlarmState::Raised);
  CHECK_THAT(static_cast<double>(events[0].at_ms), WithinAbs(60'000.0, 1.0));
  CHECK(events[1].state == AlarmState::Cleared);
  REQUIRE(events[0].snapshot.has_value());
  CHECK_THAT(events[0].snapshot->temp_c, WithinAbs(95.0, 0.5));
}

TEST_CASE("hysteresis holds the alarm between clear threshold and threshold") {
  Coordinator coord(CoordinatorConfig{}, profiles());
  auto dev = init_device(device_config());
  std::uint64_t t = 0;
  std::vector<AlarmEvent> events;
  for (double temp : {95.0, 89.0, 89.5, 88.5, 87.5}) {  // clear only at <= 88
    auto out = coord.ingest(frame_for(dev, temp, 150.0, t), t, 1);
    for (auto& e : out.alarms) events.push_back(e);
    t += 60'000;
  }
  REQUIRE(events.size() == 2);
  CHECK(events[0].state == AlarmState::Raised);
  CHECK(events[1].state == AlarmState::Cleared);
  // 88.5 reads back within quantization of 88.5 which is > 88, so the clear
  // must have come from the 87.5 reading
  CHECK(events[1].at_ms == 4 * 60'000);
}

TEST_CASE("oil alarm triggers on edges only") {
  Coordinator coord(CoordinatorConfig{}, profiles());
  auto dev = init_device(device_config());
  std::uint64_t t = 0;
  std::vector<AlarmEvent> events;
  for (double oil : {150.0, 80.0, 80.0, 150.0}) {
    auto out = coord.ingest(frame_for(dev, 70.0, oil, t), t, 1);
    for (auto& e : out.alarms) events.push_back(e);
    t += 60'000;
  }
  REQUIRE(events.size() == 2);
  CHECK(events[0].kind == AlarmKind::OilLow);
  CHECK(events[0].state == AlarmState::Raised);
  CHECK(events[0].at_ms == 60'000);
  CHECK(events[1].state == AlarmState::Cleared);
  CHECK(events[1].at_ms == 3 * 60'000);
}

TEST_CASE("silent device raises DeviceOffline, next frame clears it") {
  Coordinator coord(CoordinatorConfig{}, profiles());
  auto dev = init_device(device_config());

  coord.ingest(frame_for(dev, 70.0, 150.0, 0), 0, 1);
  // silence: 3 x 60 s elapses with nothing heard
  auto fired = coord.advance_to(180'001);
  REQUIRE(fired.size() == 1);
  CHECK(fired[0].kind == AlarmKind::DeviceOffline);
  CHECK(fired[0].state == AlarmState::Raised);
  CHECK(fired[0].at_ms == 180'000);
  CHECK_FALSE(fired[0].snapshot.has_value());

  auto out = coord.ingest(frame_for(dev, 70.0, 150.0, 200'000), 200'000, 1);
  REQUIRE(out.alarms.size() == 1);
  CHECK(out.alarms[0].kind == AlarmKind::DeviceOffline);
  CHECK(out.alarms[0].state == AlarmState::Cleared);
}

TEST_CASE("no offline alarm while frames keep arriving") {
  Coordinator coord(CoordinatorConfig{}, profiles());
  auto dev = init_device(device_config());
  std::uint64_t t = 0;
  for (int i = 0; i < 10; ++i) {
    auto out = coord.ingest(frame_for(dev, 70.0, 150.0, t), t, 1);
    CHECK(out.alarms.empty());
    t += 60'000;
  }
  CHECK(coord.advance_to(t).empty());  // within 3 periods of the last frame
}

TEST_CASE("alarm alternation per kind") {
  Coordinator coord(CoordinatorConfig{}, profiles());
  auto dev = init_device(device_config());
  std::mt19937_64 rng(31);
  std::uint64_t t = 0;
  for (int i = 0; i < 200; ++i) {
    double temp = 60.0 + static_cast<double>(rng() % 500) / 10.0;  // 60..110
    double oil = (rng() % 2) ? 150.0 : 50.0;
    coord.ingest(frame_for(dev, temp, oil, t), t, 1);
    t += 60'000;
  }
  std::map<int, AlarmState> last;
  for (const auto& e : coord.alarm_log()) {
    const int key = static_cast<int>(e.kind);
    if (!last.count(key)) {
      CHECK(e.state == AlarmState::Raised);  // first event must raise
    } else {
      CHECK(e.state != last[key]);  // strict alternation
    }
    last[key] = e.state;
  }
}

TEST_CASE("sequence gap accounting uses modular distance") {
  Coordinator coord(CoordinatorConfig{}, profiles());

  auto frame_with_seq = [](std::uint8_t seq) {
    TelemetryPayload p;
    p.source_addr = kAddr;
    p.sequence = seq;
    p.temp_code = 500;
    return encode(p).value();
  };

  coord.ingest(frame_with_seq(1), 0, 1);
  coord.ingest(frame_with_seq(2), 1000, 1);
  coord.ingest(frame_with_seq(5), 2000, 1);  // 3 and 4 lost
  CHECK(coord.gap_frames(kAddr) == 2);

  // wraparound: 254, 255, 0, 2 -> one more gap
  Coordinator coord2(CoordinatorConfig{}, profiles());
  coord2.ingest(frame_with_seq(254), 0, 1);
  coord2.ingest(frame_with_seq(255), 1000, 1);
  coord2.ingest(frame_with_seq(0), 2000, 1);
  CHECK(coord2.gap_frames(kAddr) == 253);  // 1..253 never arrived
  coord2.ingest(frame_with_seq(2), 3000, 1);
  CHECK(coord2.gap_frames(kAddr) == 254);
}

TEST_CASE("query surface") {
  Coordinator coord(CoordinatorConfig{}, profiles());
  auto dev = init_device(device_config());

  SECTION("devices with no traffic are never-seen") {
    auto rows = coord.query({{"kind", "devices"}});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0]["addr"] == kAddr);
    CHECK(rows[0]["readings"] == 0);
    CHECK(rows[0]["last_seen_s"].is_null());
    CHECK(rows[0]["last"].is_null());
  }

  SECTION("readings in received order") {
    for (int i = 0; i < 5; ++i)
      coord.ingest(frame_for(dev, 70.0 + i, 150.0, i * 60'000), i * 60'000, 1);
    auto rows = coord.query({{"kind", "readings"}, {"addr", kAddr}});
    REQUIRE(rows.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(rows[i]["seq"] == i + 1);

    auto windowed = coord.query(
        {{"kind", "readings"}, {"addr", kAddr}, {"from_s", 60}, {"to_s", 180}});
    CHECK(windowed.size() == 3);
  }

  SECTION("stats recount matches ingestion history") {
    coord.ingest(frame_for(dev, 95.0, 150.0, 0), 0, 1);
    auto bad = frame_for(dev, 70.0, 150.0, 1000);
    bad[9] ^= 1;
    coord.ingest(bad, 1000, 1);
    auto stats = coord.query({{"kind", "stats"}});
    CHECK(stats["frames_ok"] == 1);
    CHECK(stats["frames_bad"] == 1);
    CHECK(stats["alarms_raised"] == 1);
    CHECK(stats["readings"] == 1);
  }

  SECTION("malformed queries are rejected but typed") {
    CHECK_THROWS_MATCHES(coord.query({{"kind", "nope"}}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::MalformedQuery;
                         }));
    CHECK_THROWS_AS(coord.query(nlohmann::json::array()), Error);
    CHECK_THROWS_MATCHES(coord.query({{"kind", "readings"}, {"addr", 999}}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::UnknownDevice;
                         }));
  }
}

TEST_CASE("reloading the logs reconstructs counts and last-known state") {
  std::ostringstream readings_log, alarms_log;
  Coordinator coord(CoordinatorConfig{}, profiles());
  coord.attach_logs(&readings_log, &alarms_log);
  auto dev = init_device(device_config());

  std::uint64_t t = 0;
  for (double temp : {70.0, 95.0, 96.0, 85.0, 70.0}) {
    coord.ingest(frame_for(dev, temp, temp > 90 ? 80.0 : 150.0, t), t, 1);
    t += 60'000;
  }

  Coordinator reloaded(CoordinatorConfig{}, profiles());
  std::istringstream rl(readings_log.str()), al(alarms_log.str());
  reloaded.restore_from_logs(rl, al);

  CHECK(reloaded.readings().size() == coord.readings().size());
  CHECK(reloaded.stats().frames_ok == coord.stats().frames_ok);
  CHECK(reloaded.stats().alarms_raised == coord.stats().alarms_raised);
  CHECK(reloaded.stats().alarms_cleared == coord.stats().alarms_cleared);
  CHECK(reloaded.gap_frames(kAddr) == coord.gap_frames(kAddr));
  CHECK(reloaded.lcd() == coord.lcd());
  CHECK(reloaded.query({{"kind", "devices"}}) == coord.query({{"kind", "devices"}}));

  // log line count equals the ok-frame counter (persistence completeness)
  auto lines = readings_log.str();
  CHECK(static_cast<std::uint64_t>(std::count(lines.begin(), lines.end(), '\n')) ==
        coord.stats().frames_ok);
}
