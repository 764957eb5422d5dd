#include "tfmon/end_device.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <vector>

using namespace tfmon;
using Catch::Matchers::WithinAbs;

namespace {

DeviceConfig demo_config() {
  DeviceConfig cfg;
  cfg.device_addr = 0x13A200DEADBEEFULL;
  cfg.ring_capacity = 8;
  return cfg;
}

}  // namespace

TEST_CASE("init resets sequence and buffer") {
  auto dev = init_device(demo_config());
  CHECK(dev.sequence() == 0);
  CHECK(dev.ring().size() == 0);
  CHECK(dev.config().table.points.size() >= 2);
}

TEST_CASE("init rejects invalid configs naming the field") {
  auto bad_channel = demo_config();
  bad_channel.adc_channel_temp = 8;  // valid indices are 0..7
  CHECK_THROWS_MATCHES(init_device(bad_channel), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("adc_channel_temp")));

  auto bad_ring = demo_config();
  bad_ring.ring_capacity = 0;
  CHECK_THROWS_MATCHES(init_device(bad_ring), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("ring_capacity")));

  auto bad_period = demo_config();
  bad_period.sample_period_s = 0.0;
  CHECK_THROWS_AS(init_device(bad_period), Error);

  auto bad_gain = demo_config();
  bad_gain.chain.amplifier.gain = -1.0;
  CHECK_THROWS_AS(init_device(bad_gain), Error);

  // a wider ADC cannot fit the 10-bit temp_code wire field
  auto bad_adc = demo_config();
  bad_adc.chain.adc.resolution_bits = 12;
  CHECK_THROWS_MATCHES(init_device(bad_adc), Error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("resolution_bits")));
}

TEST_CASE("classify sets the documented bits") {
  auto cfg = demo_config();  // threshold 90
  CHECK(classify(89.99, OilState::Normal, cfg) == 0x00);
  CHECK(classify(90.0, OilState::Normal, cfg) == 0x02);  // inclusive boundary
  CHECK(classify(50.0, OilState::Low, cfg) == 0x01);
  CHECK(classify(95.0, OilState::Low, cfg) == 0x03);
}

TEST_CASE("sample_cycle runs the chain and flags correctly") {
  auto dev = init_device(demo_config());

  auto [normal, frame1] = dev.sample_cycle({70.0, 120.0}, 0);
  CHECK(normal.status_flags == 0x00);
  CHECK(normal.oil_state == OilState::Normal);
  CHECK_THAT(normal.temp_c_local, WithinAbs(70.0, 0.5));

  auto [alarmed, frame2] = dev.sample_cycle({95.0, 80.0}, 60'000);
  CHECK(alarmed.status_flags == 0x03);
  CHECK(alarmed.oil_state == OilState::Low);
  CHECK(alarmed.timestamp_s == 60);
}

TEST_CASE("emitted frame decodes back to the record fields") {
  auto dev = init_device(demo_config());
  auto [rec, frame] = dev.sample_cycle({85.0, 150.0}, 120'000);
  auto p = decode(frame).value();
  CHECK(p.source_addr == demo_config().device_addr);
  CHECK(p.sequence == rec.sequence);
  CHECK(p.timestamp_s == rec.timestamp_s);
  CHECK(p.temp_code == rec.temp_code);
  CHECK(p.status_flags == rec.status_flags);
  CHECK(p.battery_mv == rec.battery_mv);
}

TEST_CASE("sequence wraps mod 256 and stays contiguous") {
  auto dev = init_device(demo_config());
  std::uint8_t prev = 0;
  for (int i = 1; i <= 300; ++i) {
    auto [rec, frame] = dev.sample_cycle({70.0, 150.0}, static_cast<std::uint64_t>(i) * 1000);
    if (i > 1) CHECK(static_cast<std::uint8_t>(rec.sequence - prev) == 1);
    prev = rec.sequence;
  }
  CHECK(prev == 300 % 256);  // == 44
}

TEST_CASE("ring keeps exactly the last capacity records") {
  auto cfg = demo_config();
  cfg.ring_capacity = 5;
  auto dev = init_device(cfg);
  for (int i = 1; i <= 3; ++i) dev.sample_cycle({70.0, 150.0}, i * 1000);
  CHECK(dev.ring().size() == 3);

  for (int i = 4; i <= 12; ++i) dev.sample_cycle({70.0, 150.0}, i * 1000);
  REQUIRE(dev.ring().size() == 5);
  std::vector<int> seqs;
  for (const auto& r : dev.ring()) seqs.push_back(r.sequence);
  CHECK(seqs == std::vector<int>{8, 9, 10, 11, 12});
}

TEST_CASE("battery discharges linearly and clamps at the floor") {
  BatteryModel b{1000.0, 40.0, 0.01, 1.0};  // 25 h lifetime
  CHECK(battery_mv_at(b, 0) == 3300);
  CHECK(battery_mv_at(b, 12ull * 3600 * 1000) == 3300 - 576);  // 12/25 of the way down
  CHECK(battery_mv_at(b, 25ull * 3600 * 1000) == 2100);
  CHECK(battery_mv_at(b, 50ull * 3600 * 1000) == 2100);
}

TEST_CASE("flag soundness over random environments") {
  auto dev = init_device(demo_config());
  std::mt19937_64 rng(17);
  for (int i = 0; i < 500; ++i) {
    const double temp = -40.0 + static_cast<double>(rng() % 1600) / 10.0;
    const double oil = static_cast<double>(rng() % 200);
    auto [rec, frame] = dev.sample_cycle({temp, oil}, i * 1000);
    const bool temp_bit = (rec.status_flags & kFlagTempHigh) != 0;
    const bool oil_bit = (rec.status_flags & kFlagOilLow) != 0;
    CHECK(temp_bit == (rec.temp_c_local >= 90.0));
    CHECK(oil_bit == (rec.oil_state == OilState::Low));
    CHECK((rec.status_flags & ~0x03) == 0);
  }
}

TEST_CASE("out-of-range environment propagates OutOfRange") {
  auto dev = init_device(demo_config());
  CHECK_THROWS_MATCHES(dev.sample_cycle({999.0, 150.0}, 0), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::OutOfRange; }));
}
