#include "tfmon/signal_chain.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tfmon/calibration.hpp"

using namespace tfmon;
using Catch::Matchers::WithinAbs;

namespace {

// Oracles, kept deliberately naive and separate from the library path.
double rtd_oracle(double r0, double a, double b, double t) {
  return r0 * (1.0 + a * t + b * t * t);
}

double bridge_oracle(double vex, double r, double rref) {
  return vex * (r / (r + rref) - 0.5);
}

int adc_oracle(double v, double vref, int bits) {
  int fs = (1 << bits) - 1;
  double code = std::floor(v / vref * fs);
  return code < 0 ? 0 : (code > fs ? fs : static_cast<int>(code));
}

}  // namespace

TEST_CASE("rtd resistance follows the quadratic law") {
  RtdModel pt100;
  CHECK_THAT(rtd_resistance(pt100, 0.0), WithinAbs(100.0, 1e-12));
  // frozen values, cross-checked against the polynomial oracle
  CHECK_THAT(rtd_resistance(pt100, 100.0), WithinAbs(138.5055, 1e-4));
  CHECK_THAT(rtd_resistance(pt100, 50.0), WithinAbs(119.3971, 1e-4));
  CHECK_THAT(rtd_resistance(pt100, 100.0),
             WithinAbs(rtd_oracle(100.0, 3.9083e-3, -5.775e-7, 100.0), 1e-12));
  CHECK_THAT(rtd_resistance(pt100, 50.0),
             WithinAbs(rtd_oracle(100.0, 3.9083e-3, -5.775e-7, 50.0), 1e-12));
}

TEST_CASE("rtd resistance is strictly increasing on the valid range") {
  RtdModel pt100;
  double prev = rtd_resistance(pt100, pt100.valid_min_c);
  for (double t = pt100.valid_min_c + 0.5; t <= pt100.valid_max_c; t += 0.5) {
    double r = rtd_resistance(pt100, t);
    CHECK(r > prev);
    prev = r;
  }
}

TEST_CASE("rtd rejects temperatures outside the valid range") {
  RtdModel pt100;
  CHECK_THROWS_MATCHES(rtd_resistance(pt100, -41.0), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::OutOfRange; }));
  CHECK_THROWS_AS(rtd_resistance(pt100, 120.5), Error);
}

TEST_CASE("bridge output") {
  BridgeCircuit b;
  CHECK_THAT(bridge_output(b, 100.0), WithinAbs(0.0, 1e-12));
  CHECK_THAT(bridge_output(b, 138.5055), WithinAbs(0.403613, 1e-6));
  CHECK_THAT(bridge_output(b, 138.5055), WithinAbs(bridge_oracle(5.0, 138.5055, 100.0), 1e-12));
  // divider asymptote: a huge RTD arm approaches +Vex/2
  CHECK_THAT(bridge_output(b, 1e12), WithinAbs(2.5, 1e-6));
}

TEST_CASE("bridge antisymmetry: swapping arms negates the output") {
  BridgeCircuit b;
  for (double r : {50.0, 84.27, 100.0, 138.5, 146.1}) {
    BridgeCircuit swapped = b;
    swapped.r_ref_ohms = r;
    CHECK_THAT(bridge_output(swapped, b.r_ref_ohms), WithinAbs(-bridge_output(b, r), 1e-12));
  }
}

TEST_CASE("amplifier applies gain and offset and clamps at the rails") {
  AmplifierStage a;  // gain 6, offset 1.8, rails [0, 5]
  CHECK_THAT(amplify(a, 0.0), WithinAbs(1.8, 1e-12));
  CHECK_THAT(amplify(a, 0.403613), WithinAbs(4.22168, 1e-5));
  CHECK_THAT(amplify(a, 0.403613), WithinAbs(6.0 * 0.403613 + 1.8, 1e-12));
  CHECK_THAT(amplify(a, 1.0), WithinAbs(5.0, 1e-12));
  CHECK_THAT(amplify(a, -1.0), WithinAbs(0.0, 1e-12));
}

TEST_CASE("adc quantization") {
  AdcModel adc;
  CHECK(adc_sample(adc, 0.0, 0) == 0);
  CHECK(adc_sample(adc, 5.0, 0) == 1023);
  CHECK(adc_sample(adc, 4.22168, 0) == 863);
  CHECK(adc_sample(adc, 4.22168, 0) == adc_oracle(4.22168, 5.0, 10));
  // clamped for any finite voltage
  CHECK(adc_sample(adc, -3.0, 0) == 0);
  CHECK(adc_sample(adc, 12.0, 0) == 1023);
  CHECK(adc_sample(adc, 1e300, 0) == 1023);
  CHECK(adc_sample(adc, -1e300, 0) == 0);
}

TEST_CASE("adc is monotone non-decreasing in voltage") {
  AdcModel adc;
  int prev = adc_sample(adc, -0.5, 0);
  for (double v = -0.5; v <= 5.5; v += 0.001) {
    int code = adc_sample(adc, v, 0);
    CHECK(code >= prev);
    prev = code;
  }
}

TEST_CASE("adc rejects out-of-range channels") {
  AdcModel adc;
  CHECK_THROWS_MATCHES(adc_sample(adc, 1.0, 8), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::BadChannel; }));
  CHECK_THROWS_AS(adc_sample(adc, 1.0, -1), Error);
  CHECK(adc_sample(adc, 1.0, 7) >= 0);
}

TEST_CASE("oil level state uses a strict threshold") {
  CHECK(oil_level_state({120.0, 100.0}) == OilState::Normal);
  CHECK(oil_level_state({80.0, 100.0}) == OilState::Low);
  // equality is Normal
  CHECK(oil_level_state({100.0, 100.0}) == OilState::Normal);
}

TEST_CASE("full chain codes are monotone in temperature") {
  SignalChain chain;
  int prev = chain_code(chain, chain.rtd.valid_min_c);
  for (double t = chain.rtd.valid_min_c; t <= chain.rtd.valid_max_c + 1e-9; t += 0.1) {
    int code = chain_code(chain, t);
    CHECK(code >= prev);
    prev = code;
  }
}

TEST_CASE("temperature_from_code recovers sweep temperatures") {
  SignalChain chain;
  auto table = default_table(chain);

  // code produced by the forward chain at 0 C maps back to ~0 C
  CHECK_THAT(temperature_from_code(table, chain_code(chain, 0.0)), WithinAbs(0.0, 0.5));
  // frozen: 100 C encodes to 863 on the default chain
  REQUIRE(chain_code(chain, 100.0) == 863);
  CHECK_THAT(temperature_from_code(table, 863), WithinAbs(100.0, 0.5));
}

TEST_CASE("temperature_from_code domain guards") {
  SignalChain chain;
  auto table = default_table(chain);
  const int lowest = table.points.front().rx_code;
  CHECK_THROWS_MATCHES(temperature_from_code(table, lowest - 1), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::OutOfRange; }));
  CHECK_THROWS_MATCHES(temperature_from_code(CalibrationTable{}, 500), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::Uncalibrated; }));
}

TEST_CASE("round-trip error stays within 0.5 C across the default span") {
  SignalChain chain;
  auto table = default_table(chain);
  double worst = 0.0;
  for (double t = -40.0; t <= 120.0 + 1e-9; t += 0.1) {
    const double v = chain_voltage(chain, t);
    if (v <= chain.amplifier.rail_low || v >= chain.amplifier.rail_high) continue;
    const double back = temperature_from_code(table, chain_code(chain, t));
    worst = std::max(worst, std::abs(back - t));
  }
  CHECK(worst <= 0.5);
}
