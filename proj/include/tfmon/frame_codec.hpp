#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tfmon/result.hpp"

// Telemetry wire format, API-mode style: delimiter, big-endian length,
// api_data, sum-complement checksum. No byte escaping; the link is 8-bit
// clean. Layout is documented bit-exactly in docs/wire-format.md.
//
//   offset 0      0x7E delimiter
//   offset 1..2   u16 length of api_data (0x0013 for telemetry)
//   offset 3..21  api_data (19 bytes, see TelemetryPayload)
//   offset 22     checksum = 0xFF - (sum of api_data bytes mod 256)

namespace tfmon {

inline constexpr std::uint8_t kFrameDelimiter = 0x7E;
inline constexpr std::uint8_t kTelemetryFrameType = 0x10;
inline constexpr std::size_t kTelemetryApiLength = 19;
inline constexpr std::size_t kTelemetryFrameSize = 23;
inline constexpr std::uint16_t kMaxTempCode = 1023;

// status_flags bits; bits 2..7 are reserved and must be zero.
inline constexpr std::uint8_t kFlagOilLow = 0x01;
inline constexpr std::uint8_t kFlagTempHigh = 0x02;

struct TelemetryPayload {
  std::uint64_t source_addr = 0;
  std::uint8_t sequence = 0;
  std::uint32_t timestamp_s = 0;
  std::uint16_t temp_code = 0;  // low 10 bits significant
  std::uint8_t status_flags = 0;
  std::uint16_t battery_mv = 0;

  bool operator==(const TelemetryPayload&) const = default;
};

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8)
    out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFF));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8)
    out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFF));
}

inline std::uint16_t get_u16(std::span<const std::uint8_t> in, std::size_t at) {
  return static_cast<std::uint16_t>((in[at] << 8) | in[at + 1]);
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | in[at + i];
  return v;
}

inline std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v = (v << 8) | in[at + i];
  return v;
}

}  // namespace detail

inline Result<std::uint8_t> checksum(std::span<const std::uint8_t> api_data) {
  if (api_data.empty()) return fail(Errc::EmptyData, "checksum over empty api_data");
  unsigned sum = 0;
  for (std::uint8_t b : api_data) sum += b;
  return static_cast<std::uint8_t>(0xFF - (sum & 0xFF));
}

inline bool payload_valid(const TelemetryPayload& p) {
  return p.temp_code <= kMaxTempCode &&
         (p.status_flags & ~(kFlagOilLow | kFlagTempHigh)) == 0;
}

inline Result<std::vector<std::uint8_t>> encode(const TelemetryPayload& p) {
  if (p.temp_code > kMaxTempCode)
    return fail(Errc::InvalidPayload, "temp_code exceeds 10 bits");
  if ((p.status_flags & ~(kFlagOilLow | kFlagTempHigh)) != 0)
    return fail(Errc::InvalidPayload, "reserved status_flags bits set");

  std::vector<std::uint8_t> frame;
  frame.reserve(kTelemetryFrameSize);
  frame.push_back(kFrameDelimiter);
  detail::put_u16(frame, static_cast<std::uint16_t>(kTelemetryApiLength));
  frame.push_back(kTelemetryFrameType);
  detail::put_u64(frame, p.source_addr);
  frame.push_back(p.sequence);
  detail::put_u32(frame, p.timestamp_s);
  detail::put_u16(frame, p.temp_code);
  frame.push_back(p.status_flags);
  detail::put_u16(frame, p.battery_mv);

  auto api = std::span<const std::uint8_t>(frame).subspan(3, kTelemetryApiLength);
  frame.push_back(checksum(api).value());
  return frame;
}

// Total over arbitrary byte strings. Checksum is verified before the frame
// type or any field so that corruption anywhere in api_data always surfaces
// as ChecksumMismatch.
inline Result<TelemetryPayload> decode(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) return fail(Errc::TruncatedFrame, "empty input");
  if (bytes[0] != kFrameDelimiter)
    return fail(Errc::BadDelimiter, "first byte is not 0x7E");
  if (bytes.size() < 3) return fail(Errc::TruncatedFrame, "length field incomplete");

  const std::size_t api_len = detail::get_u16(bytes, 1);
  const std::size_t total = 3 + api_len + 1;
  if (bytes.size() < total) return fail(Errc::TruncatedFrame, "frame shorter than length promises");
  if (bytes.size() > total) return fail(Errc::TrailingGarbage, "extra bytes after checksum");
  if (api_len == 0) return fail(Errc::TruncatedFrame, "zero-length api_data");

  auto api = bytes.subspan(3, api_len);
  if (checksum(api).value() != bytes[3 + api_len])
    return fail(Errc::ChecksumMismatch, "checksum does not match api_data");
  if (api[0] != kTelemetryFrameType)
    return fail(Errc::UnknownFrameType, "unsupported frame type");
  if (api_len != kTelemetryApiLength)
    return fail(Errc::BadLength, "telemetry api_data must be 19 bytes");

  TelemetryPayload p;
  p.source_addr = detail::get_u64(api, 1);
  p.sequence = api[9];
  p.timestamp_s = detail::get_u32(api, 10);
  p.temp_code = detail::get_u16(api, 14);
  p.status_flags = api[16];
  p.battery_mv = detail::get_u16(api, 17);

  if (!payload_valid(p))
    return fail(Errc::InvalidPayload, "temp_code or reserved flag bits out of spec");
  return p;
}

}  // namespace tfmon
