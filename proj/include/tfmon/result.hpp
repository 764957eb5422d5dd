#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace tfmon {

// Every failure the library reports, shared across modules so callers can
// switch on one enum regardless of where the error surfaced.
enum class Errc {
  // signal chain
  OutOfRange,
  BadChannel,
  Uncalibrated,
  // frame codec
  EmptyData,
  InvalidPayload,
  BadDelimiter,
  TruncatedFrame,
  ChecksumMismatch,
  UnknownFrameType,
  TrailingGarbage,
  BadLength,
  // network
  DuplicateNodeId,
  NoCoordinator,
  MultipleCoordinators,
  NoRoute,
  // configuration
  InvalidConfig,
  // calibration
  DegenerateInput,
  TransportFailure,
  // coordinator / query surface
  UnknownDevice,
  MalformedQuery,
  AddressInUse,
  IoError,
};

constexpr std::string_view to_string(Errc c) {
  switch (c) {
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::BadChannel: return "BadChannel";
    case Errc::Uncalibrated: return "Uncalibrated";
    case Errc::EmptyData: return "EmptyData";
    case Errc::InvalidPayload: return "InvalidPayload";
    case Errc::BadDelimiter: return "BadDelimiter";
    case Errc::TruncatedFrame: return "TruncatedFrame";
    case Errc::ChecksumMismatch: return "ChecksumMismatch";
    case Errc::UnknownFrameType: return "UnknownFrameType";
    case Errc::TrailingGarbage: return "TrailingGarbage";
    case Errc::BadLength: return "BadLength";
    case Errc::DuplicateNodeId: return "DuplicateNodeId";
    case Errc::NoCoordinator: return "NoCoordinator";
    case Errc::MultipleCoordinators: return "MultipleCoordinators";
    case Errc::NoRoute: return "NoRoute";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::DegenerateInput: return "DegenerateInput";
    case Errc::TransportFailure: return "TransportFailure";
    case Errc::UnknownDevice: return "UnknownDevice";
    case Errc::MalformedQuery: return "MalformedQuery";
    case Errc::AddressInUse: return "AddressInUse";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

// Thrown for precondition and configuration violations; data-path functions
// that must stay total (decode, ingest, route) return Result instead.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

struct Failure {
  Errc code;
  std::string message;
};

inline Failure fail(Errc code, std::string message = {}) {
  return Failure{code, std::move(message)};
}

// Minimal expected-style carrier: either a value or a Failure.
template <typename T>
class Result {
 public:
  Result(T value) : state_(std::move(value)) {}
  Result(Failure failure) : state_(std::move(failure)) {}

  bool ok() const noexcept { return std::holds_alternative<T>(state_); }
  explicit operator bool() const noexcept { return ok(); }

  const T& value() const& {
    if (!ok()) throw Error(error(), message());
    return std::get<T>(state_);
  }
  T& value() & {
    if (!ok()) throw Error(error(), message());
    return std::get<T>(state_);
  }
  T&& value() && {
    if (!ok()) throw Error(error(), message());
    return std::get<T>(std::move(state_));
  }

  Errc error() const { return std::get<Failure>(state_).code; }
  const std::string& message() const { return std::get<Failure>(state_).message; }

 private:
  std::variant<T, Failure> state_;
};

}  // namespace tfmon
