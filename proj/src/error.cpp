#include "fdband/error.hpp"

#include <iostream>
#include <mutex>

namespace fdband {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config: return "Config";
    case ErrorCode::Io: return "Io";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DegenerateOverlap: return "DegenerateOverlap";
    case ErrorCode::InfeasibleBand: return "InfeasibleBand";
    case ErrorCode::NonSmoothFamily: return "NonSmoothFamily";
    case ErrorCode::NonPositiveVariance: return "NonPositiveVariance";
    case ErrorCode::ZeroMass: return "ZeroMass";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::InvalidGrid: return "InvalidGrid";
    case ErrorCode::InvalidDensity: return "InvalidDensity";
    case ErrorCode::NumericalNegativity: return "NumericalNegativity";
    case ErrorCode::BracketFailure: return "BracketFailure";
    case ErrorCode::ZeroDirection: return "ZeroDirection";
    case ErrorCode::EmptyClipRegion: return "EmptyClipRegion";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::InvalidTrialCount: return "InvalidTrialCount";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::GridTooLarge: return "GridTooLarge";
    case ErrorCode::UnknownFamily: return "UnknownFamily";
  }
  return "Unknown";
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::UnknownFamily:
    case ErrorCode::InvalidGrid:
    case ErrorCode::InvalidTrialCount:
    case ErrorCode::NonPositiveVariance:
      return 2;
    case ErrorCode::NoConvergence: return 3;
    case ErrorCode::DegenerateOverlap: return 4;
    case ErrorCode::InfeasibleBand: return 5;
    case ErrorCode::NonSmoothFamily: return 6;
    case ErrorCode::Io: return 7;
    default: return 9;
  }
}

void raise(ErrorCode code, const std::string& message) {
  throw Error(code, std::string(to_string(code)) + ": " + message);
}

namespace {

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& handler_slot() {
  static WarningHandler h = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return h;
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(handler_mutex());
  auto previous = std::move(handler_slot());
  handler_slot() = std::move(handler);
  return previous;
}

void warn(std::string_view message) {
  std::lock_guard lock(handler_mutex());
  if (handler_slot()) handler_slot()(message);
}

}  // namespace fdband
