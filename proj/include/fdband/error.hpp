#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fdband {

enum class ErrorCode {
  Config,
  Io,
  NoConvergence,
  DegenerateOverlap,
  InfeasibleBand,
  NonSmoothFamily,
  NonPositiveVariance,
  ZeroMass,
  GridMismatch,
  InvalidGrid,
  InvalidDensity,
  NumericalNegativity,
  BracketFailure,
  ZeroDirection,
  EmptyClipRegion,
  OutOfDomain,
  InvalidTrialCount,
  TooLarge,
  GridTooLarge,
  UnknownFamily,
};

std::string_view to_string(ErrorCode code);

/// Process exit code for the command-line tool. Codes 2..7 are fixed by the
/// documented CLI contract; everything else that is a numerical failure maps
/// to 9.
int exit_code(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] void raise(ErrorCode code, const std::string& message);

// Non-fatal diagnostics (e.g. grid truncation). The default handler writes to
// stderr; tests install a capturing handler.
using WarningHandler = std::function<void(std::string_view)>;
WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace fdband
