#pragma once

#include <string>
#include <vector>

#include "fdband/calibration.hpp"
#include "fdband/error.hpp"

namespace fdband::testing {

inline Grid reference_grid() { return Grid(-12.0, 12.0, 4096); }

// Collects warnings instead of printing them.
class WarningCapture {
public:
  WarningCapture() {
    previous_ = set_warning_handler([this](std::string_view m) { messages.emplace_back(m); });
  }
  ~WarningCapture() { set_warning_handler(std::move(previous_)); }
  std::vector<std::string> messages;

private:
  WarningHandler previous_;
};

inline std::pair<UncertaintyBall, UncertaintyBall> reference_balls() {
  WarningCapture quiet;
  const Grid grid = reference_grid();
  return {UncertaintyBall{gaussian_density(grid, -1.0, 1.0), families::kullback_leibler(), 0.03},
          UncertaintyBall{gaussian_density(grid, 1.0, 2.0), families::kullback_leibler(), 0.02}};
}

inline const CalibrationResult& reference_calibration() {
  static const CalibrationResult result = [] {
    const auto [b0, b1] = reference_balls();
    return calibrate(b0, b1, 1.0);
  }();
  return result;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace fdband::testing
