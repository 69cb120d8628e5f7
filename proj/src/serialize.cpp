#include "fdband/serialize.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "fdband/error.hpp"

namespace fdband {

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

namespace {

Json array(std::span<const double> v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

Json labels(const std::vector<Region>& r) {
  Json a = Json::array();
  for (Region x : r) a.push_back(to_string(x));
  return a;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) raise(ErrorCode::Io, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

Json to_json(const Grid& grid) {
  return Json{{"x_min", grid.x_min()},
              {"x_max", grid.x_max()},
              {"n", grid.size()},
              {"quadrature", grid.rule() == Quadrature::Trapezoid ? "trapezoid" : "counting"}};
}

Json to_json(const LFDSolution& sol) {
  return Json{{"grid", to_json(sol.grid())},
              {"lambda", number(sol.lambda)},
              {"lambda_interval", {number(sol.lambda_interval.first), number(sol.lambda_interval.second)}},
              {"c0", number(sol.c0)},
              {"c1", number(sol.c1)},
              {"iterations", sol.iterations},
              {"residual", number(sol.residual)},
              {"q0", array(sol.q0.values())},
              {"q1", array(sol.q1.values())},
              {"regions0", labels(sol.regions0)},
              {"regions1", labels(sol.regions1)}};
}

Json to_json(const ContaminationReport& rep) {
  auto side = [](const ContaminationSide& s) {
    Json j{{"contamination_ratio", number(s.ratio)}};
    j["envelope_factor"] = s.envelope_factor ? number(*s.envelope_factor) : Json("not applicable");
    return j;
  };
  return Json{{"h0", side(rep.h0)}, {"h1", side(rep.h1)}};
}

Json to_json(const CalibrationResult& res) {
  const auto& m = res.multipliers;
  return Json{
      {"grid", to_json(res.grid())},
      {"family0", res.ball0.family.name},
      {"family1", res.ball1.family.name},
      {"epsilon0", res.ball0.epsilon},
      {"epsilon1", res.ball1.epsilon},
      {"lambda", res.lambda},
      {"coefficients", {{"a0", res.a0}, {"b0", res.b0}, {"a1", res.a1}, {"b1", res.b1}}},
      {"multipliers",
       {{"eta0", number(m.eta0)}, {"nu0", number(m.nu0)}, {"eta1", number(m.eta1)}, {"nu1", number(m.nu1)}}},
      {"residuals",
       {{"mass0", res.residuals[0]}, {"mass1", res.residuals[1]}, {"divergence0", res.residuals[2]},
        {"divergence1", res.residuals[3]}}},
      {"contamination", to_json(contamination_report(res))},
      {"strategy", res.strategy_used},
      {"iterations", res.iterations},
      {"frozen0", res.frozen0},
      {"frozen1", res.frozen1},
      {"band0", {{"lower", array(res.band0.lower().values())}, {"upper", array(res.band0.upper().values())}}},
      {"band1", {{"lower", array(res.band1.lower().values())}, {"upper", array(res.band1.upper().values())}}},
      {"q0", array(res.q0.values())},
      {"q1", array(res.q1.values())},
      {"regions0", labels(res.regions0)},
      {"regions1", labels(res.regions1)}};
}

Json to_json(const ProbeReport& rep) {
  return Json{{"samples", rep.samples},
              {"max_violation", number(rep.max_violation)},
              {"argmax", rep.argmax_descriptor},
              {"tolerance", number(rep.tolerance)},
              {"reference_value", number(rep.reference_value)},
              {"passed", rep.passed()},
              {"histogram", {{"min", number(rep.hist_min)}, {"max", number(rep.hist_max)}, {"counts", rep.histogram}}}};
}

Json to_json(const SimulationReport& rep) {
  return Json{{"N", rep.n_samples},
              {"trials", rep.trials},
              {"seed", rep.seed},
              {"alpha_hat", rep.alpha_hat},
              {"beta_hat", rep.beta_hat},
              {"ci", {{"alpha", rep.ci_alpha}, {"beta", rep.ci_beta}}},
              {"threshold", rep.threshold}};
}

Json to_json(const BruteForceResult& res) {
  Json j{{"q0", array(res.q0)},
         {"q1", array(res.q1)},
         {"value", res.value},
         {"candidates0", res.candidates0},
         {"candidates1", res.candidates1}};
  if (res.target_distance_steps) j["target_distance_steps"] = number(*res.target_distance_steps);
  if (res.argmax_distance_steps) j["argmax_distance_steps"] = number(*res.argmax_distance_steps);
  return j;
}

Json to_json(const ContainmentReport& rep) {
  return Json{{"count", rep.count}, {"ball_in_band", rep.ball_in_band}, {"band_in_ball", rep.band_in_ball}};
}

void write_json(const std::filesystem::path& path, const Json& j) {
  auto out = open_out(path);
  out << std::setw(2) << j << '\n';
  if (!out) raise(ErrorCode::Io, "failed writing " + path.string());
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    raise(ErrorCode::Config, path.string() + ": " + e.what());
  }
}

void write_figure_csv(const std::filesystem::path& path, const CalibrationResult& res) {
  auto out = open_out(path);
  out << std::setprecision(17);
  out << "x,p0,p1,a0p0,b0p0,a1p1,b1p1,q0,q1\n";
  const Grid& g = res.grid();
  const auto& p0 = res.ball0.nominal;
  const auto& p1 = res.ball1.nominal;
  for (std::size_t i = 0; i < g.size(); ++i) {
    out << g.x(i) << ',' << p0[i] << ',' << p1[i] << ',' << res.a0 * p0[i] << ',' << res.b0 * p0[i] << ','
        << res.a1 * p1[i] << ',' << res.b1 * p1[i] << ',' << res.q0[i] << ',' << res.q1[i] << '\n';
  }
  if (!out) raise(ErrorCode::Io, "failed writing " + path.string());
}

void write_band_csv(const std::filesystem::path& path, const BandModel& band0, const BandModel& band1,
                    const LFDSolution& sol) {
  auto out = open_out(path);
  out << std::setprecision(17);
  out << "x,lower0,upper0,lower1,upper1,q0,q1\n";
  const Grid& g = sol.grid();
  for (std::size_t i = 0; i < g.size(); ++i) {
    out << g.x(i) << ',' << band0.lower()[i] << ',' << band0.upper()[i] << ',' << band1.lower()[i] << ','
        << band1.upper()[i] << ',' << sol.q0[i] << ',' << sol.q1[i] << '\n';
  }
  if (!out) raise(ErrorCode::Io, "failed writing " + path.string());
}

}  // namespace fdband
