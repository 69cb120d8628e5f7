#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "common.hpp"
#include "fdband/cli_report.hpp"

using namespace fdband;
using fdband::testing::WarningCapture;

namespace {

const std::filesystem::path kSourceDir = FDBAND_SOURCE_DIR;

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "fdband_cli_test" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Json reference_json() { return read_json(kSourceDir / "configs" / "paper_example.json"); }

RunConfig reference_config() { return load_config(kSourceDir / "configs" / "paper_example.json"); }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ErrorCode error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::Config;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FDBAND_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Objects must have identical key sets; arrays in the golden file are
// summarized by their length; numbers compare with a mixed tolerance.
void expect_matches_golden(const Json& golden, const Json& actual, const std::string& path) {
  if (golden.is_object() && golden.contains("__length")) {
    ASSERT_TRUE(actual.is_array()) << path;
    EXPECT_EQ(actual.size(), golden["__length"].get<std::size_t>()) << path;
  } else if (golden.is_object()) {
    ASSERT_TRUE(actual.is_object()) << path;
    for (const auto& [k, v] : golden.items()) {
      ASSERT_TRUE(actual.contains(k)) << path << "." << k;
      expect_matches_golden(v, actual[k], path + "." + k);
    }
    for (const auto& [k, v] : actual.items()) EXPECT_TRUE(golden.contains(k)) << "unexpected key " << path << "." << k;
  } else if (golden.is_number()) {
    ASSERT_TRUE(actual.is_number()) << path;
    const double g = golden.get<double>(), a = actual.get<double>();
    EXPECT_NEAR(a, g, 1e-9 + 1e-6 * std::abs(g)) << path;
  } else {
    EXPECT_EQ(golden, actual) << path;
  }
}

}  // namespace

TEST(CliReport, ParsesBundledConfig) {
  const auto cfg = reference_config();
  EXPECT_EQ(*cfg.nominal0.mean, -1.0);
  EXPECT_EQ(*cfg.nominal1.variance, 2.0);
  EXPECT_EQ(cfg.epsilon0, 0.03);
  EXPECT_EQ(*cfg.n, 4096u);
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.verify.probe_count, 1000);
}

TEST(CliReport, RejectsBadConfigs) {
  auto j = reference_json();
  j["typo"] = 1;
  EXPECT_EQ(error_of([&] { parse_config(j); }), ErrorCode::Config);
  j = reference_json();
  j.erase("nominal1");
  EXPECT_EQ(error_of([&] { parse_config(j); }), ErrorCode::Config);
  j = reference_json();
  j["epsilon0"] = "large";
  EXPECT_EQ(error_of([&] { parse_config(j); }), ErrorCode::Config);
  j = reference_json();
  j["family0"] = "jensen";
  EXPECT_EQ(error_of([&] { parse_config(j); }), ErrorCode::UnknownFamily);
  j = reference_json();
  j["grid"]["n"] = 8;
  EXPECT_EQ(error_of([&] { parse_config(j); }), ErrorCode::InvalidGrid);
  j = reference_json();
  j["nominal0"] = {{"gaussian", {{"mean", 0.0}, {"variance", 1.0}}}, {"csv", "x.csv"}};
  EXPECT_EQ(error_of([&] { parse_config(j); }), ErrorCode::Config);
  EXPECT_EQ(error_of([&] { load_config("/nonexistent/config.json"); }), ErrorCode::Io);
}

TEST(CliReport, OutputDirectoryPrecedence) {
  auto cfg = reference_config();
  unsetenv("FDBAND_OUTPUT_DIR");
  EXPECT_EQ(resolve_output_dir(std::nullopt, cfg), "fdband_out");
  setenv("FDBAND_OUTPUT_DIR", "/tmp/from_env", 1);
  EXPECT_EQ(resolve_output_dir(std::nullopt, cfg), "/tmp/from_env");
  cfg.output_dir = "/tmp/from_config";
  EXPECT_EQ(resolve_output_dir(std::nullopt, cfg), "/tmp/from_config");
  EXPECT_EQ(resolve_output_dir(std::filesystem::path("/tmp/from_flag"), cfg), "/tmp/from_flag");
  unsetenv("FDBAND_OUTPUT_DIR");
}

TEST(CliReport, CalibrateMatchesGolden) {
  WarningCapture quiet;
  const auto out = scratch("calibrate");
  const auto art = cmd_calibrate(reference_config(), out);
  ASSERT_TRUE(std::filesystem::exists(art.report_json));
  const Json report = read_json(art.report_json);
  expect_matches_golden(read_json(kSourceDir / "tests" / "data" / "reference_calibration.golden.json"), report, "");
  // Round trip through the serializer.
  EXPECT_EQ(Json::parse(report.dump()), report);
}

TEST(CliReport, FigureCsvLayout) {
  WarningCapture quiet;
  const auto out = scratch("figure");
  const auto art = cmd_calibrate(reference_config(), out);
  std::ifstream in(art.figure_csv);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "x,p0,p1,a0p0,b0p0,a1p1,b1p1,q0,q1");
  std::size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8);
  }
  EXPECT_EQ(rows, 4096u);
}

TEST(CliReport, ZeroRadiusConfig) {
  WarningCapture quiet;
  auto cfg = reference_config();
  cfg.epsilon0 = cfg.epsilon1 = 0.0;
  const auto art = cmd_calibrate(cfg, scratch("zero"));
  const auto j = read_json(art.report_json)["coefficients"];
  for (const char* k : {"a0", "b0", "a1", "b1"}) EXPECT_EQ(j[k].get<double>(), 1.0) << k;
}

TEST(CliReport, TotalVariationRejected) {
  auto cfg = reference_config();
  cfg.family0 = "tv";
  EXPECT_EQ(error_of([&] { cmd_calibrate(cfg, scratch("tv")); }), ErrorCode::NonSmoothFamily);
}

TEST(CliReport, BandFromCalibration) {
  WarningCapture quiet;
  const auto art = cmd_band(reference_config(), scratch("band_cal"));
  const auto j = read_json(art.report_json);
  EXPECT_EQ(j["band_source"], "calibration");
  EXPECT_NEAR(j["lambda"].get<double>(), 1.0, 5e-3);
  EXPECT_TRUE(std::filesystem::exists(art.figure_csv));
}

TEST(CliReport, BandFromScalarsAndCsv) {
  WarningCapture quiet;
  const auto dir = scratch("band_csv");
  auto j = reference_json();
  j["grid"] = {{"x_min", -12.0}, {"x_max", 12.0}, {"n", 512}};
  j["bands"] = {{"band0", {{"a", 1.0}, {"b", 1.0}}}, {"band1", {{"a", 1.0}, {"b", 1.0}}}};
  auto cfg = parse_config(j, dir);
  const auto [p0, p1] = build_nominals(cfg);
  auto art = cmd_band(cfg, dir);
  auto r = read_json(art.report_json);
  EXPECT_LE(fdband::testing::max_abs_diff(r["q0"].get<std::vector<double>>(), p0.values()), 1e-12);
  EXPECT_LE(fdband::testing::max_abs_diff(r["q1"].get<std::vector<double>>(), p1.values()), 1e-12);

  save_density_csv(dir / "lower0.csv", scaled_band(p0, 0.9, 1.8).lower());
  save_density_csv(dir / "upper0.csv", scaled_band(p0, 0.9, 1.8).upper());
  j["bands"]["band0"] = {{"lower_csv", "lower0.csv"}, {"upper_csv", "upper0.csv"}};
  j["bands"]["band1"] = {{"a", 0.85}, {"b", 1.4}};
  art = cmd_band(parse_config(j, dir), dir);
  r = read_json(art.report_json);
  const auto direct = solve_band_lfds(scaled_band(p0, 0.9, 1.8), scaled_band(p1, 0.85, 1.4));
  EXPECT_NEAR(r["lambda"].get<double>(), direct.lambda, 1e-9);

  j["bands"]["band0"] = {{"a", 1.2}, {"b", 2.0}};
  EXPECT_EQ(error_of([&] { cmd_band(parse_config(j, dir), dir); }), ErrorCode::InfeasibleBand);
}

TEST(CliReport, CsvNominals) {
  WarningCapture quiet;
  const auto dir = scratch("csv_nominals");
  const Grid g(-12.0, 12.0, 1024);
  save_density_csv(dir / "p0.csv", gaussian_density(g, -1.0, 1.0));
  save_density_csv(dir / "p1.csv", gaussian_density(g, 1.0, 2.0));
  auto j = reference_json();
  j.erase("grid");
  j["nominal0"] = {{"csv", "p0.csv"}};
  j["nominal1"] = {{"csv", "p1.csv"}};
  const auto cfg = parse_config(j, dir);
  const auto [p0, p1] = build_nominals(cfg);
  EXPECT_EQ(p0.size(), 1024u);
  const auto art = cmd_calibrate(cfg, dir);
  const auto c = read_json(art.report_json)["coefficients"];
  EXPECT_NEAR(c["a0"].get<double>(), 0.8881, 2e-3);
}

TEST(CliReport, SimulateTable) {
  WarningCapture quiet;
  auto cfg = reference_config();
  const auto a = cmd_simulate(cfg, scratch("sim_a"));
  const auto b = cmd_simulate(cfg, scratch("sim_b"));
  EXPECT_EQ(slurp(a.figure_csv), slurp(b.figure_csv));
  const auto rows = read_json(a.report_json)["rows"];
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[1]["pair"], "lfd");
  const auto& lfd = rows[1];
  EXPECT_LE(std::abs(lfd["alpha_hat"].get<double>() - lfd["alpha_quadrature"].get<double>()),
            lfd["ci"]["alpha"].get<double>());
  EXPECT_LE(std::abs(lfd["beta_hat"].get<double>() - lfd["beta_quadrature"].get<double>()),
            lfd["ci"]["beta"].get<double>());
  cfg.simulate.trials = 500;
  EXPECT_EQ(error_of([&] { cmd_simulate(cfg, scratch("sim_c")); }), ErrorCode::InvalidTrialCount);
}

TEST(CliReport, VerifyReport) {
  WarningCapture quiet;
  auto cfg = reference_config();
  cfg.verify.oracle_instances = 2;
  cfg.verify.oracle_resolution = 100;
  cfg.verify.product_count = 100;
  const auto art = cmd_verify(cfg, scratch("verify"));
  const auto j = read_json(art.report_json);
  std::vector<std::string> names;
  for (const auto& c : j["checks"]) {
    names.push_back(c["name"]);
    EXPECT_TRUE(c["passed"].get<bool>()) << c["name"];
  }
  for (const char* n : {"band_saddle", "ball_saddle", "negative_control_band", "negative_control_ball",
                        "product_saddle", "oracle_agreement", "kkt_stationarity", "constraint_activity"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), n), names.end()) << n;
  }
  EXPECT_TRUE(art.passed);
  EXPECT_TRUE(j["passed"].get<bool>());
}

TEST(CliReport, ExitCodes) {
  const auto dir = scratch("exit");
  const auto write = [&](const std::string& name, Json j) {
    write_json(dir / name, j);
    return (dir / name).string();
  };
  auto j = reference_json();
  j["grid"] = {{"x_min", -12.0}, {"x_max", 12.0}, {"n", 512}};
  EXPECT_EQ(run_cli("calibrate --config " + write("ok.json", j) + " --output-dir " + (dir / "ok").string()), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "ok" / "calibration.json"));

  auto tv = j;
  tv["family1"] = "tv";
  EXPECT_EQ(run_cli("calibrate --config " + write("tv.json", tv) + " --output-dir " + dir.string()), 6);

  auto infeasible = j;
  infeasible["bands"] = {{"band0", {{"a", 1.2}, {"b", 2.0}}}, {"band1", {{"a", 0.9}, {"b", 1.1}}}};
  EXPECT_EQ(run_cli("band --config " + write("inf.json", infeasible) + " --output-dir " + dir.string()), 5);

  auto bad = j;
  bad["unknown"] = true;
  EXPECT_EQ(run_cli("calibrate --config " + write("bad.json", bad) + " --output-dir " + dir.string()), 2);
  EXPECT_EQ(run_cli("calibrate --config " + (dir / "missing.json").string()), 7);
  EXPECT_EQ(run_cli("calibrate"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);

  auto overlap = j;
  overlap["nominal0"] = {{"gaussian", {{"mean", -0.1}, {"variance", 1.0}}}};
  overlap["nominal1"] = {{"gaussian", {{"mean", 0.1}, {"variance", 1.0}}}};
  overlap["epsilon0"] = overlap["epsilon1"] = 2.0;
  const int code = run_cli("calibrate --config " + write("overlap.json", overlap) + " --output-dir " + dir.string());
  EXPECT_TRUE(code == 4 || code == 3) << code;

  std::ofstream(dir / "malformed.json") << "{ not json";
  EXPECT_EQ(run_cli("calibrate --config " + (dir / "malformed.json").string()), 2);
}
