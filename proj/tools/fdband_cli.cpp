#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "fdband/cli_report.hpp"
#include "fdband/error.hpp"

namespace {

using namespace fdband;

struct Flags {
  std::string config;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

void summarize(const std::string& stage, const RunArtifact& art, bool verbose) {
  if (!verbose) return;
  std::cout << stage << ": " << art.report_json.string();
  if (!art.figure_csv.empty()) std::cout << ", " << art.figure_csv.string();
  std::cout << '\n';
  if (art.calibration) {
    const auto& c = *art.calibration;
    std::printf("  a0=%.6f b0=%.6f a1=%.6f b1=%.6f max_residual=%.3e (%s, %d iterations)\n", c.a0, c.b0, c.a1, c.b1,
                c.max_residual(), c.strategy_used.c_str(), c.iterations);
  }
  for (const auto& p : art.probe_reports) {
    std::printf("  probe max_violation=%.3e tolerance=%.3e\n", p.max_violation, p.tolerance);
  }
}

int run(const std::string& stage, const Flags& flags) {
  const std::filesystem::path config_path =
      stage == "reproduce-paper-example" && flags.config.empty()
          ? std::filesystem::path(FDBAND_CONFIG_DIR) / "paper_example.json"
          : std::filesystem::path(flags.config);
  if (config_path.empty()) raise(ErrorCode::Config, "--config is required");
  RunConfig cfg = load_config(config_path);
  if (flags.seed) cfg.seed = *flags.seed;
  std::optional<std::filesystem::path> flag_dir;
  if (flags.output_dir) flag_dir = *flags.output_dir;
  const auto out = resolve_output_dir(flag_dir, cfg);

  if (stage == "calibrate") {
    summarize(stage, cmd_calibrate(cfg, out), flags.verbose);
  } else if (stage == "band") {
    summarize(stage, cmd_band(cfg, out), flags.verbose);
  } else if (stage == "simulate") {
    summarize(stage, cmd_simulate(cfg, out), flags.verbose);
  } else {
    if (stage == "reproduce-paper-example") {
      summarize("calibrate", cmd_calibrate(cfg, out), flags.verbose);
      summarize("band", cmd_band(cfg, out), flags.verbose);
    }
    const RunArtifact art = cmd_verify(cfg, out);
    summarize("verify", art, flags.verbose);
    if (!art.passed) {
      std::cerr << "verification failed, see " << art.report_json.string() << '\n';
      return kExitVerificationFailed;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Least favorable distributions for f-divergence balls and density bands"};
  app.require_subcommand(1);
  Flags flags;
  const std::pair<const char*, const char*> commands[] = {
      {"calibrate", "Solve for the band coefficients and ball LFDs"},
      {"band", "Solve the band LFDs and the threshold"},
      {"verify", "Run saddle, oracle and stationarity checks"},
      {"simulate", "Monte Carlo error probabilities of the robust test"},
      {"reproduce-paper-example", "Run calibrate, band and verify on the bundled example"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    if (std::string(name) == "reproduce-paper-example") {
      sub->add_option("--config", flags.config, "JSON config (defaults to the bundled example)");
    } else {
      sub->add_option("--config", flags.config, "JSON config")->required();
    }
    sub->add_option("--output-dir", flags.output_dir, "Output directory");
    sub->add_option("--seed", flags.seed, "Override the config seed");
    sub->add_flag("--verbose", flags.verbose, "Print a summary of each stage");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    return run(app.get_subcommands().front()->get_name(), flags);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 9;
  }
}
