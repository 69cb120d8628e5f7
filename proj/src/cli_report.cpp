#include "fdband/cli_report.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>

#include "fdband/error.hpp"
#include "fdband/robust_test.hpp"
#include "fdband/verification.hpp"

namespace fdband {

namespace {

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) raise(ErrorCode::Config, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) raise(ErrorCode::Config, "unknown key '" + key + "' in " + where);
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

NominalSpec parse_nominal(const Json& j, const std::filesystem::path& base, const std::string& where) {
  check_keys(j, {"gaussian", "csv"}, where);
  NominalSpec s;
  if (j.contains("gaussian") == j.contains("csv")) {
    raise(ErrorCode::Config, where + " needs exactly one of 'gaussian' or 'csv'");
  }
  if (j.contains("gaussian")) {
    const Json& g = j.at("gaussian");
    check_keys(g, {"mean", "variance"}, where + ".gaussian");
    s.mean = g.at("mean").get<double>();
    s.variance = g.at("variance").get<double>();
  } else {
    s.csv = resolve(base, j.at("csv").get<std::string>());
  }
  return s;
}

BandSpec parse_band(const Json& j, const std::filesystem::path& base, const std::string& where) {
  check_keys(j, {"a", "b", "lower_csv", "upper_csv"}, where);
  BandSpec s;
  const bool scalars = j.contains("a") || j.contains("b");
  const bool files = j.contains("lower_csv") || j.contains("upper_csv");
  if (scalars == files) raise(ErrorCode::Config, where + " needs either a/b or lower_csv/upper_csv");
  if (scalars) {
    s.a = j.at("a").get<double>();
    s.b = j.at("b").get<double>();
  } else {
    s.lower_csv = resolve(base, j.at("lower_csv").get<std::string>());
    s.upper_csv = resolve(base, j.at("upper_csv").get<std::string>());
  }
  return s;
}

Grid config_grid(const RunConfig& cfg) {
  if (cfg.x_min || cfg.x_max || cfg.n) {
    if (!(cfg.x_min && cfg.x_max && cfg.n)) raise(ErrorCode::Config, "grid needs x_min, x_max and n");
    return Grid(*cfg.x_min, *cfg.x_max, *cfg.n);
  }
  for (const auto* s : {&cfg.nominal0, &cfg.nominal1}) {
    if (s->csv) return load_density_csv(*s->csv).grid();
  }
  return Grid(-12.0, 12.0, 4096);
}

GriddedDensity build_nominal(const NominalSpec& s, const Grid& grid) {
  if (s.csv) {
    GriddedDensity d = load_density_csv(*s.csv);
    return d.grid() == grid ? d : normalize(resample(d, grid));
  }
  if (!s.mean || !s.variance) raise(ErrorCode::Config, "nominal needs a gaussian or csv specification");
  return gaussian_density(grid, *s.mean, *s.variance);
}

BandModel build_band(const BandSpec& s, const GriddedDensity& p) {
  if (s.a) return scaled_band(p, *s.a, *s.b);
  auto load = [&](const std::filesystem::path& path) {
    GriddedMeasure m = load_measure_csv(path);
    return m.grid() == p.grid() ? m : resample(m, p.grid());
  };
  return BandModel(load(*s.lower_csv), load(*s.upper_csv));
}

Json check(const std::string& name, bool ok, Json detail) {
  return Json{{"name", name}, {"passed", ok}, {"detail", std::move(detail)}};
}

}  // namespace

RunConfig parse_config(const Json& j, const std::filesystem::path& base_dir) {
  try {
    check_keys(j,
               {"nominal0", "nominal1", "family0", "family1", "epsilon0", "epsilon1", "lambda", "grid", "tolerances",
                "seed", "output_dir", "bands", "verify", "simulate", "description"},
               "config");
    RunConfig c;
    if (!j.contains("nominal0") || !j.contains("nominal1")) raise(ErrorCode::Config, "config needs nominal0 and nominal1");
    c.nominal0 = parse_nominal(j.at("nominal0"), base_dir, "nominal0");
    c.nominal1 = parse_nominal(j.at("nominal1"), base_dir, "nominal1");
    c.family0 = j.value("family0", c.family0);
    c.family1 = j.value("family1", c.family1);
    c.epsilon0 = j.value("epsilon0", c.epsilon0);
    c.epsilon1 = j.value("epsilon1", c.epsilon1);
    c.lambda = j.value("lambda", c.lambda);
    if (!(c.epsilon0 >= 0.0) || !(c.epsilon1 >= 0.0)) raise(ErrorCode::Config, "epsilons must be nonnegative");
    if (!(c.lambda > 0.0)) raise(ErrorCode::Config, "lambda must be positive");
    family_from_name(c.family0);
    family_from_name(c.family1);
    if (j.contains("grid")) {
      const Json& g = j.at("grid");
      check_keys(g, {"x_min", "x_max", "n"}, "grid");
      c.x_min = g.at("x_min").get<double>();
      c.x_max = g.at("x_max").get<double>();
      const auto n = g.at("n").get<long long>();
      if (n < static_cast<long long>(Grid::kMinPoints)) raise(ErrorCode::InvalidGrid, "grid.n must be at least 16");
      c.n = static_cast<std::size_t>(n);
      Grid(*c.x_min, *c.x_max, *c.n);
    }
    if (j.contains("tolerances")) {
      const Json& t = j.at("tolerances");
      check_keys(t, {"fp_tol", "max_iters", "bisect_tol", "damping", "calib_tol", "p_floor"}, "tolerances");
      c.solver.fp_tol = t.value("fp_tol", c.solver.fp_tol);
      c.solver.max_iters = t.value("max_iters", c.solver.max_iters);
      c.solver.bisect_tol = t.value("bisect_tol", c.solver.bisect_tol);
      c.solver.damping = t.value("damping", c.solver.damping);
      c.calibration.calib_tol = t.value("calib_tol", c.calibration.calib_tol);
      c.calibration.p_floor = t.value("p_floor", c.calibration.p_floor);
      c.solver.validate();
      c.calibration.validate();
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    if (j.contains("bands")) {
      const Json& b = j.at("bands");
      check_keys(b, {"band0", "band1"}, "bands");
      c.band0 = parse_band(b.at("band0"), base_dir, "bands.band0");
      c.band1 = parse_band(b.at("band1"), base_dir, "bands.band1");
    }
    if (j.contains("verify")) {
      const Json& v = j.at("verify");
      check_keys(v,
                 {"probe_count", "product_grid", "product_count", "product_n", "oracle_instances",
                  "oracle_resolution"},
                 "verify");
      auto& s = c.verify;
      s.probe_count = v.value("probe_count", s.probe_count);
      s.product_grid = v.value("product_grid", s.product_grid);
      s.product_count = v.value("product_count", s.product_count);
      s.product_n = v.value("product_n", s.product_n);
      s.oracle_instances = v.value("oracle_instances", s.oracle_instances);
      s.oracle_resolution = v.value("oracle_resolution", s.oracle_resolution);
    }
    if (j.contains("simulate")) {
      const Json& v = j.at("simulate");
      check_keys(v, {"N", "trials", "threshold", "sampled_pairs"}, "simulate");
      auto& s = c.simulate;
      s.n_samples = v.value("N", s.n_samples);
      s.trials = v.value("trials", s.trials);
      if (v.contains("threshold") && !v.at("threshold").is_null()) s.threshold = v.at("threshold").get<double>();
      s.sampled_pairs = v.value("sampled_pairs", s.sampled_pairs);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::Config, std::string("malformed config: ") + e.what());
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) raise(ErrorCode::Io, "config file not found: " + path.string());
  return parse_config(read_json(path), path.parent_path());
}

std::filesystem::path resolve_output_dir(const std::optional<std::filesystem::path>& flag, const RunConfig& cfg) {
  if (flag) return *flag;
  if (cfg.output_dir) return *cfg.output_dir;
  if (const char* env = std::getenv("FDBAND_OUTPUT_DIR"); env && *env) return env;
  return "fdband_out";
}

std::pair<GriddedDensity, GriddedDensity> build_nominals(const RunConfig& cfg) {
  const Grid grid = config_grid(cfg);
  return {build_nominal(cfg.nominal0, grid), build_nominal(cfg.nominal1, grid)};
}

std::pair<UncertaintyBall, UncertaintyBall> build_balls(const RunConfig& cfg) {
  auto [p0, p1] = build_nominals(cfg);
  return {UncertaintyBall{std::move(p0), family_from_name(cfg.family0), cfg.epsilon0},
          UncertaintyBall{std::move(p1), family_from_name(cfg.family1), cfg.epsilon1}};
}

RunArtifact cmd_calibrate(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  const auto [ball0, ball1] = build_balls(cfg);
  CalibrationResult res = calibrate(ball0, ball1, cfg.lambda, cfg.calibration);
  Json report = to_json(res);
  const auto [k0, k1] = kkt_stationarity_residuals(res, cfg.calibration.p_floor);
  report["kkt_residuals"] = {{"stationarity0", k0}, {"stationarity1", k1}};
  RunArtifact art;
  art.report_json = out_dir / "calibration.json";
  art.figure_csv = out_dir / "figure.csv";
  write_json(art.report_json, report);
  write_figure_csv(art.figure_csv, res);
  art.calibration = std::move(res);
  return art;
}

RunArtifact cmd_band(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  const auto [ball0, ball1] = build_balls(cfg);
  std::optional<BandModel> band0, band1;
  std::string source = "config";
  RunArtifact art;
  if (cfg.band0 && cfg.band1) {
    band0 = build_band(*cfg.band0, ball0.nominal);
    band1 = build_band(*cfg.band1, ball1.nominal);
  } else {
    CalibrationResult res = calibrate(ball0, ball1, cfg.lambda, cfg.calibration);
    band0 = res.band0;
    band1 = res.band1;
    source = "calibration";
    art.calibration = std::move(res);
  }
  const LFDSolution sol = solve_band_lfds(*band0, *band1, cfg.solver);
  Json report = to_json(sol);
  report["band_source"] = source;
  report["divergence0"] = number(eval_divergence(sol.q0, ball0.nominal, ball0.family));
  report["divergence1"] = number(eval_divergence(sol.q1, ball1.nominal, ball1.family));
  report["doubly_middle_mass"] = doubly_middle_mass(sol.q0, sol.regions0, sol.regions1);
  art.report_json = out_dir / "band_solution.json";
  art.figure_csv = out_dir / "band_figure.csv";
  write_json(art.report_json, report);
  write_band_csv(art.figure_csv, *band0, *band1, sol);
  return art;
}

RunArtifact cmd_verify(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  const auto [ball0, ball1] = build_balls(cfg);
  const auto& vs = cfg.verify;
  CalibrationResult cal = calibrate(ball0, ball1, cfg.lambda, cfg.calibration);
  RunArtifact art;
  Json checks = Json::array();
  auto add_probe = [&](const std::string& name, const ProbeReport& rep, bool expect_violation = false) {
    const bool ok = expect_violation ? !rep.passed() : rep.passed();
    checks.push_back(check(name, ok, to_json(rep)));
    art.probe_reports.push_back(rep);
    art.passed = art.passed && ok;
  };

  // Band probes use the constant-kappa rule, ball probes the multiplier
  // profile on the boundary set.
  const DecisionRule band_rule = make_rule(cal, false);
  const DecisionRule ball_rule = make_rule(cal, true);
  const Sampler s_band0 = band_sampler(cal.band0), s_band1 = band_sampler(cal.band1);
  const Sampler s_ball0 = ball_sampler(ball0), s_ball1 = ball_sampler(ball1);
  const Sampler a_band0 = anchored_sampler(s_band0, cal.q0), a_band1 = anchored_sampler(s_band1, cal.q1);
  const Sampler a_ball0 = anchored_sampler(s_ball0, cal.q0), a_ball1 = anchored_sampler(s_ball1, cal.q1);
  add_probe("band_saddle", saddle_probe(band_rule, s_band0, s_band1, vs.probe_count, cfg.seed));
  add_probe("ball_saddle", saddle_probe(ball_rule, s_ball0, s_ball1, vs.probe_count, cfg.seed));
  add_probe("band_saddle_anchored", saddle_probe(band_rule, a_band0, a_band1, vs.probe_count, cfg.seed));
  add_probe("ball_saddle_anchored", saddle_probe(ball_rule, a_ball0, a_ball1, vs.probe_count, cfg.seed));

  DecisionRule negative = band_rule;
  negative.q0 = perturb_lfd(band_rule, 0.01);
  add_probe("negative_control_band", saddle_probe(negative, a_band0, a_band1, vs.probe_count, cfg.seed), true);
  add_probe("negative_control_ball", saddle_probe(negative, a_ball0, a_ball1, vs.probe_count, cfg.seed), true);

  {
    const Grid& fine = cal.grid();
    const Grid coarse(fine.x_min(), fine.x_max(), vs.product_grid);
    const GriddedDensity c0 = normalize(resample(ball0.nominal, coarse));
    const GriddedDensity c1 = normalize(resample(ball1.nominal, coarse));
    const BandModel cb0 = scaled_band(c0, cal.a0, cal.b0), cb1 = scaled_band(c1, cal.a1, cal.b1);
    const LFDSolution sol = solve_band_lfds(cb0, cb1, cfg.solver);
    add_probe("product_saddle",
              product_saddle_probe(make_rule(sol), cb0, cb1, vs.product_n, vs.product_count, cfg.seed));
  }

  {
    Json rows = Json::array();
    bool ok = true;
    for (int i = 0; i < vs.oracle_instances; ++i) {
      const DiscreteInstance inst = random_discrete_instance(counter_hash(cfg.seed, 60, i, 0));
      const LFDSolution sol = solve_band_lfds(inst.band0, inst.band1, cfg.solver);
      const BruteForceResult bf = brute_force_band_lfds(inst.band0, inst.band1, sol.lambda, vs.oracle_resolution,
                                                        std::make_pair(sol.q0.values(), sol.q1.values()));
      const bool row_ok = *bf.target_distance_steps <= 2.0;
      ok = ok && row_ok;
      Json row = to_json(bf);
      row["p0"] = inst.p0.values();
      row["p1"] = inst.p1.values();
      row["lambda"] = sol.lambda;
      row["solver_q0"] = sol.q0.values();
      row["solver_q1"] = sol.q1.values();
      rows.push_back(row);
    }
    checks.push_back(check("oracle_agreement", ok, rows));
    art.passed = art.passed && ok;
  }

  {
    const auto [k0, k1] = kkt_stationarity_residuals(cal, cfg.calibration.p_floor);
    const bool ok = std::max(k0, k1) <= 1e-6 * cal.lambda;
    checks.push_back(check("kkt_stationarity", ok, {{"stationarity0", k0}, {"stationarity1", k1}}));
    art.passed = art.passed && ok;
    const double d = std::max(std::abs(cal.residuals[2]), std::abs(cal.residuals[3]));
    checks.push_back(check("constraint_activity", d <= 1e-6, {{"max_divergence_residual", d}}));
    art.passed = art.passed && d <= 1e-6;
  }

  Json report{{"seed", cfg.seed}, {"passed", art.passed}, {"checks", checks}};
  report["containment"] = {{"h0", to_json(containment_probe(ball0, cal.band0, vs.probe_count, cfg.seed))},
                           {"h1", to_json(containment_probe(ball1, cal.band1, vs.probe_count, cfg.seed))}};
  art.report_json = out_dir / "verify.json";
  write_json(art.report_json, report);
  art.calibration = std::move(cal);
  return art;
}

RunArtifact cmd_simulate(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  const auto& ss = cfg.simulate;
  if (ss.trials < 1000) raise(ErrorCode::InvalidTrialCount, "simulate needs at least 1000 trials");
  const auto [ball0, ball1] = build_balls(cfg);
  CalibrationResult cal = calibrate(ball0, ball1, cfg.lambda, cfg.calibration);
  const DecisionRule rule = make_rule(cal, true);

  struct Pair {
    std::string name;
    GriddedDensity h0, h1;
  };
  std::vector<Pair> pairs{{"nominal", ball0.nominal, ball1.nominal}, {"lfd", cal.q0, cal.q1}};
  for (int k = 0; k < ss.sampled_pairs; ++k) {
    pairs.push_back({"sampled_" + std::to_string(k), sample_ball_member(ball0, counter_hash(cfg.seed, 70, k, 0)),
                     sample_ball_member(ball1, counter_hash(cfg.seed, 70, k, 1))});
  }

  RunArtifact art;
  art.report_json = out_dir / "simulation.json";
  art.figure_csv = out_dir / "simulation.csv";
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(art.figure_csv);
  if (!csv) raise(ErrorCode::Io, "cannot open " + art.figure_csv.string());
  csv << std::setprecision(17) << "pair,N,trials,seed,alpha_hat,beta_hat,ci_alpha,ci_beta,alpha_quadrature,beta_quadrature\n";
  Json rows = Json::array();
  for (const auto& p : pairs) {
    const SimulationReport rep = simulate_errors(rule, p.h0, p.h1, ss.n_samples, ss.trials, cfg.seed, ss.threshold);
    Json row = to_json(rep);
    row["pair"] = p.name;
    csv << p.name << ',' << rep.n_samples << ',' << rep.trials << ',' << rep.seed << ',' << rep.alpha_hat << ','
        << rep.beta_hat << ',' << rep.ci_alpha << ',' << rep.ci_beta << ',';
    if (ss.n_samples == 1 && !ss.threshold) {
      const auto e = error_probabilities(rule, p.h0, p.h1);
      row["alpha_quadrature"] = e.alpha;
      row["beta_quadrature"] = e.beta;
      csv << e.alpha << ',' << e.beta;
    } else {
      csv << ',';
    }
    csv << '\n';
    rows.push_back(row);
  }
  if (!csv) raise(ErrorCode::Io, "failed writing " + art.figure_csv.string());
  write_json(art.report_json, Json{{"rows", rows}});
  art.calibration = std::move(cal);
  return art;
}

}  // namespace fdband
