// Command-line front end: scenario runs, tuning calibration, closed-form
// truth values, and single-dataset weight diagnostics.
#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <iostream>

#include "robmiss/harness.hpp"

namespace {

using namespace robmiss;

std::vector<double> make_grid(double lo, double hi, double step) {
  std::vector<double> g;
  for (double c = lo; c <= hi + 1e-9; c += step) g.push_back(c);
  return g;
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            std::optional<int> reps, std::optional<std::string> out,
            std::optional<int> threads) {
  RunConfig cfg = load_run_config(config_path);
  if (seed) cfg.scenario.seed = *seed;
  if (reps) cfg.reps = *reps;
  if (out) cfg.out_dir = *out;
  if (threads) cfg.threads = *threads;
  run_experiment(cfg);
  std::cout << "wrote " << cfg.out_dir << "/estimates.csv and summary.csv\n";
  return 0;
}

int cmd_truth(const std::string& xi, const std::string& gamma) {
  const auto print_one = [](XiLevel x, GammaLevel g) {
    ScenarioConfig sc;
    sc.xi_level = x;
    sc.gamma_level = g;
    const auto [mu, sigma] = true_beta(sc);
    std::printf("xi=%-8s gamma=%-8s mu0=%.10f sigma0=%.10f\n", to_string(x).c_str(),
                to_string(g).c_str(), mu, sigma);
  };
  if (!xi.empty() && !gamma.empty()) {
    print_one(parse_xi_level(xi), parse_gamma_level(gamma));
    return 0;
  }
  for (GammaLevel g : {GammaLevel::strong, GammaLevel::moderate})
    for (XiLevel x : {XiLevel::strong, XiLevel::moderate, XiLevel::none})
      print_one(x, g);
  return 0;
}

int cmd_calibrate(const std::string& xi, const std::string& gamma,
                  const std::string& family, int reps, std::uint64_t seed,
                  int threads, double grid_min, double grid_max, double grid_step,
                  std::optional<double> sg_min, std::optional<double> sg_max) {
  CalibrationOptions opts;
  opts.scenario.xi_level = parse_xi_level(xi);
  opts.scenario.gamma_level = parse_gamma_level(gamma);
  opts.scenario.seed = seed;
  opts.reps = reps;
  opts.threads = threads;
  opts.tuning = default_tuning(opts.scenario.xi_level, opts.scenario.gamma_level);
  opts.grid_mu = make_grid(grid_min, grid_max, grid_step);
  opts.grid_sigma = make_grid(sg_min.value_or(grid_min), sg_max.value_or(grid_max),
                              grid_step);

  const auto report = [](const char* name, const CalibrationResult& r) {
    std::printf("%s: c_mu=%.3f (efficiency %.4f%s)  c_sigma=%.3f (efficiency %.4f%s)\n",
                name, r.c_mu, r.efficiency_mu,
                r.bracketed_mu ? "" : ", WARNING target not bracketed", r.c_sigma,
                r.efficiency_sigma,
                r.bracketed_sigma ? "" : ", WARNING target not bracketed");
  };
  if (family == "raipw" || family == "both")
    report("RAIPW", calibrate_tuning_raipw(opts));
  if (family == "ror" || family == "both") {
    CalibrationOptions ror = opts;
    report("ROR", calibrate_tuning_ror(ror));
  }
  return 0;
}

int cmd_diagnostics(const std::string& xi, const std::string& gamma, int n,
                    const std::string& contamination, double rate,
                    std::uint64_t seed, const std::string& estimator,
                    const std::string& out_path,
                    const std::string& dataset_path) {
  ScenarioConfig sc;
  sc.xi_level = parse_xi_level(xi);
  sc.gamma_level = parse_gamma_level(gamma);
  sc.n = n;
  sc.contamination = parse_contamination(contamination);
  sc.contamination_rate = rate;
  sc.seed = seed;
  const Dataset data = generate_replicate(sc);
  if (!dataset_path.empty()) write_dataset_csv(data, dataset_path);

  const EstimatorRosterEntry entry = parse_roster_label(estimator);
  if (!entry.robust)
    throw std::runtime_error("weight diagnostics need a robust estimator label");
  const TuningConstants tuning = default_tuning(sc.xi_level, sc.gamma_level);
  const auto rows =
      run_replicate(data, sc, {entry}, tuning, 200000, /*compute_se=*/false);
  if (rows.empty() || !rows.front().converged)
    throw std::runtime_error("estimator did not converge on this dataset");

  // Re-run the single estimate directly so the weight record is in hand.
  const PsiFunction psi_mu = PsiFunction::tukey(tuning.raipw_c_mu);
  const PsiFunction psi_sigma = PsiFunction::tukey(tuning.raipw_c_sigma);
  const PropensityModel pm =
      fit_logistic(data.R, build_design(data, entry.propensity_covariates),
                   PsiFunction::huber(tuning.logit_c), entry.propensity_covariates);
  LocationScaleEstimate est;
  if (entry.family == Family::ipw) {
    est = estimate_ripw(data, pm, psi_mu, psi_sigma);
  } else if (entry.family == Family::aipw) {
    const OutcomeModel om = fit_outcome_model(
        data.z2, build_design(data, entry.outcome_covariates), data.R,
        PsiFunction::tukey(tuning.reg_c1), PsiFunction::huber(tuning.reg_c2),
        entry.outcome_covariates);
    RobustSolveOptions opts;
    opts.mc_draws_b = 200000;
    opts.b_stream = auxiliary_stream(sc);
    est = estimate_raipw(data, pm, om, psi_mu, psi_sigma, opts);
  } else {
    throw std::runtime_error("weight diagnostics apply to RIPW/RAIPW labels");
  }
  emit_weight_diagnostics(est, out_path);
  std::printf("mu=%.6f sigma=%.6f -> %s\n", est.mu, est.sigma, out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust location-scale estimation with missing outcomes"};
  app.require_subcommand(1);

  // run
  std::string config_path;
  std::optional<std::uint64_t> seed_opt;
  std::optional<int> reps_opt, threads_opt;
  std::optional<std::string> out_opt;
  auto* run = app.add_subcommand("run", "Run a scenario x estimator grid from a config");
  run->add_option("config", config_path, "JSON config path")->required();
  run->add_option("--seed", seed_opt, "Override the master seed");
  run->add_option("--reps", reps_opt, "Override the replicate count");
  run->add_option("--out", out_opt, "Override the output directory");
  run->add_option("--threads", threads_opt, "Override the worker count");

  // truth
  std::string xi = "", gamma = "";
  auto* truth = app.add_subcommand("truth", "Print closed-form (mu0, sigma0)");
  truth->add_option("--xi", xi, "strong|moderate|none");
  truth->add_option("--gamma", gamma, "strong|moderate");

  // calibrate
  std::string cal_xi = "moderate", cal_gamma = "moderate", family = "both";
  int cal_reps = 400, cal_threads = 1;
  std::uint64_t cal_seed = 7001;
  double grid_min = 2.4, grid_max = 6.0, grid_step = 0.1;
  std::optional<double> sg_min, sg_max;
  auto* cal = app.add_subcommand("calibrate", "Efficiency-based tuning constants");
  cal->add_option("--xi", cal_xi);
  cal->add_option("--gamma", cal_gamma);
  cal->add_option("--family", family, "raipw|ror|both");
  cal->add_option("--reps", cal_reps);
  cal->add_option("--seed", cal_seed);
  cal->add_option("--threads", cal_threads);
  cal->add_option("--grid-min", grid_min);
  cal->add_option("--grid-max", grid_max);
  cal->add_option("--grid-step", grid_step);
  cal->add_option("--sigma-grid-min", sg_min);
  cal->add_option("--sigma-grid-max", sg_max);

  // diagnostics
  std::string dg_xi = "moderate", dg_gamma = "moderate", dg_contam = "clean";
  std::string dg_estimator = "RIPW(X)", dg_out = "weights.csv", dg_dataset = "";
  int dg_n = 1000;
  double dg_rate = 0.05;
  std::uint64_t dg_seed = 1;
  auto* dg = app.add_subcommand("diagnostics",
                                "Weight diagnostics on one generated dataset");
  dg->add_option("--xi", dg_xi);
  dg->add_option("--gamma", dg_gamma);
  dg->add_option("--n", dg_n);
  dg->add_option("--contamination", dg_contam);
  dg->add_option("--rate", dg_rate);
  dg->add_option("--seed", dg_seed);
  dg->add_option("--estimator", dg_estimator, "RIPW(...) or RAIPW(...)");
  dg->add_option("--out", dg_out, "Weight CSV path");
  dg->add_option("--dump-dataset", dg_dataset, "Also write the dataset CSV here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(config_path, seed_opt, reps_opt, out_opt, threads_opt);
    if (truth->parsed()) return cmd_truth(xi, gamma);
    if (cal->parsed())
      return cmd_calibrate(cal_xi, cal_gamma, family, cal_reps, cal_seed, cal_threads,
                           grid_min, grid_max, grid_step, sg_min, sg_max);
    if (dg->parsed())
      return cmd_diagnostics(dg_xi, dg_gamma, dg_n, dg_contam, dg_rate, dg_seed,
                             dg_estimator, dg_out, dg_dataset);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
