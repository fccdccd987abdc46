#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "robmiss/harness.hpp"

using namespace robmiss;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

RunConfig small_config(const std::string& out_dir) {
  RunConfig cfg;
  cfg.scenario.xi_level = XiLevel::moderate;
  cfg.scenario.gamma_level = GammaLevel::moderate;
  cfg.scenario.n = 300;
  cfg.scenario.seed = 31415;
  cfg.reps = 6;
  cfg.threads = 1;
  cfg.roster = {"IPW(X)", "OR(XV)", "RAIPW(X,XV)", "ROR(XV)"};
  cfg.tuning = default_tuning(cfg.scenario.xi_level, cfg.scenario.gamma_level);
  cfg.mc_draws_b = 20000;
  cfg.out_dir = out_dir;
  return cfg;
}

}  // namespace

TEST_CASE("roster labels parse into families and covariate lists") {
  const EstimatorRosterEntry a = parse_roster_label("AIPW(X,XV)");
  CHECK(a.family == Family::aipw);
  CHECK(!a.robust);
  CHECK(a.propensity_covariates == covariate_set("X"));
  CHECK(a.outcome_covariates == covariate_set("XV"));

  const EstimatorRosterEntry b = parse_roster_label("RAIPW(X_,X_V)");
  CHECK(b.family == Family::aipw);
  CHECK(b.robust);
  CHECK(b.propensity_covariates == std::vector<std::string>{"x2", "x3"});
  CHECK(b.outcome_covariates ==
        std::vector<std::string>{"x2", "x3", "v1", "v2", "v3"});

  const EstimatorRosterEntry c = parse_roster_label("RIPW(X)");
  CHECK(c.family == Family::ipw);
  CHECK(c.robust);

  const EstimatorRosterEntry d = parse_roster_label("ROR(X_V)");
  CHECK(d.family == Family::outcome_regression);
  CHECK(d.robust);

  CHECK_THROWS_AS(parse_roster_label("FOO(X)"), std::invalid_argument);
  CHECK_THROWS_AS(parse_roster_label("IPW(X,XV)"), std::invalid_argument);
  CHECK_THROWS_AS(parse_roster_label("AIPW(Q,XV)"), std::invalid_argument);

  // The full roster of the study parses; misspecified variants differ from
  // the correct ones only in the covariate lists.
  const auto roster = default_roster();
  CHECK(roster.size() == 20);
  for (const auto& label : roster) CHECK_NOTHROW(parse_roster_label(label));
  const auto correct = parse_roster_label("RAIPW(X,XV)");
  const auto missp = parse_roster_label("RAIPW(X_,XV)");
  CHECK(correct.family == missp.family);
  CHECK(correct.robust == missp.robust);
  CHECK(correct.outcome_covariates == missp.outcome_covariates);
  CHECK(correct.propensity_covariates != missp.propensity_covariates);
}

TEST_CASE("summarize: hand values and the rmse identity") {
  SUBCASE("all estimates equal the truth") {
    const SummaryRow r = summarize({{2.0, 3.0}, {2.0, 3.0}}, {2.0, 3.0});
    CHECK(r.bias_mu == 0.0);
    CHECK(r.sd_mu == 0.0);
    CHECK(r.rmse_mu == 0.0);
  }
  SUBCASE("two symmetric points") {
    const double t = 5.0;
    const SummaryRow r = summarize({{t - 1.0, 1.0}, {t + 1.0, 1.0}}, {t, 1.0});
    CHECK(r.bias_mu == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(r.sd_mu == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(r.rmse_mu == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("rmse^2 = bias^2 + sd^2 (reps-1)/reps") {
    std::vector<std::pair<double, double>> est;
    RngStream rng(5, 5);
    for (int i = 0; i < 37; ++i) est.push_back({rng.normal(), 1.0 + rng.uniform()});
    const SummaryRow r = summarize(est, {0.3, 1.2});
    const double lhs = r.rmse_mu * r.rmse_mu;
    const double rhs = r.bias_mu * r.bias_mu + r.sd_mu * r.sd_mu * 36.0 / 37.0;
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
  SUBCASE("empty list is rejected") {
    CHECK_THROWS_AS(summarize({}, {0.0, 1.0}), std::invalid_argument);
  }
}

TEST_CASE("smoke run: files exist with the right shapes") {
  const std::string dir = "harness_smoke_out";
  RunConfig cfg = small_config(dir);
  run_experiment(cfg);

  const std::string est = slurp(dir + "/estimates.csv");
  int lines = -1;  // header
  for (char ch : est)
    if (ch == '\n') ++lines;
  CHECK(lines == cfg.reps * static_cast<int>(cfg.roster.size()));
  CHECK(est.rfind("estimator,replicate,mu_hat,sigma_hat,se_mu,se_sigma,converged", 0) ==
        0);

  const std::string sum = slurp(dir + "/summary.csv");
  int sum_lines = -1;
  for (char ch : sum)
    if (ch == '\n') ++sum_lines;
  CHECK(sum_lines == static_cast<int>(cfg.roster.size()));

  const ExperimentResult result = run_experiment_in_memory(cfg);
  for (const auto& row : result.summary) CHECK(row.sd_mu > 0.0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("same seed reruns are byte-identical; different seeds differ") {
  RunConfig cfg = small_config("harness_det_a");
  run_experiment(cfg);
  RunConfig cfg2 = small_config("harness_det_b");
  run_experiment(cfg2);
  CHECK(slurp("harness_det_a/estimates.csv") == slurp("harness_det_b/estimates.csv"));
  CHECK(slurp("harness_det_a/summary.csv") == slurp("harness_det_b/summary.csv"));

  RunConfig cfg3 = small_config("harness_det_c");
  cfg3.scenario.seed = 999;
  run_experiment(cfg3);
  CHECK(slurp("harness_det_a/estimates.csv") != slurp("harness_det_c/estimates.csv"));
  for (const auto& dir : {"harness_det_a", "harness_det_b", "harness_det_c"})
    std::filesystem::remove_all(dir);
}

TEST_CASE("thread count does not change the output bytes") {
  RunConfig one = small_config("harness_thr_1");
  one.threads = 1;
  RunConfig two = small_config("harness_thr_2");
  two.threads = 2;
  run_experiment(one);
  run_experiment(two);
  CHECK(slurp("harness_thr_1/estimates.csv") == slurp("harness_thr_2/estimates.csv"));
  std::filesystem::remove_all("harness_thr_1");
  std::filesystem::remove_all("harness_thr_2");
}

TEST_CASE("boxplot stats json is written per estimator") {
  RunConfig cfg = small_config("harness_box");
  cfg.emit_boxplot_json = true;
  cfg.roster = {"IPW(X)", "OR(XV)"};
  run_experiment(cfg);
  const std::string js = slurp("harness_box/boxplot.json");
  CHECK(js.find("IPW(X)") != std::string::npos);
  CHECK(js.find("\"median\"") != std::string::npos);
  CHECK(js.find("\"whisker_low\"") != std::string::npos);
  std::filesystem::remove_all("harness_box");
}

TEST_CASE("config loading: defaults, overrides, and errors") {
  const std::string path = "harness_cfg.json";
  {
    std::ofstream os(path);
    os << R"json({"scenario": {"xi": "strong", "gamma": "moderate", "n": 250,
               "contamination": "c_asym"},
              "seed": 7, "reps": 3,
              "tuning": {"raipw_c_mu": 3.0},
              "roster": ["IPW(X)"]})json";
  }
  const RunConfig cfg = load_run_config(path);
  CHECK(cfg.scenario.xi_level == XiLevel::strong);
  CHECK(cfg.scenario.contamination == Contamination::c_asym);
  CHECK(cfg.scenario.n == 250);
  CHECK(cfg.reps == 3);
  CHECK(cfg.tuning.raipw_c_mu == 3.0);
  // Untouched keys keep the per-scenario defaults.
  CHECK(cfg.tuning.raipw_c_sigma == default_tuning(XiLevel::strong, GammaLevel::moderate).raipw_c_sigma);
  std::remove(path.c_str());

  {
    std::ofstream os(path);
    os << R"({"scenario": {"xi": "weird"}})";
  }
  CHECK_THROWS(load_run_config(path));
  std::remove(path.c_str());

  {
    std::ofstream os(path);
    os << R"({"reps": 3})";
  }
  CHECK_THROWS_WITH_AS(load_run_config(path), doctest::Contains("scenario"),
                       std::runtime_error);
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_run_config("no_such_file.json"), std::runtime_error);
}

TEST_CASE("weight diagnostics file") {
  ScenarioConfig sc;
  sc.n = 400;
  sc.seed = 2712;
  const Dataset d = generate_replicate(sc);
  const auto px = covariate_set("X");
  const PropensityModel pm =
      fit_logistic(d.R, build_design(d, px), PsiFunction::huber(1.35), px);
  const LocationScaleEstimate est =
      estimate_ripw(d, pm, PsiFunction::tukey(3.9), PsiFunction::tukey(5.4));

  const std::string path = "weights_test.csv";
  emit_weight_diagnostics(est, path);
  const std::string body = slurp(path);
  CHECK(body.rfind("index,inv_propensity,psi_weight,compound_weight", 0) == 0);
  int lines = -1;
  for (char ch : body)
    if (ch == '\n') ++lines;
  CHECK(lines == d.observed_count());
  std::remove(path.c_str());

  // Classical estimates carry no weights.
  const PropensityModel pm_ml =
      fit_logistic(d.R, build_design(d, px), PsiFunction::identity(), px);
  const LocationScaleEstimate classical = estimate_ipw_classical(d, pm_ml);
  CHECK_THROWS_WITH_AS(emit_weight_diagnostics(classical, path),
                       doctest::Contains("no weight record"), std::runtime_error);
}

TEST_CASE("an injected extreme outcome gets zero psi weight and zero compound") {
  ScenarioConfig sc;
  sc.n = 500;
  sc.seed = 31;
  Dataset d = generate_replicate(sc);
  int target = -1;
  for (int i = 0; i < d.n(); ++i)
    if (d.R[i] == 1) {
      target = i;
      break;
    }
  d.z2[target] = -1e6;

  const auto px = covariate_set("X");
  const PropensityModel pm =
      fit_logistic(d.R, build_design(d, px), PsiFunction::huber(1.35), px);
  const LocationScaleEstimate est =
      estimate_ripw(d, pm, PsiFunction::tukey(3.9), PsiFunction::tukey(5.4));
  REQUIRE(est.weights.has_value());
  bool found = false;
  for (const auto& row : est.weights->rows) {
    if (row.index != target) continue;
    found = true;
    CHECK(row.psi_weight == 0.0);
    CHECK(row.compound == 0.0);
    CHECK(row.inv_propensity > 1.0);
  }
  CHECK(found);
}

TEST_CASE("per-label failures are excluded from summaries and counted") {
  // A propensity set that separates perfectly on a tiny n forces a fit
  // failure; the harness records it instead of aborting.
  RunConfig cfg = small_config("harness_fail");
  cfg.scenario.n = 40;
  cfg.reps = 2;
  cfg.roster = {"OR(XV)"};
  const ExperimentResult r = run_experiment_in_memory(cfg);
  CHECK(r.rows.size() == 2);
  std::filesystem::remove_all("harness_fail");
}
