#include <doctest.h>

#include <cmath>

#include "robmiss/dgp.hpp"
#include "robmiss/estimators.hpp"
#include "robmiss/numerics.hpp"

using namespace robmiss;

namespace {

// Intercept + x1 logistic model with fixed coefficients.
PropensityModel fixed_propensity(double g0, double g1) {
  PropensityModel pm;
  pm.gamma.resize(2);
  pm.gamma << g0, g1;
  pm.psi = PsiFunction::identity();
  pm.design_columns = {"x1"};
  return pm;
}

// pi == 1 up to the clamp for every unit.
PropensityModel always_observed() { return fixed_propensity(50.0, 0.0); }

Dataset tiny_dataset(const std::vector<double>& x1, const std::vector<double>& z2,
                     const std::vector<int>& r) {
  const int n = static_cast<int>(x1.size());
  Dataset d;
  d.X = Eigen::MatrixXd::Zero(n, 3);
  d.V = Eigen::MatrixXd::Zero(n, 3);
  for (int i = 0; i < n; ++i) d.X(i, 0) = x1[i];
  d.R.resize(n);
  for (int i = 0; i < n; ++i) d.R[i] = r[i];
  d.z2.resize(n);
  for (int i = 0; i < n; ++i) d.z2[i] = z2[i];
  d.contaminated.assign(n, 0);
  return d;
}

Dataset moderate_replicate(int n, std::uint64_t seed, std::uint64_t rep,
                           Contamination contamination = Contamination::clean) {
  ScenarioConfig cfg;
  cfg.xi_level = XiLevel::moderate;
  cfg.gamma_level = GammaLevel::moderate;
  cfg.n = n;
  cfg.seed = seed;
  cfg.replicate_index = rep;
  cfg.contamination = contamination;
  return generate_replicate(cfg);
}

struct FittedModels {
  PropensityModel pm_ml, pm_rob;
  OutcomeModel om_ols, om_rob;
};

FittedModels fit_all(const Dataset& d) {
  FittedModels f;
  const auto px = covariate_set("X");
  const auto ox = covariate_set("XV");
  f.pm_ml = fit_logistic(d.R, build_design(d, px), PsiFunction::identity(), px);
  f.pm_rob = fit_logistic(d.R, build_design(d, px), PsiFunction::huber(1.35), px);
  f.om_ols = fit_outcome_ols(d.z2, build_design(d, ox), d.R, ox);
  f.om_rob = fit_outcome_model(d.z2, build_design(d, ox), d.R,
                               PsiFunction::tukey(4.685), PsiFunction::huber(1.345), ox);
  return f;
}

}  // namespace

TEST_CASE("ipw with full data and unit propensities is the sample moments") {
  const Dataset d =
      tiny_dataset({0.1, -0.3, 0.8, 0.5}, {1.0, 2.0, 3.0, 6.0}, {1, 1, 1, 1});
  const LocationScaleEstimate est = estimate_ipw_classical(d, always_observed());
  CHECK(est.mu == doctest::Approx(3.0).epsilon(1e-12));
  const double var = ((1 - 3.) * (1 - 3.) + (2 - 3.) * (2 - 3.) + 0 + 9.0) / 4.0;
  CHECK(est.sigma == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
}

TEST_CASE("ipw hand computation with two observed points") {
  // pi = (0.5, ~1): mu = (0/0.5 + 2) / (1/0.5 + 1) = 2/3.
  const Dataset d = tiny_dataset({0.0, 1.0}, {0.0, 2.0}, {1, 1});
  const PropensityModel pm = fixed_propensity(0.0, 40.0);
  const LocationScaleEstimate est = estimate_ipw_classical(d, pm);
  CHECK(est.mu == doctest::Approx(2.0 / 3.0).epsilon(1e-5));
}

TEST_CASE("no-missingness collapse: ipw equals aipw equals full-data moments") {
  const Dataset d = moderate_replicate(400, 90, 0);
  Dataset full = d;
  full.R.setOnes();
  const PropensityModel pm = always_observed();
  const auto ox = covariate_set("XV");
  const OutcomeModel om = fit_outcome_ols(full.z2, build_design(full, ox), full.R, ox);

  const LocationScaleEstimate ipw = estimate_ipw_classical(full, pm);
  const LocationScaleEstimate aipw = estimate_aipw_classical(full, pm, om);
  const double mean = full.z2.mean();
  double ss = 0;
  for (int i = 0; i < full.n(); ++i)
    ss += (full.z2[i] - mean) * (full.z2[i] - mean);
  const double sd = std::sqrt(ss / full.n());
  CHECK(ipw.mu == doctest::Approx(mean).epsilon(1e-12));
  CHECK(ipw.sigma == doctest::Approx(sd).epsilon(1e-12));
  CHECK(aipw.mu == doctest::Approx(mean).epsilon(1e-9));
  CHECK(aipw.sigma == doctest::Approx(sd).epsilon(1e-9));
}

TEST_CASE("aipw with a perfect outcome model returns the mean of the fits") {
  // z2 is an exact linear function of x1, so htilde == z2 and xi2 = 0.
  Dataset d = tiny_dataset({0.0, 1.0, 2.0, 3.0, 4.0, 5.0},
                           {0.0, 2.0, 4.0, 6.0, 8.0, 10.0}, {1, 0, 1, 0, 1, 1});
  OutcomeModel om;
  om.xi1.resize(2);
  om.xi1 << 0.0, 2.0;
  om.xi2 = 0.0;
  om.design_columns = {"x1"};
  const PropensityModel pm = fixed_propensity(0.3, -0.2);
  const LocationScaleEstimate est = estimate_aipw_classical(d, pm, om);
  CHECK(est.mu == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("outcome regression trivia") {
  SUBCASE("constant model") {
    Dataset d = tiny_dataset({1.0, 2.0, 3.0}, {5.0, 6.0, 7.0}, {1, 1, 1});
    OutcomeModel om;
    om.xi1.resize(2);
    om.xi1 << 4.0, 0.0;
    om.xi2 = 1.5;
    om.design_columns = {"x1"};
    const LocationScaleEstimate est = estimate_or_classical(d, om);
    CHECK(est.mu == 4.0);
    CHECK(est.sigma == 1.5);
  }
  SUBCASE("ols on fully observed data preserves the sample mean") {
    const Dataset d = moderate_replicate(300, 17, 2);
    Dataset full = d;
    full.R.setOnes();
    const auto ox = covariate_set("XV");
    const OutcomeModel om =
        fit_outcome_ols(full.z2, build_design(full, ox), full.R, ox);
    const LocationScaleEstimate est = estimate_or_classical(full, om);
    CHECK(est.mu == doctest::Approx(full.z2.mean()).epsilon(1e-12));
  }
}

TEST_CASE("marginal consistency constant") {
  CHECK(compute_constant_B_marginal(PsiFunction::identity()) == 1.0);
  CHECK(compute_constant_B_marginal(PsiFunction::huber(1.345)) ==
        doctest::Approx(0.71016454826904851).epsilon(1e-10));
  const double b1 = compute_constant_B_marginal(PsiFunction::tukey(5.4));
  const double b2 = compute_constant_B_marginal(PsiFunction::tukey(5.4));
  CHECK(b1 == b2);
  CHECK(b1 == doctest::Approx(0.67868972273993393).epsilon(1e-8));
}

TEST_CASE("identity reductions on random datasets") {
  for (int rep = 0; rep < 20; ++rep) {
    const Dataset d = moderate_replicate(300, 1200, rep);
    const FittedModels f = fit_all(d);

    const LocationScaleEstimate ipw = estimate_ipw_classical(d, f.pm_ml);
    RobustSolveOptions opts;
    const LocationScaleEstimate ripw = estimate_ripw(
        d, f.pm_ml, PsiFunction::identity(), PsiFunction::identity(), opts);
    CHECK(std::abs(ripw.mu - ipw.mu) < 1e-6);
    CHECK(std::abs(ripw.sigma - ipw.sigma) < 1e-6);

    const LocationScaleEstimate aipw = estimate_aipw_classical(d, f.pm_ml, f.om_ols);
    RobustSolveOptions aopts;
    aopts.a_override = 0.0;
    aopts.b_override = 1.0;
    const LocationScaleEstimate raipw = estimate_raipw(
        d, f.pm_ml, f.om_ols, PsiFunction::identity(), PsiFunction::identity(), aopts);
    CHECK(std::abs(raipw.mu - aipw.mu) < 1e-5);
    CHECK(std::abs(raipw.sigma - aipw.sigma) < 1e-5);

    const LocationScaleEstimate orc = estimate_or_classical(d, f.om_ols);
    const LocationScaleEstimate ror = estimate_ror(d, f.om_ols, f.om_ols);
    CHECK(ror.mu == doctest::Approx(orc.mu).epsilon(1e-12));
    CHECK(ror.sigma == doctest::Approx(orc.sigma).epsilon(1e-12));
  }
}

TEST_CASE("integrated working model") {
  const Dataset d = moderate_replicate(300, 21, 0);
  const FittedModels f = fit_all(d);
  const Eigen::VectorXd z1 = build_design(d, covariate_set("XV")).row(4).transpose();

  SUBCASE("identity psi gives the gaussian closed form") {
    const double mu = 1.2, sigma = 3.0;
    const auto [h1, h2] = working_model_h(z1, mu, sigma, f.om_ols,
                                          PsiFunction::identity(),
                                          PsiFunction::identity(), 0.0, 1.0);
    const double ht = predict_mean(f.om_ols, z1);
    CHECK(h1 == doctest::Approx((ht - mu) / sigma).epsilon(1e-9));
    const double expect_h2 =
        ((ht - mu) * (ht - mu) + f.om_ols.xi2 * f.om_ols.xi2) / (sigma * sigma) - 1.0;
    CHECK(h2 == doctest::Approx(expect_h2).epsilon(1e-9));
  }

  SUBCASE("symmetry: h1 vanishes when the fitted mean equals mu") {
    const double mu = predict_mean(f.om_rob, z1);
    const auto [h1, h2] = working_model_h(z1, mu, 2.5, f.om_rob,
                                          PsiFunction::tukey(3.9),
                                          PsiFunction::tukey(5.4), 0.0, 0.0);
    CHECK(std::abs(h1) < 1e-10);
    CHECK(h2 > 0.0);  // E[psi^2] with B = 0
  }

  SUBCASE("monte carlo oracle at generic points") {
    RngStream rng(5150, 0);
    const PsiFunction pmu = PsiFunction::tukey(3.9);
    const PsiFunction psg = PsiFunction::tukey(5.4);
    for (int k = 0; k < 3; ++k) {
      const Eigen::VectorXd z =
          build_design(d, covariate_set("XV")).row(10 + 7 * k).transpose();
      const double mu = 1.5, sigma = 3.6;
      const auto [h1, h2] = working_model_h(z, mu, sigma, f.om_rob, pmu, psg, 0.0, 0.0);
      const double ht = predict_mean(f.om_rob, z);
      const int n = 2000000;
      double s1 = 0, s2 = 0, q1 = 0, q2 = 0;
      for (int i = 0; i < n; ++i) {
        const double u = (ht + f.om_rob.xi2 * rng.normal() - mu) / sigma;
        const double a = pmu.eval(u);
        const double b = psg.eval(u);
        s1 += a;
        q1 += a * a;
        s2 += b * b;
        q2 += b * b * b * b;
      }
      const double m1 = s1 / n, m2 = s2 / n;
      const double se1 = std::sqrt((q1 / n - m1 * m1) / n);
      const double se2 = std::sqrt((q2 / n - m2 * m2) / n);
      CHECK(std::abs(h1 - m1) < 3.0 * se1 + 1e-9);
      CHECK(std::abs(h2 - m2) < 3.0 * se2 + 1e-9);
    }
  }
}

TEST_CASE("model-based consistency constant") {
  const Dataset d = moderate_replicate(500, 33, 1);
  const FittedModels f = fit_all(d);
  ScenarioConfig cfg;
  cfg.seed = 33;
  cfg.replicate_index = 1;

  SUBCASE("identity psi near the truth is close to one") {
    const auto [mu0, sigma0] = true_beta([] {
      ScenarioConfig c;
      c.xi_level = XiLevel::moderate;
      return c;
    }());
    const double b =
        compute_constant_B_model(f.om_ols, d, PsiFunction::identity(), mu0, sigma0,
                                 200000, RngStream(33, 9));
    // Identity: B is the mc mean of u^2; the fitted model is close to the
    // generator, so the value sits near 1.
    CHECK(b == doctest::Approx(1.0).epsilon(0.05));
  }

  SUBCASE("degenerate model collapses to psi(0)^2") {
    OutcomeModel om;
    om.xi1 = Eigen::VectorXd::Zero(2);
    om.xi1[0] = 1.775;
    om.xi2 = 0.0;
    om.design_columns = {"x1"};
    const double b = compute_constant_B_model(om, d, PsiFunction::tukey(5.4), 1.775,
                                              1.0, 1000, RngStream(1, 2));
    CHECK(b == 0.0);
  }

  SUBCASE("fixed stream makes the value bitwise reproducible") {
    const double b1 = compute_constant_B_model(f.om_rob, d, PsiFunction::tukey(5.4),
                                               1.7, 3.7, 100000, RngStream(42, 5));
    const double b2 = compute_constant_B_model(f.om_rob, d, PsiFunction::tukey(5.4),
                                               1.7, 3.7, 100000, RngStream(42, 5));
    CHECK(b1 == b2);
  }
}

TEST_CASE("robust estimates solve their equations and sit near the truth") {
  const auto truth = true_beta([] {
    ScenarioConfig c;
    c.xi_level = XiLevel::moderate;
    return c;
  }());
  const Dataset d = moderate_replicate(1000, 2024, 7);
  const FittedModels f = fit_all(d);
  const PsiFunction pmu = PsiFunction::tukey(3.9);
  const PsiFunction psg = PsiFunction::tukey(5.4);

  RobustSolveOptions opts;
  opts.mc_draws_b = 200000;
  opts.b_stream = RngStream(2024, 7 * 8 + 4);

  const LocationScaleEstimate ripw = estimate_ripw(d, f.pm_rob, pmu, psg, opts);
  CHECK(ripw.converged);
  CHECK(ripw.objective_residual < 1e-10);
  CHECK(std::abs(ripw.mu - truth.first) < 0.8);
  CHECK(std::abs(ripw.sigma - truth.second) < 0.8);
  REQUIRE(ripw.weights.has_value());
  CHECK(ripw.weights->rows.size() == static_cast<std::size_t>(d.observed_count()));

  const LocationScaleEstimate raipw = estimate_raipw(d, f.pm_rob, f.om_rob, pmu, psg, opts);
  CHECK(raipw.converged);
  CHECK(raipw.objective_residual < 1e-10);
  CHECK(std::abs(raipw.mu - truth.first) < 0.5);
  CHECK(std::abs(raipw.sigma - truth.second) < 0.5);
  CHECK(raipw.correction_b.has_value());

  // Double-weight diagnostics: the inverse propensity times the psi weight.
  for (std::size_t j = 0; j < raipw.weights->rows.size(); j += 37) {
    const auto& row = raipw.weights->rows[j];
    CHECK(row.compound ==
          doctest::Approx(row.inv_propensity * row.psi_weight).epsilon(1e-12));
    CHECK(row.inv_propensity >= 1.0);
    CHECK(row.psi_weight >= 0.0);
    CHECK(row.psi_weight <= 1.0);
  }
}

TEST_CASE("location equivariance of every estimator") {
  const Dataset d = moderate_replicate(600, 77, 3);
  const double k = 4.25;
  Dataset shifted = d;
  shifted.z2.array() += k;

  const FittedModels f0 = fit_all(d);
  const FittedModels f1 = fit_all(shifted);
  const PsiFunction pmu = PsiFunction::tukey(3.9);
  const PsiFunction psg = PsiFunction::tukey(5.4);
  RobustSolveOptions opts;
  opts.mc_draws_b = 100000;
  opts.b_stream = RngStream(77, 3 * 8 + 4);

  const auto check_pair = [&](const LocationScaleEstimate& a,
                              const LocationScaleEstimate& b) {
    CHECK(b.mu - a.mu == doctest::Approx(k).epsilon(1e-6));
    CHECK(b.sigma == doctest::Approx(a.sigma).epsilon(1e-6));
  };
  check_pair(estimate_ipw_classical(d, f0.pm_ml),
             estimate_ipw_classical(shifted, f1.pm_ml));
  check_pair(estimate_aipw_classical(d, f0.pm_ml, f0.om_ols),
             estimate_aipw_classical(shifted, f1.pm_ml, f1.om_ols));
  check_pair(estimate_or_classical(d, f0.om_ols),
             estimate_or_classical(shifted, f1.om_ols));
  check_pair(estimate_ripw(d, f0.pm_rob, pmu, psg, opts),
             estimate_ripw(shifted, f1.pm_rob, pmu, psg, opts));
  check_pair(estimate_raipw(d, f0.pm_rob, f0.om_rob, pmu, psg, opts),
             estimate_raipw(shifted, f1.pm_rob, f1.om_rob, pmu, psg, opts));
  check_pair(estimate_ror(d, f0.om_rob, f0.om_rob),
             estimate_ror(shifted, f1.om_rob, f1.om_rob));
}

TEST_CASE("model-based corrections remove the skewness bias a zero A leaves") {
  // With A pinned at 0 the location equation solves for the psi-location
  // of the skewed outcome marginal, which sits visibly above the mean;
  // the model-estimated corrections recentre it.
  const auto truth = true_beta([] {
    ScenarioConfig c;
    c.xi_level = XiLevel::moderate;
    return c;
  }());
  const PsiFunction pmu = PsiFunction::tukey(3.9);
  const PsiFunction psg = PsiFunction::tukey(5.4);
  double err_model = 0.0, err_zero = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    const Dataset d = moderate_replicate(1000, 88, rep);
    const FittedModels f = fit_all(d);
    RobustSolveOptions opts;
    opts.mc_draws_b = 200000;
    opts.b_stream = RngStream(88, rep * 8 + 4);
    const LocationScaleEstimate model_based =
        estimate_raipw(d, f.pm_rob, f.om_rob, pmu, psg, opts);
    CHECK(model_based.converged);
    CHECK(model_based.correction_a.has_value());
    CHECK(*model_based.correction_a != 0.0);

    RobustSolveOptions pinned = opts;
    pinned.a_override = 0.0;
    pinned.b_override = compute_constant_B_marginal(psg);
    const LocationScaleEstimate zero_a =
        estimate_raipw(d, f.pm_rob, f.om_rob, pmu, psg, pinned);
    err_model += model_based.mu - truth.first;
    err_zero += zero_a.mu - truth.first;
  }
  CHECK(std::abs(err_model / 5.0) < 0.1);
  CHECK(err_zero / 5.0 > 0.2);  // the documented psi-location offset
}
