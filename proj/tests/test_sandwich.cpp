#include <doctest.h>

#include <cmath>

#include "robmiss/dgp.hpp"
#include "robmiss/sandwich.hpp"

using namespace robmiss;

namespace {

Dataset moderate_replicate(int n, std::uint64_t seed, std::uint64_t rep) {
  ScenarioConfig cfg;
  cfg.n = n;
  cfg.seed = seed;
  cfg.replicate_index = rep;
  return generate_replicate(cfg);
}

PropensityModel unit_propensity() {
  PropensityModel pm;
  pm.gamma.resize(1);
  pm.gamma << 50.0;
  pm.psi = PsiFunction::identity();
  pm.design_columns = {};
  return pm;
}

}  // namespace

TEST_CASE("full data, identity psi, no auxiliary blocks: se_mu is sigma/sqrt(n)") {
  Dataset d = moderate_replicate(10000, 3001, 0);
  d.R.setOnes();
  const PropensityModel pm = unit_propensity();
  const LocationScaleEstimate est = estimate_ipw_classical(d, pm);

  StackedSystem sys;
  sys.n = d.n();
  sys.blocks = {{"beta", 2}};
  sys.theta_hat = Eigen::Vector2d{est.mu, est.sigma};
  sys.eval = [&d](int i, const Eigen::VectorXd& th) {
    const double u = (d.z2[i] - th[0]) / th[1];
    return Eigen::Vector2d{u, u * u - 1.0};
  };
  const SandwichResult sw = sandwich_covariance(sys);
  const double classical = est.sigma / std::sqrt(static_cast<double>(d.n()));
  CHECK(sw.se_mu == doctest::Approx(classical).epsilon(0.02));
}

TEST_CASE("covariance output is symmetric and positive semidefinite") {
  const Dataset d = moderate_replicate(800, 3003, 1);
  const auto px = covariate_set("X");
  const PropensityModel pm =
      fit_logistic(d.R, build_design(d, px), PsiFunction::identity(), px);
  const LocationScaleEstimate est = estimate_ipw_classical(d, pm);
  const SandwichResult sw = sandwich_covariance(make_system_ipw(
      d, pm, est, PsiFunction::identity(), PsiFunction::identity(), 0.0, 1.0));

  CHECK((sw.covariance - sw.covariance.transpose()).lpNorm<Eigen::Infinity>() < 1e-10);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sw.covariance);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("analytic beta block of the weighted system matches the numerical bread") {
  const Dataset d = moderate_replicate(600, 3005, 2);
  const auto px = covariate_set("X");
  const PropensityModel pm =
      fit_logistic(d.R, build_design(d, px), PsiFunction::huber(1.35), px);
  const PsiFunction pmu = PsiFunction::tukey(3.9);
  const PsiFunction psg = PsiFunction::tukey(5.4);
  RobustSolveOptions opts;
  const LocationScaleEstimate est = estimate_ripw(d, pm, pmu, psg, opts);
  REQUIRE(est.converged);
  const double B = *est.correction_b;

  const StackedSystem sys = make_system_ipw(d, pm, est, pmu, psg, 0.0, B);
  const SandwichResult sw = sandwich_covariance(sys);

  // d phi/d(mu, sigma) averaged over units, from the psi derivative.
  const Eigen::VectorXd pi = propensities(pm, build_design(d, px));
  Eigen::Matrix2d analytic = Eigen::Matrix2d::Zero();
  for (int i = 0; i < d.n(); ++i) {
    if (d.R[i] != 1) continue;
    const double u = (d.z2[i] - est.mu) / est.sigma;
    const double w = 1.0 / (pi[i] * est.sigma);
    analytic(0, 0) += -pmu.deriv(u) * w;
    analytic(0, 1) += -pmu.deriv(u) * u * w;
    analytic(1, 0) += -2.0 * psg.eval(u) * psg.deriv(u) * w;
    analytic(1, 1) += -2.0 * psg.eval(u) * psg.deriv(u) * u * w;
  }
  analytic /= d.n();
  const Eigen::Matrix2d bread_block = -sw.bread.topLeftCorner(2, 2);
  CHECK((bread_block - analytic).lpNorm<Eigen::Infinity>() < 1e-4);
}

TEST_CASE("outcome-regression system is invariant to an inert propensity block") {
  const Dataset d = moderate_replicate(700, 3007, 3);
  const auto ox = covariate_set("XV");
  const OutcomeModel om = fit_outcome_ols(d.z2, build_design(d, ox), d.R, ox);
  const LocationScaleEstimate est = estimate_or_classical(d, om);

  const SandwichResult base = sandwich_covariance(make_system_or(d, om, om, est));

  // Append the score of a fitted (but unused) propensity model: the
  // leading block of the covariance must not move.
  const auto px = covariate_set("X");
  const PropensityModel pm =
      fit_logistic(d.R, build_design(d, px), PsiFunction::identity(), px);
  StackedSystem inner = make_system_or(d, om, om, est);
  StackedSystem padded;
  padded.n = inner.n;
  padded.blocks = inner.blocks;
  padded.blocks.push_back({"gamma_inert", static_cast<int>(pm.gamma.size())});
  padded.theta_hat.resize(inner.theta_hat.size() + pm.gamma.size());
  padded.theta_hat << inner.theta_hat, pm.gamma;
  const Eigen::MatrixXd zg = build_design(d, px);
  const int base_dim = static_cast<int>(inner.theta_hat.size());
  padded.eval = [&d, inner, zg, base_dim, pm](int i, const Eigen::VectorXd& th) {
    Eigen::VectorXd out(th.size());
    out.head(base_dim) = inner.eval(i, th.head(base_dim));
    out.tail(th.size() - base_dim) = logistic_score(
        pm.psi, th.tail(th.size() - base_dim), d.R[i], zg.row(i).transpose());
    return out;
  };
  const SandwichResult padded_result = sandwich_covariance(padded);

  CHECK(padded_result.se_mu == doctest::Approx(base.se_mu).epsilon(1e-6));
  CHECK(padded_result.se_sigma == doctest::Approx(base.se_sigma).epsilon(1e-6));
}

TEST_CASE("singular bread names the offending direction") {
  // Two identical parameters make the jacobian rank deficient.
  StackedSystem sys;
  sys.n = 49;  // i % 7 averages to 3 exactly, so the mean sits at zero
  sys.blocks = {{"beta", 2}};
  sys.theta_hat = Eigen::Vector2d{1.0, 1.0};
  sys.eval = [](int i, const Eigen::VectorXd& th) {
    Eigen::VectorXd out(2);
    const double x = 0.1 * (i % 7) - 0.3;
    out[0] = x - 0.5 * (th[0] + th[1]) + 0.5 * 2.0;  // depends on the sum only
    out[1] = out[0];
    return out;
  };
  CHECK_THROWS_WITH_AS(sandwich_covariance(sys), doctest::Contains("singular"),
                       std::runtime_error);
}

TEST_CASE("a visibly unsolved system is rejected") {
  const Dataset d = moderate_replicate(300, 3009, 4);
  const auto px = covariate_set("X");
  const PropensityModel pm =
      fit_logistic(d.R, build_design(d, px), PsiFunction::identity(), px);
  LocationScaleEstimate est = estimate_ipw_classical(d, pm);
  est.mu += 1.0;  // not a solution any more
  CHECK_THROWS_WITH_AS(
      sandwich_covariance(make_system_ipw(d, pm, est, PsiFunction::identity(),
                                          PsiFunction::identity(), 0.0, 1.0)),
      doctest::Contains("not at a solution"), std::runtime_error);
}
