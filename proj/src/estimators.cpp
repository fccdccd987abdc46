#include "robmiss/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "robmiss/kernels.hpp"
#include "robmiss/numerics.hpp"

namespace robmiss {

namespace {

struct ObservedView {
  std::vector<int> idx;
  std::vector<double> z2;
  std::vector<double> inv_pi;
  double sum_inv_pi = 0.0;
};

ObservedView observed_view(const Dataset& data, const Eigen::VectorXd& pi) {
  ObservedView v;
  v.idx.reserve(data.n());
  for (int i = 0; i < data.n(); ++i) {
    if (data.R[i] != 1) continue;
    v.idx.push_back(i);
    v.z2.push_back(data.z2[i]);
    v.inv_pi.push_back(1.0 / pi[i]);
    v.sum_inv_pi += 1.0 / pi[i];
  }
  return v;
}

std::vector<double> predict_all(const OutcomeModel& om, const Dataset& data) {
  if (om.xi1.size() != static_cast<int>(om.design_columns.size()) + 1)
    throw std::invalid_argument(
        "outcome model design columns do not match its coefficients");
  const Eigen::MatrixXd design = build_design(data, om.design_columns);
  const Eigen::VectorXd h = design * om.xi1;
  return std::vector<double>(h.data(), h.data() + h.size());
}

Eigen::VectorXd propensities_all(const PropensityModel& pm, const Dataset& data,
                                 int* clamp_count) {
  if (pm.gamma.size() != static_cast<int>(pm.design_columns.size()) + 1)
    throw std::invalid_argument(
        "propensity model design columns do not match its coefficients");
  return propensities(pm, build_design(data, pm.design_columns), clamp_count);
}

WeightDiagnostics make_weights(const ObservedView& obs, double mu, double sigma,
                               const PsiFunction& psi_mu, int clamp_count) {
  WeightDiagnostics w;
  w.propensity_clamp_count = clamp_count;
  w.rows.reserve(obs.idx.size());
  for (std::size_t j = 0; j < obs.idx.size(); ++j) {
    const double pw = psi_mu.weight((obs.z2[j] - mu) / sigma);
    w.rows.push_back({obs.idx[j], obs.inv_pi[j], pw, obs.inv_pi[j] * pw});
  }
  return w;
}

double checked_h_pair(double htilde, double xi2, double mu, double sigma,
                      const PsiFunction& psi, bool squared, double tol) {
  return quadrature_normal_expectation(
      [&](double nu) {
        const double v = psi.eval((htilde + xi2 * nu - mu) / sigma);
        return squared ? v * v : v;
      },
      tol);
}

}  // namespace

namespace detail {

void working_model_h_table(const std::vector<double>& htilde, double xi2, double mu,
                           double sigma, const PsiFunction& psi_mu,
                           const PsiFunction& psi_sigma, double A, double B,
                           int gh_nodes, std::vector<double>& h1,
                           std::vector<double>& h2) {
  const GaussHermiteRule& rule = gauss_hermite_rule(gh_nodes);
  const std::size_t n = htilde.size();
  const int K = gh_nodes;
  h1.resize(n);
  h2.resize(n);
  std::vector<double> shift(K);
  for (int k = 0; k < K; ++k) shift[k] = xi2 * rule.nodes[k];
  std::vector<double> t(K);
  const double inv_sigma = 1.0 / sigma;
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) t[k] = htilde[i] + shift[k];
    double s1 = 0.0, s2 = 0.0;
    kernels::weighted_psi_pair_sum(t.data(), rule.weights.data(), K, mu, inv_sigma,
                                   psi_mu, psi_sigma, &s1, &s2);
    h1[i] = s1 - A;
    h2[i] = s2 - B;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Classical closed forms

LocationScaleEstimate estimate_ipw_classical(const Dataset& data,
                                             const PropensityModel& pm) {
  const Eigen::VectorXd pi = propensities_all(pm, data, nullptr);
  const ObservedView obs = observed_view(data, pi);
  if (obs.idx.empty() || obs.sum_inv_pi <= 0.0)
    throw std::runtime_error("estimate_ipw_classical: no observed outcomes");

  double swz = 0.0;
  for (std::size_t j = 0; j < obs.z2.size(); ++j) swz += obs.inv_pi[j] * obs.z2[j];
  const double mu = swz / obs.sum_inv_pi;
  double swr = 0.0;
  for (std::size_t j = 0; j < obs.z2.size(); ++j) {
    const double d = obs.z2[j] - mu;
    swr += obs.inv_pi[j] * d * d;
  }
  const double sigma2 = swr / obs.sum_inv_pi;
  if (sigma2 <= 0.0)
    throw std::runtime_error("estimate_ipw_classical: degenerate scale");

  LocationScaleEstimate est;
  est.mu = mu;
  est.sigma = std::sqrt(sigma2);
  est.converged = true;
  est.objective_residual = 0.0;
  return est;
}

LocationScaleEstimate estimate_aipw_classical(const Dataset& data,
                                              const PropensityModel& pm,
                                              const OutcomeModel& om) {
  const Eigen::VectorXd pi = propensities_all(pm, data, nullptr);
  const std::vector<double> htilde = predict_all(om, data);
  const int n = data.n();

  double acc_mu = 0.0;
  for (int i = 0; i < n; ++i) {
    const double c = (data.R[i] - pi[i]) / pi[i];
    if (data.R[i] == 1) acc_mu += data.z2[i] / pi[i];
    acc_mu -= c * htilde[i];
  }
  const double mu = acc_mu / n;

  const double xi2sq = om.xi2 * om.xi2;
  double acc_s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double c = (data.R[i] - pi[i]) / pi[i];
    if (data.R[i] == 1) {
      const double d = data.z2[i] - mu;
      acc_s += d * d / pi[i];
    }
    const double hd = htilde[i] - mu;
    acc_s -= c * (hd * hd + xi2sq);
  }
  const double sigma2 = acc_s / n;
  if (sigma2 <= 0.0)
    throw std::runtime_error("estimate_aipw_classical: degenerate scale");

  LocationScaleEstimate est;
  est.mu = mu;
  est.sigma = std::sqrt(sigma2);
  est.converged = true;
  return est;
}

LocationScaleEstimate estimate_or_classical(const Dataset& data,
                                            const OutcomeModel& om) {
  const std::vector<double> htilde = predict_all(om, data);
  const int n = data.n();
  double mu = 0.0;
  for (double h : htilde) mu += h;
  mu /= n;
  double var = 0.0;
  for (double h : htilde) var += (h - mu) * (h - mu);
  var = var / n + om.xi2 * om.xi2;

  LocationScaleEstimate est;
  est.mu = mu;
  est.sigma = std::sqrt(var);
  est.converged = true;
  return est;
}

// ---------------------------------------------------------------------------
// Robust estimators

double compute_constant_B_marginal(const PsiFunction& psi_sigma) {
  return gaussian_expectation_psi_sq(psi_sigma);
}

std::pair<double, double> working_model_h(const Eigen::VectorXd& z1, double mu,
                                          double sigma, const OutcomeModel& om,
                                          const PsiFunction& psi_mu,
                                          const PsiFunction& psi_sigma, double A,
                                          double B, double tol) {
  if (sigma <= 0.0) throw std::invalid_argument("working_model_h: sigma <= 0");
  const double htilde = predict_mean(om, z1);
  const double h1 = checked_h_pair(htilde, om.xi2, mu, sigma, psi_mu, false, tol) - A;
  const double h2 = checked_h_pair(htilde, om.xi2, mu, sigma, psi_sigma, true, tol) - B;
  return {h1, h2};
}

namespace {

std::vector<double> model_draws(const std::vector<double>& htilde, double xi2,
                                std::size_t mc_draws, RngStream& rng) {
  std::vector<double> w(mc_draws);
  const std::size_t n = htilde.size();
  for (std::size_t m = 0; m < mc_draws; ++m) {
    const std::size_t j = rng.uniform_below(n);
    w[m] = htilde[j] + xi2 * rng.normal();
  }
  return w;
}

}  // namespace

double compute_constant_B_model(const OutcomeModel& om, const Dataset& data,
                                const PsiFunction& psi_sigma, double mu,
                                double sigma, std::size_t mc_draws, RngStream rng) {
  const std::vector<double> htilde = predict_all(om, data);
  const std::vector<double> w = model_draws(htilde, om.xi2, mc_draws, rng);
  return kernels::psi_sq_sum(w.data(), mc_draws, mu, 1.0 / sigma, psi_sigma) /
         static_cast<double>(mc_draws);
}

std::pair<double, double> compute_constants_model(
    const OutcomeModel& om, const Dataset& data, const PsiFunction& psi_mu,
    const PsiFunction& psi_sigma, double mu, double sigma, std::size_t mc_draws,
    RngStream rng) {
  const std::vector<double> htilde = predict_all(om, data);
  const std::vector<double> w = model_draws(htilde, om.xi2, mc_draws, rng);
  double s1 = 0.0, s2 = 0.0;
  kernels::weighted_psi_pair_sum(w.data(), nullptr, w.size(), mu, 1.0 / sigma,
                                 psi_mu, psi_sigma, &s1, &s2);
  const double m = static_cast<double>(mc_draws);
  return {s1 / m, s2 / m};
}

std::vector<double> make_model_draws(const OutcomeModel& om, const Dataset& data,
                                     std::size_t mc_draws, RngStream rng) {
  const std::vector<double> htilde = predict_all(om, data);
  return model_draws(htilde, om.xi2, mc_draws, rng);
}

LocationScaleEstimate estimate_ripw(const Dataset& data, const PropensityModel& pm,
                                    const PsiFunction& psi_mu,
                                    const PsiFunction& psi_sigma,
                                    const RobustSolveOptions& opts) {
  int clamps = 0;
  const Eigen::VectorXd pi = propensities_all(pm, data, &clamps);
  const ObservedView obs = observed_view(data, pi);
  if (obs.idx.empty()) throw std::runtime_error("estimate_ripw: no observed outcomes");

  const double A = 0.0;
  const double B =
      opts.b_override ? *opts.b_override : compute_constant_B_marginal(psi_sigma);
  const double n = data.n();

  const auto objective = [&](const Eigen::VectorXd& x) {
    const double mu = x[0];
    const double sigma = std::exp(x[1]);
    double s1 = 0.0, s2 = 0.0;
    kernels::weighted_psi_pair_sum(obs.z2.data(), obs.inv_pi.data(), obs.z2.size(),
                                   mu, 1.0 / sigma, psi_mu, psi_sigma, &s1, &s2);
    const double e1 = (s1 - A * obs.sum_inv_pi) / n;
    const double e2 = (s2 - B * obs.sum_inv_pi) / n;
    return e1 * e1 + e2 * e2;
  };

  // Median/MAD of the observed outcomes: a bounded-influence reference
  // used to reject a classical start wrecked by gross outliers.
  std::vector<double> sorted = obs.z2;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double med = sorted[sorted.size() / 2];
  for (double& v : sorted) v = std::abs(v - med);
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double mad = std::max(1e-8, 1.4826 * sorted[sorted.size() / 2]);

  Eigen::VectorXd x0(2);
  if (opts.start_override) {
    x0 << opts.start_override->first, std::log(opts.start_override->second);
  } else {
    const LocationScaleEstimate start = estimate_ipw_classical(data, pm);
    if (std::abs(start.mu - med) > 5.0 * mad || start.sigma > 10.0 * mad ||
        start.sigma < 0.1 * mad)
      x0 << med, std::log(mad);
    else
      x0 << start.mu, std::log(start.sigma);
  }

  MinimizeOptions mo;
  mo.tolerance = opts.nm_tol;
  mo.max_iter = opts.nm_max_iter;
  mo.restarts = opts.nm_restarts;
  const MinimizerReport rep = minimize(objective, x0, mo);

  LocationScaleEstimate est;
  est.mu = rep.argmin[0];
  est.sigma = std::exp(rep.argmin[1]);
  est.objective_residual = rep.objective_at_min;
  est.converged = rep.converged && rep.objective_at_min < 1e-10;
  est.weights = make_weights(obs, est.mu, est.sigma, psi_mu, clamps);
  est.correction_a = A;
  est.correction_b = B;
  return est;
}

namespace {

struct RaipwContext {
  const Dataset* data;
  Eigen::VectorXd pi;
  ObservedView obs;
  std::vector<double> htilde;
  double xi2;
  PsiFunction psi_mu, psi_sigma;
};

// Mean estimating function (both coordinates) at (mu, sigma) with the
// working model evaluated by fixed-order quadrature.
void raipw_mean_phi(const RaipwContext& ctx, double mu, double sigma, double A,
                    double B, int gh_nodes, double& m1, double& m2) {
  const int n = ctx.data->n();
  double s1 = 0.0, s2 = 0.0;
  kernels::weighted_psi_pair_sum(ctx.obs.z2.data(), ctx.obs.inv_pi.data(),
                                 ctx.obs.z2.size(), mu, 1.0 / sigma, ctx.psi_mu,
                                 ctx.psi_sigma, &s1, &s2);
  std::vector<double> h1, h2;
  detail::working_model_h_table(ctx.htilde, ctx.xi2, mu, sigma, ctx.psi_mu,
                                ctx.psi_sigma, A, B, gh_nodes, h1, h2);
  double aug1 = 0.0, aug2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double c = (ctx.data->R[i] - ctx.pi[i]) / ctx.pi[i];
    aug1 += c * h1[i];
    aug2 += c * h2[i];
  }
  m1 = (s1 - A * ctx.obs.sum_inv_pi - aug1) / n;
  m2 = (s2 - B * ctx.obs.sum_inv_pi - aug2) / n;
}

// Same with the adaptive checked quadrature; used to validate the solution.
void raipw_mean_phi_checked(const RaipwContext& ctx, double mu, double sigma,
                            double A, double B, double& m1, double& m2) {
  const int n = ctx.data->n();
  double s1 = 0.0, s2 = 0.0;
  kernels::weighted_psi_pair_sum(ctx.obs.z2.data(), ctx.obs.inv_pi.data(),
                                 ctx.obs.z2.size(), mu, 1.0 / sigma, ctx.psi_mu,
                                 ctx.psi_sigma, &s1, &s2);
  double aug1 = 0.0, aug2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double c = (ctx.data->R[i] - ctx.pi[i]) / ctx.pi[i];
    const double h1 =
        checked_h_pair(ctx.htilde[i], ctx.xi2, mu, sigma, ctx.psi_mu, false, 1e-9) - A;
    const double h2 =
        checked_h_pair(ctx.htilde[i], ctx.xi2, mu, sigma, ctx.psi_sigma, true, 1e-9) - B;
    aug1 += c * h1;
    aug2 += c * h2;
  }
  m1 = (s1 - A * ctx.obs.sum_inv_pi - aug1) / n;
  m2 = (s2 - B * ctx.obs.sum_inv_pi - aug2) / n;
}

}  // namespace

LocationScaleEstimate estimate_raipw(const Dataset& data, const PropensityModel& pm,
                                     const OutcomeModel& om, const PsiFunction& psi_mu,
                                     const PsiFunction& psi_sigma,
                                     const RobustSolveOptions& opts) {
  RaipwContext ctx;
  ctx.data = &data;
  int clamps = 0;
  ctx.pi = propensities_all(pm, data, &clamps);
  ctx.obs = observed_view(data, ctx.pi);
  if (ctx.obs.idx.empty())
    throw std::runtime_error("estimate_raipw: no observed outcomes");
  ctx.htilde = predict_all(om, data);
  ctx.xi2 = om.xi2;
  ctx.psi_mu = psi_mu;
  ctx.psi_sigma = psi_sigma;

  // Model-implied location and scale: the anchor for the correction
  // constants and a bounded-influence fallback start.
  const LocationScaleEstimate anchor = estimate_ror(data, om, om);

  // Start from the classical augmented estimate; fall back to the anchor
  // when that is degenerate or dragged far off by gross outliers.
  Eigen::VectorXd x0(2);
  if (opts.start_override) {
    x0 << opts.start_override->first, std::log(opts.start_override->second);
  } else {
    x0 << anchor.mu, std::log(anchor.sigma);
    try {
      const LocationScaleEstimate start = estimate_aipw_classical(data, pm, om);
      if (std::abs(start.mu - anchor.mu) <= 5.0 * anchor.sigma &&
          start.sigma <= 10.0 * anchor.sigma && start.sigma >= 0.1 * anchor.sigma)
        x0 << start.mu, std::log(start.sigma);
    } catch (const std::runtime_error&) {
    }
  }

  // Correction constants estimated under the fitted outcome model at its
  // implied location and scale. Anchoring them at the trial point instead
  // makes the system degenerate (the model side then tracks the data side
  // for every (mu, sigma)), so they are computed once and frozen.
  double A = opts.a_override.value_or(0.0);
  double B = opts.b_override.value_or(1.0);
  if (!opts.a_override || !opts.b_override) {
    std::vector<double> generated;
    const std::vector<double>* w = opts.model_draws;
    if (!w) {
      RngStream bstream = opts.b_stream;
      generated = model_draws(ctx.htilde, ctx.xi2, opts.mc_draws_b, bstream);
      w = &generated;
    }
    double s1 = 0.0, s2 = 0.0;
    kernels::weighted_psi_pair_sum(w->data(), nullptr, w->size(), anchor.mu,
                                   1.0 / anchor.sigma, psi_mu, psi_sigma, &s1, &s2);
    const double m = static_cast<double>(w->size());
    if (!opts.a_override) A = s1 / m;
    if (!opts.b_override) B = s2 / m;
  }

  MinimizeOptions mo;
  mo.tolerance = opts.nm_tol;
  mo.max_iter = opts.nm_max_iter;
  mo.restarts = opts.nm_restarts;

  MinimizerReport rep = minimize(
      [&](const Eigen::VectorXd& p) {
        double m1, m2;
        raipw_mean_phi(ctx, p[0], std::exp(p[1]), A, B, opts.gh_nodes, m1, m2);
        return m1 * m1 + m2 * m2;
      },
      x0, mo);
  Eigen::VectorXd x = rep.argmin;

  // Validate the fixed-order quadrature at the solution; escalate the
  // order once if the checked residual disagrees.
  double m1 = 0.0, m2 = 0.0;
  raipw_mean_phi_checked(ctx, x[0], std::exp(x[1]), A, B, m1, m2);
  double q_checked = m1 * m1 + m2 * m2;
  if (q_checked >= 1e-10) {
    rep = minimize(
        [&](const Eigen::VectorXd& p) {
          double a1, a2;
          raipw_mean_phi(ctx, p[0], std::exp(p[1]), A, B, 2 * opts.gh_nodes, a1, a2);
          return a1 * a1 + a2 * a2;
        },
        x, mo);
    x = rep.argmin;
    raipw_mean_phi_checked(ctx, x[0], std::exp(x[1]), A, B, m1, m2);
    q_checked = m1 * m1 + m2 * m2;
  }

  LocationScaleEstimate est;
  est.mu = x[0];
  est.sigma = std::exp(x[1]);
  est.objective_residual = q_checked;
  est.converged = rep.converged && q_checked < 1e-10;
  est.weights = make_weights(ctx.obs, est.mu, est.sigma, psi_mu, clamps);
  est.correction_a = A;
  est.correction_b = B;
  return est;
}

LocationScaleEstimate estimate_ror(const Dataset& data, const OutcomeModel& om_mu,
                                   const OutcomeModel& om_sigma) {
  const std::vector<double> h_mu = predict_all(om_mu, data);
  const std::vector<double> h_sg = predict_all(om_sigma, data);
  const int n = data.n();
  double mu = 0.0;
  for (double h : h_mu) mu += h;
  mu /= n;
  double var = 0.0;
  for (double h : h_sg) var += (h - mu) * (h - mu);
  var = var / n + om_sigma.xi2 * om_sigma.xi2;

  LocationScaleEstimate est;
  est.mu = mu;
  est.sigma = std::sqrt(var);
  est.converged = om_mu.fit_converged && om_sigma.fit_converged;
  return est;
}

}  // namespace robmiss
