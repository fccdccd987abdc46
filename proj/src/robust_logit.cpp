#include "robmiss/robust_logit.hpp"

#include <cmath>

#include "robmiss/numerics.hpp"

namespace robmiss {

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// E[psi(r_i)] over the two-point Bernoulli support; exact, no quadrature.
double expected_psi(const PsiFunction& psi, double mu, double sqrt_v) {
  return psi.eval((1.0 - mu) / sqrt_v) * mu + psi.eval(-mu / sqrt_v) * (1.0 - mu);
}

Eigen::VectorXd mean_score(const PsiFunction& psi, const Eigen::VectorXi& y,
                           const Eigen::MatrixXd& Z, const Eigen::VectorXd& gamma) {
  const int n = static_cast<int>(Z.rows());
  Eigen::VectorXd s = Eigen::VectorXd::Zero(Z.cols());
  for (int i = 0; i < n; ++i) {
    double mu = expit(Z.row(i).dot(gamma));
    mu = std::min(1.0 - 1e-12, std::max(1e-12, mu));
    const double sqrt_v = std::sqrt(mu * (1.0 - mu));
    const double r = (y[i] - mu) / sqrt_v;
    const double g = (psi.eval(r) - expected_psi(psi, mu, sqrt_v)) * sqrt_v;
    s += g * Z.row(i).transpose();
  }
  return s / n;
}

}  // namespace

PropensityModel fit_logistic(const Eigen::VectorXi& response,
                             const Eigen::MatrixXd& design, const PsiFunction& psi,
                             std::vector<std::string> design_columns,
                             const FitLogisticOptions& opts) {
  const int n = static_cast<int>(design.rows());
  const int p = static_cast<int>(design.cols());
  if (response.size() != n) throw std::invalid_argument("response length mismatch");
  for (int i = 0; i < n; ++i)
    if (response[i] != 0 && response[i] != 1)
      throw std::invalid_argument("response must be binary");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < p) throw std::invalid_argument("design matrix is rank deficient");

  PropensityModel model;
  model.psi = psi;
  model.design_columns = std::move(design_columns);
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(p);

  Eigen::VectorXd s = mean_score(psi, response, design, gamma);
  double snorm = s.lpNorm<Eigen::Infinity>();
  int it = 0;
  for (; it < opts.max_iter && snorm >= opts.score_tol; ++it) {
    const Eigen::MatrixXd jac = numerical_jacobian(
        [&](const Eigen::VectorXd& g) { return mean_score(psi, response, design, g); },
        gamma);
    Eigen::VectorXd step = jac.colPivHouseholderQr().solve(-s);
    if (!step.allFinite()) throw std::runtime_error("fit_logistic: singular step");

    // Step halving until the corrected-score norm decreases.
    double t = 1.0;
    Eigen::VectorXd g_next;
    Eigen::VectorXd s_next;
    double snorm_next = snorm;
    for (int h = 0; h <= opts.max_halvings; ++h) {
      g_next = gamma + t * step;
      s_next = mean_score(psi, response, design, g_next);
      snorm_next = s_next.lpNorm<Eigen::Infinity>();
      if (snorm_next < snorm) break;
      t *= 0.5;
    }
    gamma = g_next;
    s = s_next;
    snorm = snorm_next;
    if (gamma.norm() > opts.divergence_norm)
      throw std::runtime_error(
          "fit_logistic: coefficients diverged (separation or near-separation)");
  }

  model.fit_converged = snorm < opts.score_tol;
  if (model.fit_converged) {
    // One undamped polish step: quadratic convergence squares the residual,
    // taking the coefficients to near machine precision.
    const Eigen::MatrixXd jac = numerical_jacobian(
        [&](const Eigen::VectorXd& g) { return mean_score(psi, response, design, g); },
        gamma);
    const Eigen::VectorXd polished = gamma + jac.colPivHouseholderQr().solve(-s);
    if (polished.allFinite() &&
        mean_score(psi, response, design, polished).lpNorm<Eigen::Infinity>() <= snorm)
      gamma = polished;
  }

  model.gamma = gamma;
  model.iterations = it;
  return model;
}

double predict_propensity(const PropensityModel& m, const Eigen::VectorXd& z1) {
  if (z1.size() != m.gamma.size())
    throw std::invalid_argument("predict_propensity: dimension mismatch");
  const double p = expit(z1.dot(m.gamma));
  return std::min(1.0 - 1e-6, std::max(1e-6, p));
}

Eigen::VectorXd propensities(const PropensityModel& m, const Eigen::MatrixXd& design,
                             int* clamp_count) {
  if (design.cols() != m.gamma.size())
    throw std::invalid_argument("propensities: dimension mismatch");
  Eigen::VectorXd out(design.rows());
  int clamps = 0;
  for (int i = 0; i < design.rows(); ++i) {
    const double p = expit(design.row(i).dot(m.gamma));
    const double clamped = std::min(1.0 - 1e-6, std::max(1e-6, p));
    if (clamped != p) ++clamps;
    out[i] = clamped;
  }
  if (clamp_count) *clamp_count = clamps;
  return out;
}

Eigen::VectorXd logistic_score(const PsiFunction& psi, const Eigen::VectorXd& gamma,
                               double response, const Eigen::VectorXd& z1) {
  if (z1.size() != gamma.size())
    throw std::invalid_argument("logistic_score: dimension mismatch");
  double mu = expit(z1.dot(gamma));
  mu = std::min(1.0 - 1e-12, std::max(1e-12, mu));
  const double sqrt_v = std::sqrt(mu * (1.0 - mu));
  const double r = (response - mu) / sqrt_v;
  const double g = (psi.eval(r) - expected_psi(psi, mu, sqrt_v)) * sqrt_v;
  return g * z1;
}

Eigen::VectorXd propensity_score_function(const PropensityModel& m, double response,
                                          const Eigen::VectorXd& z1) {
  return logistic_score(m.psi, m.gamma, response, z1);
}

}  // namespace robmiss
