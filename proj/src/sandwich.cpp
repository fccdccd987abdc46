#include "robmiss/sandwich.hpp"

#include <cmath>
#include <sstream>

#include "robmiss/numerics.hpp"

namespace robmiss {

namespace {

double expit_clamped(double x) {
  const double p = 1.0 / (1.0 + std::exp(-x));
  return std::min(1.0 - 1e-6, std::max(1e-6, p));
}

std::string locate(const std::vector<StackedBlock>& blocks, int index) {
  int off = 0;
  for (const auto& b : blocks) {
    if (index < off + b.dim) {
      std::ostringstream os;
      os << b.name << "[" << index - off << "]";
      return os.str();
    }
    off += b.dim;
  }
  return "?";
}

Eigen::VectorXd mean_psi(const StackedSystem& sys, const Eigen::VectorXd& theta) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(sys.dim());
  for (int i = 0; i < sys.n; ++i) acc += sys.eval(i, theta);
  return acc / sys.n;
}

// Integrated working-model pair at one unit by fixed-order quadrature;
// exact for the identity psi pair, adequate near the solution otherwise.
void h_pair(double htilde, double xi2, double mu, double sigma,
            const PsiFunction& psi_mu, const PsiFunction& psi_sigma, double A,
            double B, int gh_nodes, double& h1, double& h2) {
  const GaussHermiteRule& rule = gauss_hermite_rule(gh_nodes);
  double s1 = 0.0, s2 = 0.0;
  for (int k = 0; k < gh_nodes; ++k) {
    const double u = (htilde + xi2 * rule.nodes[k] - mu) / sigma;
    const double a = psi_mu.eval(u);
    const double b = psi_sigma.eval(u);
    s1 += rule.weights[k] * a;
    s2 += rule.weights[k] * (b * b);
  }
  h1 = s1 - A;
  h2 = s2 - B;
}

}  // namespace

SandwichResult sandwich_covariance(const StackedSystem& sys) {
  const int d = sys.dim();
  if (sys.theta_hat.size() != d)
    throw std::invalid_argument("sandwich: theta length does not match blocks");

  const Eigen::VectorXd m0 = mean_psi(sys, sys.theta_hat);
  if (m0.size() != d)
    throw std::invalid_argument("sandwich: evaluator output length mismatch");
  for (int j = 0; j < d; ++j)
    if (std::abs(m0[j]) > 1e-4)
      throw std::runtime_error("sandwich: estimating equations not at a solution, " +
                               locate(sys.blocks, j) + " mean = " +
                               std::to_string(m0[j]));

  const Eigen::MatrixXd jac = numerical_jacobian(
      [&sys](const Eigen::VectorXd& th) { return mean_psi(sys, th); }, sys.theta_hat);
  SandwichResult out;
  out.bread = -jac;

  out.meat = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < sys.n; ++i) {
    const Eigen::VectorXd psi = sys.eval(i, sys.theta_hat);
    out.meat.noalias() += psi * psi.transpose();
  }
  out.meat /= sys.n;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(out.bread);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible()) {
    const Eigen::MatrixXd kernel = lu.kernel();
    int worst = 0;
    kernel.col(0).cwiseAbs().maxCoeff(&worst);
    throw std::runtime_error("sandwich: singular bread matrix, near-null direction " +
                             locate(sys.blocks, worst));
  }
  const Eigen::MatrixXd ainv = lu.inverse();
  Eigen::MatrixXd v = ainv * out.meat * ainv.transpose() / sys.n;
  out.covariance = 0.5 * (v + v.transpose());
  out.se_mu = std::sqrt(std::max(0.0, out.covariance(0, 0)));
  out.se_sigma = std::sqrt(std::max(0.0, out.covariance(1, 1)));
  return out;
}

StackedSystem make_system_ipw(const Dataset& data, const PropensityModel& pm,
                              const LocationScaleEstimate& est,
                              const PsiFunction& psi_mu, const PsiFunction& psi_sigma,
                              double A, double B) {
  const Eigen::MatrixXd zg = build_design(data, pm.design_columns);
  const int pg = static_cast<int>(zg.cols());

  StackedSystem sys;
  sys.n = data.n();
  sys.blocks = {{"beta", 2}, {"gamma", pg}};
  sys.theta_hat.resize(2 + pg);
  sys.theta_hat << est.mu, est.sigma, pm.gamma;

  const PsiFunction logit_psi = pm.psi;
  sys.eval = [&data, zg, pg, psi_mu, psi_sigma, A, B,
              logit_psi](int i, const Eigen::VectorXd& th) {
    const double mu = th[0];
    const double sigma = th[1];
    const Eigen::VectorXd gamma = th.segment(2, pg);
    const Eigen::VectorXd z1 = zg.row(i).transpose();
    const double pi = expit_clamped(z1.dot(gamma));

    Eigen::VectorXd out(2 + pg);
    if (data.R[i] == 1) {
      const double u = (data.z2[i] - mu) / sigma;
      const double b = psi_sigma.eval(u);
      out[0] = (psi_mu.eval(u) - A) / pi;
      out[1] = (b * b - B) / pi;
    } else {
      out[0] = 0.0;
      out[1] = 0.0;
    }
    out.segment(2, pg) = logistic_score(logit_psi, gamma, data.R[i], z1);
    return out;
  };
  return sys;
}

StackedSystem make_system_aipw(const Dataset& data, const PropensityModel& pm,
                               const OutcomeModel& om,
                               const LocationScaleEstimate& est,
                               const PsiFunction& psi_mu, const PsiFunction& psi_sigma,
                               double A, double B, int gh_nodes) {
  const Eigen::MatrixXd zg = build_design(data, pm.design_columns);
  const Eigen::MatrixXd zx = build_design(data, om.design_columns);
  const int pg = static_cast<int>(zg.cols());
  const int px = static_cast<int>(zx.cols());

  StackedSystem sys;
  sys.n = data.n();
  sys.blocks = {{"beta", 2}, {"gamma", pg}, {"xi", px + 1}};
  sys.theta_hat.resize(2 + pg + px + 1);
  sys.theta_hat << est.mu, est.sigma, pm.gamma, om.xi1, om.xi2;

  const PsiFunction logit_psi = pm.psi;
  const PsiFunction reg_psi = om.psi_reg;
  const PsiFunction scale_psi = om.psi_scale;
  const double a_xi = om.a_xi;
  sys.eval = [&data, zg, zx, pg, px, psi_mu, psi_sigma, A, B, gh_nodes, logit_psi,
              reg_psi, scale_psi, a_xi](int i, const Eigen::VectorXd& th) {
    const double mu = th[0];
    const double sigma = th[1];
    const Eigen::VectorXd gamma = th.segment(2, pg);
    const Eigen::VectorXd xi1 = th.segment(2 + pg, px);
    const double xi2 = th[2 + pg + px];
    const Eigen::VectorXd z1g = zg.row(i).transpose();
    const Eigen::VectorXd z1x = zx.row(i).transpose();
    const double pi = expit_clamped(z1g.dot(gamma));
    const double htilde = z1x.dot(xi1);

    double h1, h2;
    h_pair(htilde, xi2, mu, sigma, psi_mu, psi_sigma, A, B, gh_nodes, h1, h2);
    const double c = (data.R[i] - pi) / pi;

    Eigen::VectorXd out(2 + pg + px + 1);
    if (data.R[i] == 1) {
      const double u = (data.z2[i] - mu) / sigma;
      const double b = psi_sigma.eval(u);
      out[0] = (psi_mu.eval(u) - A) / pi - c * h1;
      out[1] = (b * b - B) / pi - c * h2;
    } else {
      out[0] = -c * h1;
      out[1] = -c * h2;
    }
    out.segment(2, pg) = logistic_score(logit_psi, gamma, data.R[i], z1g);
    if (data.R[i] == 1)
      out.segment(2 + pg, px + 1) =
          outcome_score(reg_psi, scale_psi, a_xi, xi1, xi2, data.z2[i], z1x);
    else
      out.segment(2 + pg, px + 1).setZero();
    return out;
  };
  return sys;
}

StackedSystem make_system_or(const Dataset& data, const OutcomeModel& om_mu,
                             const OutcomeModel& om_sigma,
                             const LocationScaleEstimate& est) {
  const bool shared = om_mu.design_columns == om_sigma.design_columns &&
                      om_mu.xi1 == om_sigma.xi1 && om_mu.xi2 == om_sigma.xi2 &&
                      om_mu.psi_reg.kind == om_sigma.psi_reg.kind &&
                      om_mu.psi_reg.c == om_sigma.psi_reg.c;
  const Eigen::MatrixXd zm = build_design(data, om_mu.design_columns);
  const Eigen::MatrixXd zs = build_design(data, om_sigma.design_columns);
  const int pm_ = static_cast<int>(zm.cols());
  const int ps_ = static_cast<int>(zs.cols());

  StackedSystem sys;
  sys.n = data.n();
  if (shared) {
    sys.blocks = {{"beta", 2}, {"xi", pm_ + 1}};
    sys.theta_hat.resize(2 + pm_ + 1);
    sys.theta_hat << est.mu, est.sigma, om_mu.xi1, om_mu.xi2;
  } else {
    sys.blocks = {{"beta", 2}, {"xi_mu", pm_ + 1}, {"xi_sigma", ps_ + 1}};
    sys.theta_hat.resize(2 + pm_ + 1 + ps_ + 1);
    sys.theta_hat << est.mu, est.sigma, om_mu.xi1, om_mu.xi2, om_sigma.xi1,
        om_sigma.xi2;
  }

  const OutcomeModel mu_fit = om_mu;
  const OutcomeModel sg_fit = om_sigma;
  sys.eval = [&data, zm, zs, pm_, ps_, shared, mu_fit,
              sg_fit](int i, const Eigen::VectorXd& th) {
    const double mu = th[0];
    const double sigma = th[1];
    const Eigen::VectorXd xim = th.segment(2, pm_);
    const double xim2 = th[2 + pm_];
    const Eigen::VectorXd xis = shared ? xim : th.segment(2 + pm_ + 1, ps_).eval();
    const double xis2 = shared ? xim2 : th[2 + pm_ + 1 + ps_];
    const Eigen::VectorXd z1m = zm.row(i).transpose();
    const Eigen::VectorXd z1s = zs.row(i).transpose();

    const double hm = z1m.dot(xim);
    const double hs = z1s.dot(xis);
    Eigen::VectorXd out(th.size());
    out[0] = hm - mu;
    out[1] = (hs - mu) * (hs - mu) + xis2 * xis2 - sigma * sigma;
    if (data.R[i] == 1) {
      out.segment(2, pm_ + 1) = outcome_score(mu_fit.psi_reg, mu_fit.psi_scale,
                                              mu_fit.a_xi, xim, xim2, data.z2[i], z1m);
      if (!shared)
        out.segment(2 + pm_ + 1, ps_ + 1) = outcome_score(
            sg_fit.psi_reg, sg_fit.psi_scale, sg_fit.a_xi, xis, xis2, data.z2[i], z1s);
    } else {
      out.segment(2, out.size() - 2).setZero();
    }
    return out;
  };
  return sys;
}

void attach_se(LocationScaleEstimate& est, const SandwichResult& sw) {
  est.se_mu = sw.se_mu;
  est.se_sigma = sw.se_sigma;
}

}  // namespace robmiss
