#include "robmiss/robust_linreg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace robmiss {

namespace {

struct CompleteCases {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

CompleteCases gather(const Eigen::VectorXd& z2, const Eigen::MatrixXd& design,
                     const Eigen::VectorXi& mask) {
  if (z2.size() != design.rows() || mask.size() != design.rows())
    throw std::invalid_argument("fit_outcome_model: size mismatch");
  const int m = mask.sum();
  CompleteCases cc;
  cc.X.resize(m, design.cols());
  cc.y.resize(m);
  int k = 0;
  for (int i = 0; i < design.rows(); ++i) {
    if (mask[i] != 1) continue;
    cc.X.row(k) = design.row(i);
    cc.y[k] = z2[i];
    ++k;
  }
  return cc;
}

Eigen::VectorXd weighted_ls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& w) {
  const Eigen::MatrixXd Xw = w.asDiagonal() * X;
  return (X.transpose() * Xw).ldlt().solve(Xw.transpose() * y);
}

double median_of(std::vector<double> v) {
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + m, v.end());
  double hi = v[m];
  if (v.size() % 2 == 0) {
    const double lo = *std::max_element(v.begin(), v.begin() + m);
    return 0.5 * (lo + hi);
  }
  return hi;
}

double mad_scale(const Eigen::VectorXd& r) {
  std::vector<double> v(r.data(), r.data() + r.size());
  const double med = median_of(v);
  for (double& x : v) x = std::abs(x - med);
  return 1.4826 * median_of(v);
}

// The scale block sum_i psi_scale(r_i/s)^2 - m*a is non-increasing in s;
// bisection on [lo, hi].
double solve_scale(const Eigen::VectorXd& r, const PsiFunction& psi, double a,
                   double lo, double hi) {
  const auto g = [&](double s) {
    double acc = 0.0;
    for (int i = 0; i < r.size(); ++i) {
      const double v = psi.eval(r[i] / s);
      acc += v * v;
    }
    return acc - a * static_cast<double>(r.size());
  };
  double glo = g(lo);
  if (glo <= 0.0) return lo;
  double ghi = g(hi);
  if (ghi >= 0.0) return hi;
  for (int it = 0; it < 200 && (hi - lo) > 1e-13 * std::max(1.0, lo); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

OutcomeModel fit_outcome_ols(const Eigen::VectorXd& z2, const Eigen::MatrixXd& design,
                             const Eigen::VectorXi& complete_mask,
                             std::vector<std::string> design_columns) {
  return fit_outcome_model(z2, design, complete_mask, PsiFunction::identity(),
                           PsiFunction::identity(), std::move(design_columns));
}

OutcomeModel fit_outcome_model(const Eigen::VectorXd& z2,
                               const Eigen::MatrixXd& design,
                               const Eigen::VectorXi& complete_mask,
                               const PsiFunction& psi_reg,
                               const PsiFunction& psi_scale,
                               std::vector<std::string> design_columns,
                               const FitOutcomeOptions& opts) {
  const CompleteCases cc = gather(z2, design, complete_mask);
  const int m = static_cast<int>(cc.X.rows());
  const int p = static_cast<int>(cc.X.cols());
  if (m < p + 2)
    throw std::invalid_argument("fit_outcome_model: too few complete cases");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(cc.X);
  if (qr.rank() < p)
    throw std::invalid_argument("fit_outcome_model: design rank deficient");

  OutcomeModel model;
  model.psi_reg = psi_reg;
  model.psi_scale = psi_scale;
  model.design_columns = std::move(design_columns);
  model.a_xi = gaussian_expectation_psi_sq(psi_scale);

  const Eigen::VectorXd ols = qr.solve(cc.y);
  if (psi_reg.kind == PsiKind::identity && psi_scale.kind == PsiKind::identity) {
    model.xi1 = ols;
    model.xi2 = std::sqrt((cc.y - cc.X * ols).squaredNorm() / m);
    model.fit_converged = true;
    return model;
  }

  // Start: Huber IRLS with MAD residual scale.
  const PsiFunction huber_start = PsiFunction::huber(1.345);
  Eigen::VectorXd beta = ols;
  double s = mad_scale(cc.y - cc.X * beta);
  if (s < 1e-12) s = std::max(1e-12, std::sqrt((cc.y - cc.X * beta).squaredNorm() / m));
  for (int it = 0; it < opts.start_max_iter; ++it) {
    const Eigen::VectorXd r = cc.y - cc.X * beta;
    Eigen::VectorXd w(m);
    for (int i = 0; i < m; ++i) w[i] = huber_start.weight(r[i] / s);
    const Eigen::VectorXd next = weighted_ls(cc.X, cc.y, w);
    const double delta = (next - beta).lpNorm<Eigen::Infinity>();
    beta = next;
    s = mad_scale(cc.y - cc.X * beta);
    if (s < 1e-12) s = 1e-12;
    if (delta < 1e-8) break;
  }
  const double s0 = s;

  // Alternate the weighted regression step and the scalar scale equation.
  int it = 0;
  bool converged = false;
  for (; it < opts.max_iter; ++it) {
    const Eigen::VectorXd r = cc.y - cc.X * beta;
    Eigen::VectorXd w(m);
    double wsum = 0.0;
    for (int i = 0; i < m; ++i) {
      w[i] = psi_reg.weight(r[i] / s);
      wsum += w[i];
    }
    if (wsum <= 0.0)
      throw std::runtime_error(
          "fit_outcome_model: every regression weight is zero; increase c1");
    const Eigen::VectorXd beta_next = weighted_ls(cc.X, cc.y, w);
    const Eigen::VectorXd r_next = cc.y - cc.X * beta_next;
    const double s_next =
        solve_scale(r_next, psi_scale, model.a_xi, 1e-8 * s0, 1e3 * s0);
    const double delta = std::max((beta_next - beta).lpNorm<Eigen::Infinity>(),
                                  std::abs(s_next - s));
    beta = beta_next;
    s = s_next;
    if (delta < opts.joint_tol) {
      converged = true;
      break;
    }
  }

  model.xi1 = beta;
  model.xi2 = s;
  model.iterations = it;
  model.fit_converged = converged;
  return model;
}

double predict_mean(const OutcomeModel& m, const Eigen::VectorXd& z1) {
  if (z1.size() != m.xi1.size())
    throw std::invalid_argument("predict_mean: dimension mismatch");
  return z1.dot(m.xi1);
}

Eigen::VectorXd outcome_score(const PsiFunction& psi_reg, const PsiFunction& psi_scale,
                              double a_xi, const Eigen::VectorXd& xi1, double xi2,
                              double z2, const Eigen::VectorXd& z1) {
  if (z1.size() != xi1.size())
    throw std::invalid_argument("outcome_score: dimension mismatch");
  const double u = (z2 - z1.dot(xi1)) / xi2;
  Eigen::VectorXd out(z1.size() + 1);
  out.head(z1.size()) = psi_reg.eval(u) * z1;
  const double v = psi_scale.eval(u);
  out[z1.size()] = v * v - a_xi;
  return out;
}

Eigen::VectorXd outcome_score_function(const OutcomeModel& m, double z2,
                                       const Eigen::VectorXd& z1) {
  return outcome_score(m.psi_reg, m.psi_scale, m.a_xi, m.xi1, m.xi2, z2, z1);
}

}  // namespace robmiss
