#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "robmiss/psi.hpp"

namespace robmiss {

/// Linear outcome model z2 = z1'xi1 + xi2 * noise fitted on complete cases,
/// either by OLS (identity psi pair) or by the joint M-estimator of
/// regression and scale (redescending regression psi, Huber-squared scale
/// equation with Gaussian consistency constant a_xi).
struct OutcomeModel {
  Eigen::VectorXd xi1;  // includes intercept
  double xi2 = 0.0;     // residual scale, > 0
  PsiFunction psi_reg = PsiFunction::tukey(4.685);
  PsiFunction psi_scale = PsiFunction::huber(1.345);
  double a_xi = 1.0;
  std::vector<std::string> design_columns;
  bool fit_converged = false;
  int iterations = 0;
};

struct FitOutcomeOptions {
  double joint_tol = 1e-9;
  int max_iter = 200;
  int start_max_iter = 50;
};

/// Fit on the complete cases of (z2, design). The robust path starts from
/// a Huber IRLS fit with MAD residual scale and then alternates a
/// weighted-least-squares regression step with a bisection solve of the
/// scalar scale equation. Oscillation past the iteration budget lowers
/// fit_converged instead of throwing.
OutcomeModel fit_outcome_model(const Eigen::VectorXd& z2,
                               const Eigen::MatrixXd& design,
                               const Eigen::VectorXi& complete_mask,
                               const PsiFunction& psi_reg,
                               const PsiFunction& psi_scale,
                               std::vector<std::string> design_columns = {},
                               const FitOutcomeOptions& opts = {});

/// Convenience: OLS fit (identity psi pair).
OutcomeModel fit_outcome_ols(const Eigen::VectorXd& z2, const Eigen::MatrixXd& design,
                             const Eigen::VectorXi& complete_mask,
                             std::vector<std::string> design_columns = {});

double predict_mean(const OutcomeModel& m, const Eigen::VectorXd& z1);

/// Stacked per-complete-case estimating function (regression block, then
/// the scale block) at arbitrary parameters.
Eigen::VectorXd outcome_score(const PsiFunction& psi_reg, const PsiFunction& psi_scale,
                              double a_xi, const Eigen::VectorXd& xi1, double xi2,
                              double z2, const Eigen::VectorXd& z1);

/// Same, at the fitted parameters.
Eigen::VectorXd outcome_score_function(const OutcomeModel& m, double z2,
                                       const Eigen::VectorXd& z1);

}  // namespace robmiss
