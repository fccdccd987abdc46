#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "robmiss/data.hpp"
#include "robmiss/psi.hpp"

namespace robmiss {

/// Fitted logistic model for the probability that the outcome is observed.
/// With an identity psi the estimating equations are the ML score; with a
/// bounded psi they are the Mallows-type quasi-likelihood score with an
/// exact per-observation Fisher-consistency correction.
struct PropensityModel {
  Eigen::VectorXd gamma;  // includes intercept
  PsiFunction psi = PsiFunction::huber(1.35);
  std::vector<std::string> design_columns;
  bool fit_converged = false;
  int iterations = 0;
};

struct FitLogisticOptions {
  double score_tol = 1e-9;     // sup norm of the mean corrected score
  int max_iter = 100;
  int max_halvings = 20;
  double divergence_norm = 1e3;
};

/// Fit on response r in {0,1} and a design with leading intercept column.
/// Throws on rank deficiency and on divergence (separation guard).
PropensityModel fit_logistic(const Eigen::VectorXi& response,
                             const Eigen::MatrixXd& design,
                             const PsiFunction& psi,
                             std::vector<std::string> design_columns = {},
                             const FitLogisticOptions& opts = {});

/// expit(z1'gamma) clamped to [1e-6, 1 - 1e-6].
double predict_propensity(const PropensityModel& m, const Eigen::VectorXd& z1);

/// Fitted propensity for every row of a design; clamp_count reports how
/// often the clamp was active.
Eigen::VectorXd propensities(const PropensityModel& m, const Eigen::MatrixXd& design,
                             int* clamp_count = nullptr);

/// Per-observation estimating-function value at an arbitrary gamma.
Eigen::VectorXd logistic_score(const PsiFunction& psi, const Eigen::VectorXd& gamma,
                               double response, const Eigen::VectorXd& z1);

/// Same, at the fitted coefficients.
Eigen::VectorXd propensity_score_function(const PropensityModel& m, double response,
                                          const Eigen::VectorXd& z1);

}  // namespace robmiss
