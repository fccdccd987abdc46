#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "robmiss/estimators.hpp"

namespace robmiss {

struct StackedBlock {
  std::string name;  // "beta", "gamma", "xi", ...
  int dim = 0;
};

/// Stacked estimating equations for the estimator and its auxiliary
/// models: theta concatenates (beta, gamma, xi) as applicable and the
/// evaluator returns the per-observation value of every block at an
/// arbitrary theta. The sample mean at theta_hat must be (numerically)
/// zero: every block is at its solution.
struct StackedSystem {
  Eigen::VectorXd theta_hat;
  std::vector<StackedBlock> blocks;
  int n = 0;
  std::function<Eigen::VectorXd(int i, const Eigen::VectorXd& theta)> eval;

  int dim() const {
    int d = 0;
    for (const auto& b : blocks) d += b.dim;
    return d;
  }
};

struct SandwichResult {
  Eigen::MatrixXd covariance;  // V_n / n for theta_hat
  Eigen::MatrixXd bread;       // A_n
  Eigen::MatrixXd meat;        // B_n
  double se_mu = 0.0;
  double se_sigma = 0.0;
};

/// A_n = -mean Jacobian of the stacked function, B_n = mean outer product;
/// returns A_n^{-1} B_n A_n^{-T} / n with (se_mu, se_sigma) from the
/// leading 2x2 block. Throws if A_n is singular, naming the near-null
/// direction, or if the mean estimating function is visibly away from 0.
SandwichResult sandwich_covariance(const StackedSystem& sys);

// System builders for the estimator families. The estimate supplies
// (mu, sigma); psi functions and constants must match the ones the
// estimate was computed with. Classical families pass identity psi with
// B = 1 (an equivalent rescaling of the moment equations).

StackedSystem make_system_ipw(const Dataset& data, const PropensityModel& pm,
                              const LocationScaleEstimate& est,
                              const PsiFunction& psi_mu, const PsiFunction& psi_sigma,
                              double A, double B);

StackedSystem make_system_aipw(const Dataset& data, const PropensityModel& pm,
                               const OutcomeModel& om,
                               const LocationScaleEstimate& est,
                               const PsiFunction& psi_mu, const PsiFunction& psi_sigma,
                               double A, double B, int gh_nodes = 40);

StackedSystem make_system_or(const Dataset& data, const OutcomeModel& om_mu,
                             const OutcomeModel& om_sigma,
                             const LocationScaleEstimate& est);

/// Convenience: attach sandwich standard errors to an estimate.
void attach_se(LocationScaleEstimate& est, const SandwichResult& sw);

}  // namespace robmiss
