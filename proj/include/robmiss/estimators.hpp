#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "robmiss/data.hpp"
#include "robmiss/robust_linreg.hpp"
#include "robmiss/robust_logit.hpp"
#include "robmiss/rng.hpp"

namespace robmiss {

/// Per-observed-unit weights of the double weighting scheme: the inverse
/// fitted propensity, the psi weight at the standardized residual, and
/// their product.
struct WeightRecord {
  int index;
  double inv_propensity;
  double psi_weight;
  double compound;
};

struct WeightDiagnostics {
  std::vector<WeightRecord> rows;  // observed units only
  int propensity_clamp_count = 0;
};

struct LocationScaleEstimate {
  double mu = 0.0;
  double sigma = 0.0;  // > 0
  std::optional<double> se_mu;
  std::optional<double> se_sigma;
  bool converged = true;
  /// Value of the squared-norm objective at the solution; closed-form
  /// estimators report 0.
  double objective_residual = 0.0;
  std::optional<WeightDiagnostics> weights;
  /// Consistency constants the robust solve ended with (A is 0 unless
  /// estimated); needed again when stacking estimating equations for
  /// standard errors.
  std::optional<double> correction_a;
  std::optional<double> correction_b;
};

struct RobustSolveOptions {
  double nm_tol = 1e-9;
  int nm_max_iter = 400;
  int nm_restarts = 3;
  int gh_nodes = 40;
  std::size_t mc_draws_b = 1000000;
  /// Pin the consistency constants instead of estimating them under the
  /// outcome model; the identity-reduction checks pin A = 0, B = 1.
  std::optional<double> a_override;
  std::optional<double> b_override;
  /// Dedicated stream for the model-based correction draws.
  RngStream b_stream = RngStream(0, 0);
  /// Precomputed draws htilde_j + xi2*nu for the corrections; when set,
  /// b_stream and mc_draws_b are ignored. Lets a tuning scan reuse one
  /// draw set across a grid of constants for the same fitted models.
  const std::vector<double>* model_draws = nullptr;
  /// Start the search here instead of at the classical estimate.
  std::optional<std::pair<double, double>> start_override;
};

// Classical closed forms ----------------------------------------------------

LocationScaleEstimate estimate_ipw_classical(const Dataset& data,
                                             const PropensityModel& pm);

LocationScaleEstimate estimate_aipw_classical(const Dataset& data,
                                              const PropensityModel& pm,
                                              const OutcomeModel& om);

LocationScaleEstimate estimate_or_classical(const Dataset& data,
                                            const OutcomeModel& om);

// Robust estimators ----------------------------------------------------------

/// B = E[psi_sigma(Z)^2] for Z standard normal, the reference-normal
/// approximation used by the inverse-probability-weighted robust estimator.
double compute_constant_B_marginal(const PsiFunction& psi_sigma);

/// Integrated working model at one covariate point:
///   h1 = E[psi_mu((htilde + xi2*nu - mu)/sigma)] - A
///   h2 = E[psi_sigma((htilde + xi2*nu - mu)/sigma)^2] - B,  nu ~ N(0,1).
std::pair<double, double> working_model_h(const Eigen::VectorXd& z1, double mu,
                                          double sigma, const OutcomeModel& om,
                                          const PsiFunction& psi_mu,
                                          const PsiFunction& psi_sigma, double A,
                                          double B, double tol = 1e-9);

/// Monte Carlo B under the fitted outcome model: covariate rows resampled
/// from all n units, nu ~ N(0,1), evaluated at the supplied (mu, sigma).
double compute_constant_B_model(const OutcomeModel& om, const Dataset& data,
                                const PsiFunction& psi_sigma, double mu,
                                double sigma, std::size_t mc_draws, RngStream rng);

/// Both correction constants from one set of draws under the outcome
/// model: A = E[psi_mu(u)], B = E[psi_sigma(u)^2] at the supplied
/// (mu, sigma). The augmented robust solve anchors these at the
/// model-implied location and scale.
std::pair<double, double> compute_constants_model(const OutcomeModel& om,
                                                  const Dataset& data,
                                                  const PsiFunction& psi_mu,
                                                  const PsiFunction& psi_sigma,
                                                  double mu, double sigma,
                                                  std::size_t mc_draws,
                                                  RngStream rng);

/// Draws htilde_j + xi2*nu from the fitted outcome model, suitable for
/// RobustSolveOptions::model_draws.
std::vector<double> make_model_draws(const OutcomeModel& om, const Dataset& data,
                                     std::size_t mc_draws, RngStream rng);

LocationScaleEstimate estimate_ripw(const Dataset& data, const PropensityModel& pm,
                                    const PsiFunction& psi_mu,
                                    const PsiFunction& psi_sigma,
                                    const RobustSolveOptions& opts = {});

LocationScaleEstimate estimate_raipw(const Dataset& data, const PropensityModel& pm,
                                     const OutcomeModel& om, const PsiFunction& psi_mu,
                                     const PsiFunction& psi_sigma,
                                     const RobustSolveOptions& opts = {});

/// Plug-in outcome-regression estimator; om_mu and om_sigma may be the
/// same fit or two fits with different regression constants.
LocationScaleEstimate estimate_ror(const Dataset& data, const OutcomeModel& om_mu,
                                   const OutcomeModel& om_sigma);

namespace detail {
/// Fast fixed-order Gauss-Hermite evaluation of the integrated working
/// model for every unit; the checked working_model_h wraps the same
/// integrand with adaptive refinement.
void working_model_h_table(const std::vector<double>& htilde, double xi2,
                           double mu, double sigma, const PsiFunction& psi_mu,
                           const PsiFunction& psi_sigma, double A, double B,
                           int gh_nodes, std::vector<double>& h1,
                           std::vector<double>& h2);
}  // namespace detail

}  // namespace robmiss
