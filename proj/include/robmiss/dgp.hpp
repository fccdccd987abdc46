#pragma once

#include <cstdint>
#include <string>

#include "robmiss/data.hpp"
#include "robmiss/rng.hpp"

namespace robmiss {

enum class XiLevel { strong, moderate, none };
enum class GammaLevel { strong, moderate };
enum class Contamination { clean, c_asym, c_sym, c_hidden };

XiLevel parse_xi_level(const std::string& s);
GammaLevel parse_gamma_level(const std::string& s);
Contamination parse_contamination(const std::string& s);
std::string to_string(XiLevel);
std::string to_string(GammaLevel);
std::string to_string(Contamination);

struct ScenarioConfig {
  XiLevel xi_level = XiLevel::moderate;
  GammaLevel gamma_level = GammaLevel::moderate;
  int n = 1000;
  Contamination contamination = Contamination::clean;
  double contamination_rate = 0.05;
  /// The hidden scheme draws from N(-10, 0.4); 0.4 is read as a variance
  /// by default, as a standard deviation when this flag is set.
  bool hidden_scale_is_sd = false;
  std::uint64_t seed = 0;
  std::uint64_t replicate_index = 0;
};

/// Outcome-model coefficients (xi10..xi16) for a level; the first four are
/// fixed at (0, -1, 1, -1).
Eigen::VectorXd outcome_coefficients(XiLevel level);

/// Missingness coefficients (gamma1..gamma4). The logistic form models the
/// probability of Z2 being missing, so Pr(R = 1 | X) = 1 - expit(gamma'Xt).
Eigen::Vector4d missingness_coefficients(GammaLevel level);

/// The 4x4 covariance of (X1, V1, X2, V2) given X3, and the two means.
const Eigen::Matrix4d& covariate_covariance();
Eigen::Vector4d covariate_mean(int x3);

/// Generate one replicate. Separate RNG streams keyed on
/// (seed, replicate_index, purpose) decouple covariates, missingness,
/// noise and contamination, so replicates are reproducible bitwise in any
/// execution order.
Dataset generate_replicate(const ScenarioConfig& cfg);

/// Replace floor(rate * #observed) randomly chosen observed responses per
/// the scheme. If the count rounds to zero the dataset is returned
/// unchanged with contamination_skipped set.
Dataset contaminate(const Dataset& d, Contamination scheme, double rate,
                    bool hidden_scale_is_sd, RngStream& rng);

/// Closed-form (mu0, sigma0) of the clean outcome law; contamination in
/// the config is ignored.
std::pair<double, double> true_beta(const ScenarioConfig& cfg);

/// Stream reserved for estimator-side Monte Carlo (the model-based B);
/// distinct from the four generation streams of the replicate.
RngStream auxiliary_stream(const ScenarioConfig& cfg);

/// Delimiter-separated dump with header x1,x2,x3,v1,v2,v3,r,z2,contaminated;
/// missing z2 is written as an empty field.
void write_dataset_csv(const Dataset& d, const std::string& path);

}  // namespace robmiss
