#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace robmiss {

/// One simulated replicate. Covariates are fully observed; z2 is generated
/// for every unit but meaningful only where r = 1. The contaminated flags
/// are a subset of the observed units.
struct Dataset {
  Eigen::MatrixXd X;  // n x 3: x1, x2 real; x3 binary
  Eigen::MatrixXd V;  // n x 3: v1, v2 real; v3 binary
  Eigen::VectorXi R;
  Eigen::VectorXd z2;
  std::vector<std::uint8_t> contaminated;
  bool contamination_skipped = false;

  int n() const { return static_cast<int>(z2.size()); }
  int observed_count() const { return R.sum(); }

  /// Covariate column by name: x1, x2, x3, v1, v2, v3.
  Eigen::VectorXd column(const std::string& name) const;
};

/// Design matrix with a leading intercept column followed by the named
/// covariates in order.
Eigen::MatrixXd build_design(const Dataset& data,
                             const std::vector<std::string>& columns);

/// Named covariate sets used by the estimator roster.
///   X   -> {x1, x2, x3}        XV  -> {x1, x2, x3, v1, v2, v3}
///   X_  -> {x2, x3}            X_V -> {x2, x3, v1, v2, v3}
std::vector<std::string> covariate_set(const std::string& set_name);

}  // namespace robmiss
