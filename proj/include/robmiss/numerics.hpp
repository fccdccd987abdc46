#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "robmiss/rng.hpp"

namespace robmiss {

double normal_pdf(double x);
double normal_cdf(double x);

/// Draw from N(mean, covariance). The covariance may be positive
/// semi-definite; a zero eigenvalue yields a degenerate draw on the
/// corresponding subspace. Throws if the matrix is not PSD.
class MvNormal {
 public:
  explicit MvNormal(const Eigen::MatrixXd& covariance);
  Eigen::VectorXd sample(const Eigen::VectorXd& mean, RngStream& rng) const;
  int dim() const { return static_cast<int>(factor_.rows()); }

 private:
  Eigen::MatrixXd factor_;  // L with L L' = covariance
};

Eigen::VectorXd sample_mvnormal(const Eigen::VectorXd& mean,
                                const Eigen::MatrixXd& covariance,
                                RngStream& rng);

struct MinimizerReport {
  Eigen::VectorXd argmin;
  double objective_at_min = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct MinimizeOptions {
  double tolerance = 1e-9;  // simplex diameter
  int max_iter = 400;       // per start
  int restarts = 3;         // extra runs from the perturbed best point
  double initial_step = 0.1;
};

/// Derivative-free Nelder-Mead simplex search. Returns once the simplex
/// diameter drops below the tolerance or the iteration budget is spent
/// (converged = false). Non-finite objective values abort with an error
/// naming the offending point.
MinimizerReport minimize(const std::function<double(const Eigen::VectorXd&)>& objective,
                         const Eigen::VectorXd& start,
                         const MinimizeOptions& opts = {});

struct QuadratureError : std::runtime_error {
  double residual;
  QuadratureError(const std::string& what, double residual)
      : std::runtime_error(what), residual(residual) {}
};

/// Integral of f against the standard normal density. Fixed-order
/// Gauss-Hermite (40 nodes, with the weight change absorbing the density)
/// cross-checked at order 80; on disagreement an adaptive Gauss-Kronrod
/// pass refines, and failure to reach 10*tol raises QuadratureError.
double quadrature_normal_expectation(const std::function<double(double)>& f,
                                     double tol = 1e-9);

/// Adaptive Gauss-Kronrod (7-15) on [a, b] to an absolute tolerance.
double adaptive_gauss_kronrod(const std::function<double(double)>& f, double a,
                              double b, double tol, double* err_estimate = nullptr);

/// Gauss-Hermite rule of order n rewritten for N(0,1) expectations:
/// E[f(Z)] ~ sum_k weights[k] * f(nodes[k]).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussHermiteRule& gauss_hermite_rule(int n);

/// Central-difference Jacobian with per-coordinate step
/// h_j = cbrt(eps) * max(1, |x_j|).
Eigen::MatrixXd numerical_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& g,
    const Eigen::VectorXd& x);

}  // namespace robmiss
