#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace robmiss {

enum class PsiKind { identity, huber, tukey };

namespace detail {

// Scalar cores shared by PsiFunction and the batched kernels. The exact
// operation order matters: the AVX2 kernels mirror it so that scalar and
// vector paths round identically.

inline double psi_huber(double t, double c) {
  return std::min(c, std::max(t, -c));
}

// inv_c2 must be 1/(c*c) computed once by the caller.
inline double psi_tukey(double t, double c, double inv_c2) {
  const double q = (t * t) * inv_c2 - 1.0;
  const double v = (q * q) * t;
  return std::abs(t) < c ? v : 0.0;
}

inline double psi_huber_deriv(double t, double c) {
  return std::abs(t) < c ? 1.0 : 0.0;
}

inline double psi_tukey_deriv(double t, double c, double inv_c2) {
  const double u = (t * t) * inv_c2;
  const double q = u - 1.0;
  const double v = q * q + 4.0 * u * q;
  return std::abs(t) < c ? v : 0.0;
}

}  // namespace detail

/// A tunable score function: identity, Huber clipping, or the redescending
/// Tukey biweight. Immutable; safe to share across threads.
struct PsiFunction {
  PsiKind kind = PsiKind::identity;
  double c = 0.0;  // tuning constant; ignored by identity

  static PsiFunction identity() { return {PsiKind::identity, 0.0}; }
  static PsiFunction huber(double c) { return make(PsiKind::huber, c); }
  static PsiFunction tukey(double c) { return make(PsiKind::tukey, c); }
  static PsiFunction make(PsiKind kind, double c);

  double eval(double t) const;

  /// psi(t)/t with its limit value 1 at t = 0.
  double weight(double t) const;

  /// d/dt of eval. At the Huber kinks |t| = c the outer value 0 is used.
  double deriv(double t) const;
};

/// E[psi(Z)^2] for Z standard normal. Huber uses the closed form
/// 2*Phi(c) - 1 - 2*c*phi(c) + 2*c^2*(1 - Phi(c)); Tukey integrates
/// psi(z)^2 phi(z) over [-c, c] with an adaptive rule (abs tol 1e-10);
/// identity returns 1 exactly. Results are cached per (kind, c).
double gaussian_expectation_psi_sq(const PsiFunction& psi);

}  // namespace robmiss
