#include "robmiss/psi.hpp"

#include <map>
#include <mutex>

#include "robmiss/numerics.hpp"

namespace robmiss {

PsiFunction PsiFunction::make(PsiKind kind, double c) {
  if (kind != PsiKind::identity && !(c > 0.0))
    throw std::invalid_argument("psi tuning constant must be positive");
  return {kind, kind == PsiKind::identity ? 0.0 : c};
}

double PsiFunction::eval(double t) const {
  if (!std::isfinite(t)) throw std::invalid_argument("psi: non-finite input");
  switch (kind) {
    case PsiKind::identity:
      return t;
    case PsiKind::huber:
      return detail::psi_huber(t, c);
    case PsiKind::tukey:
      return detail::psi_tukey(t, c, 1.0 / (c * c));
  }
  return t;
}

double PsiFunction::weight(double t) const {
  if (!std::isfinite(t)) throw std::invalid_argument("psi: non-finite input");
  switch (kind) {
    case PsiKind::identity:
      return 1.0;
    case PsiKind::huber:
      return std::abs(t) <= c ? 1.0 : c / std::abs(t);
    case PsiKind::tukey: {
      if (t == 0.0) return 1.0;  // limit of ((t/c)^2 - 1)^2
      if (std::abs(t) >= c) return 0.0;
      const double q = (t * t) / (c * c) - 1.0;
      return q * q;
    }
  }
  return 1.0;
}

double PsiFunction::deriv(double t) const {
  if (!std::isfinite(t)) throw std::invalid_argument("psi: non-finite input");
  switch (kind) {
    case PsiKind::identity:
      return 1.0;
    case PsiKind::huber:
      return detail::psi_huber_deriv(t, c);
    case PsiKind::tukey:
      return detail::psi_tukey_deriv(t, c, 1.0 / (c * c));
  }
  return 1.0;
}

double gaussian_expectation_psi_sq(const PsiFunction& psi) {
  if (psi.kind == PsiKind::identity) return 1.0;

  static std::mutex mu;
  static std::map<std::pair<int, double>, double> cache;
  const auto key = std::make_pair(static_cast<int>(psi.kind), psi.c);
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }

  double value;
  if (psi.kind == PsiKind::huber) {
    const double c = psi.c;
    value = 2.0 * normal_cdf(c) - 1.0 - 2.0 * c * normal_pdf(c) +
            2.0 * c * c * (1.0 - normal_cdf(c));
  } else {
    // Tukey redescends: the integrand vanishes outside [-c, c].
    const PsiFunction p = psi;
    double err = 0.0;
    value = adaptive_gauss_kronrod(
        [&p](double z) {
          const double v = p.eval(z);
          return v * v * normal_pdf(z);
        },
        -psi.c, psi.c, 1e-10, &err);
    if (err > 1e-9)
      throw QuadratureError("gaussian_expectation_psi_sq did not converge", err);
  }

  std::lock_guard lock(mu);
  cache.emplace(key, value);
  return value;
}

}  // namespace robmiss
