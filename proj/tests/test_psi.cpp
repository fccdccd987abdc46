#include <doctest.h>

#include <cmath>

#include "robmiss/numerics.hpp"
#include "robmiss/psi.hpp"
#include "robmiss/rng.hpp"

using namespace robmiss;

TEST_CASE("huber clips at the tuning constant") {
  const PsiFunction p = PsiFunction::huber(1.345);
  CHECK(p.eval(2.0) == 1.345);
  CHECK(p.eval(-2.0) == -1.345);
  CHECK(p.eval(0.5) == 0.5);
}

TEST_CASE("tukey redescends to zero at |t| = c") {
  const PsiFunction p = PsiFunction::tukey(4.685);
  CHECK(p.eval(4.685) == 0.0);
  CHECK(p.eval(-4.685) == 0.0);
  CHECK(p.eval(100.0) == 0.0);
  // Frozen from an independent high-precision evaluation of ((t/c)^2-1)^2 t.
  CHECK(p.eval(1.0) == doctest::Approx(0.91095629550292001).epsilon(1e-12));
  CHECK(p.eval(2.5) == doctest::Approx(1.2789632199076062).epsilon(1e-12));
}

TEST_CASE("identity returns its argument and ignores c") {
  const PsiFunction p = PsiFunction::identity();
  CHECK(p.eval(7.0) == 7.0);
  CHECK(p.deriv(7.0) == 1.0);
  CHECK(p.weight(123.0) == 1.0);
}

TEST_CASE("non-finite input is rejected") {
  const PsiFunction p = PsiFunction::huber(1.345);
  CHECK_THROWS_AS(p.eval(std::numeric_limits<double>::quiet_NaN()),
                  std::invalid_argument);
  CHECK_THROWS_AS(p.eval(std::numeric_limits<double>::infinity()),
                  std::invalid_argument);
  CHECK_THROWS_AS(PsiFunction::tukey(-1.0), std::invalid_argument);
}

TEST_CASE("weight form: psi(t)/t with limit 1 at zero") {
  CHECK(PsiFunction::huber(1.345).weight(2.69) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(PsiFunction::huber(1.345).weight(0.0) == 1.0);
  CHECK(PsiFunction::tukey(4.685).weight(0.0) == 1.0);
  CHECK(PsiFunction::tukey(4.685).weight(5.0) == 0.0);
}

TEST_CASE("oddness over random inputs") {
  RngStream rng(42, 0);
  const PsiFunction psis[] = {PsiFunction::identity(), PsiFunction::huber(1.345),
                              PsiFunction::tukey(4.685), PsiFunction::tukey(5.4)};
  for (const auto& p : psis) {
    for (int k = 0; k < 1000; ++k) {
      const double t = -10.0 + 20.0 * rng.uniform();
      CHECK(p.eval(-t) == -p.eval(t));
    }
  }
}

TEST_CASE("psi(t) = weight(t) * t") {
  RngStream rng(43, 0);
  const PsiFunction psis[] = {PsiFunction::identity(), PsiFunction::huber(1.345),
                              PsiFunction::tukey(4.685)};
  for (const auto& p : psis) {
    for (int k = 0; k < 1000; ++k) {
      double t = -10.0 + 20.0 * rng.uniform();
      if (t == 0.0) t = 0.5;
      const double lhs = p.eval(t);
      const double rhs = p.weight(t) * t;
      CHECK(std::abs(lhs - rhs) <= 1e-14 * std::max(1.0, std::abs(lhs)));
    }
  }
}

TEST_CASE("derivative matches central differences away from huber kinks") {
  RngStream rng(44, 0);
  const PsiFunction psis[] = {PsiFunction::identity(), PsiFunction::huber(1.345),
                              PsiFunction::tukey(4.685)};
  const double h = 1e-6;
  for (const auto& p : psis) {
    for (int k = 0; k < 500; ++k) {
      const double t = -8.0 + 16.0 * rng.uniform();
      if (p.kind == PsiKind::huber && std::abs(std::abs(t) - p.c) < 1e-4) continue;
      const double fd = (p.eval(t + h) - p.eval(t - h)) / (2.0 * h);
      CHECK(std::abs(p.deriv(t) - fd) <= 1e-6);
    }
  }
  // Frozen from the analytic derivative, cross-checked by finite differences.
  CHECK(PsiFunction::tukey(4.685).deriv(1.0) ==
        doctest::Approx(0.7370202581549188).epsilon(1e-10));
  CHECK(PsiFunction::huber(1.345).deriv(0.5) == 1.0);
  // Kink convention: the outer value.
  CHECK(PsiFunction::huber(1.345).deriv(1.345) == 0.0);
}

TEST_CASE("gaussian expectation of psi^2") {
  // Closed form for Huber, frozen from a high-precision evaluation.
  CHECK(gaussian_expectation_psi_sq(PsiFunction::huber(1.345)) ==
        doctest::Approx(0.71016454826904851).epsilon(1e-10));
  CHECK(gaussian_expectation_psi_sq(PsiFunction::identity()) == 1.0);
  // Tukey values come out of the adaptive rule; frozen against an
  // independent quadrature.
  CHECK(gaussian_expectation_psi_sq(PsiFunction::tukey(5.4)) ==
        doctest::Approx(0.67868972273993393).epsilon(1e-8));
  CHECK(gaussian_expectation_psi_sq(PsiFunction::tukey(4.685)) ==
        doctest::Approx(0.60444836272281255).epsilon(1e-8));
}

TEST_CASE("huber closed form equals direct quadrature of the integrand") {
  for (double c : {0.8, 1.345, 1.35, 2.0}) {
    const double closed = gaussian_expectation_psi_sq(PsiFunction::huber(c));
    const PsiFunction p = PsiFunction::huber(c);
    const double quad = quadrature_normal_expectation(
        [&](double z) {
          const double v = p.eval(z);
          return v * v;
        },
        1e-10);
    CHECK(closed == doctest::Approx(quad).epsilon(1e-8));
  }
}

TEST_CASE("huber with huge c behaves as identity") {
  const PsiFunction h = PsiFunction::huber(1e6);
  const PsiFunction id = PsiFunction::identity();
  for (double t = -100.0; t <= 100.0; t += 7.3) {
    CHECK(h.eval(t) == id.eval(t));
    CHECK(h.deriv(t) == id.deriv(t));
  }
}

TEST_CASE("monte carlo oracle agrees with the quadrature constant") {
  // 10^6 standard normals: agreement within 3 MC standard errors.
  const PsiFunction p = PsiFunction::tukey(5.4);
  RngStream rng(99, 7);
  const int n = 1000000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = p.eval(rng.normal());
    sum += v * v;
    sumsq += v * v * v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sumsq / n - mean * mean) / n);
  const double target = gaussian_expectation_psi_sq(p);
  CHECK(std::abs(mean - target) < 3.0 * se);
}
