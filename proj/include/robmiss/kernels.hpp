#pragma once

#include <cstddef>

#include "robmiss/psi.hpp"

namespace robmiss::kernels {

enum class Backend { scalar, avx2 };

/// Backend picked at startup from CPU capabilities; override for testing.
Backend active_backend();
void force_backend(Backend b);
void reset_backend();

/// out[i] = psi(t[i]). Inputs must be finite.
void psi_batch(const PsiFunction& psi, const double* t, double* out, std::size_t n);

/// Weighted score sums over standardized residuals u_i = (v[i]-mu)*inv_sigma:
///   sum1 = sum_i w[i] * psi_mu(u_i)
///   sum2 = sum_i w[i] * psi_sigma(u_i)^2
/// w == nullptr means unit weights. Both backends accumulate in four
/// stripes combined as ((s0+s1)+(s2+s3)) then the tail, so results are
/// bitwise identical across backends.
void weighted_psi_pair_sum(const double* v, const double* w, std::size_t n,
                           double mu, double inv_sigma, const PsiFunction& psi_mu,
                           const PsiFunction& psi_sigma, double* sum1, double* sum2);

/// sum_i psi(u_i)^2 with u_i = (v[i]-mu)*inv_sigma.
double psi_sq_sum(const double* v, std::size_t n, double mu, double inv_sigma,
                  const PsiFunction& psi);

namespace detail {
void psi_batch_scalar(const PsiFunction&, const double*, double*, std::size_t);
void weighted_psi_pair_sum_scalar(const double*, const double*, std::size_t, double,
                                  double, const PsiFunction&, const PsiFunction&,
                                  double*, double*);
double psi_sq_sum_scalar(const double*, std::size_t, double, double,
                         const PsiFunction&);
#if defined(__x86_64__)
void psi_batch_avx2(const PsiFunction&, const double*, double*, std::size_t);
void weighted_psi_pair_sum_avx2(const double*, const double*, std::size_t, double,
                                double, const PsiFunction&, const PsiFunction&,
                                double*, double*);
double psi_sq_sum_avx2(const double*, std::size_t, double, double,
                       const PsiFunction&);
#endif
}  // namespace detail

}  // namespace robmiss::kernels
