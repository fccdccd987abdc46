#include "robmiss/kernels.hpp"

#include <atomic>

namespace robmiss::kernels {

namespace {

Backend detect() {
#if defined(__x86_64__)
  if (__builtin_cpu_supports("avx2")) return Backend::avx2;
#endif
  return Backend::scalar;
}

std::atomic<Backend> g_backend{detect()};

}  // namespace

Backend active_backend() { return g_backend.load(std::memory_order_relaxed); }

void force_backend(Backend b) {
#if !defined(__x86_64__)
  if (b == Backend::avx2) b = Backend::scalar;
#endif
  if (b == Backend::avx2 && detect() != Backend::avx2) b = Backend::scalar;
  g_backend.store(b, std::memory_order_relaxed);
}

void reset_backend() { g_backend.store(detect(), std::memory_order_relaxed); }

void psi_batch(const PsiFunction& psi, const double* t, double* out,
               std::size_t n) {
#if defined(__x86_64__)
  if (active_backend() == Backend::avx2)
    return detail::psi_batch_avx2(psi, t, out, n);
#endif
  detail::psi_batch_scalar(psi, t, out, n);
}

void weighted_psi_pair_sum(const double* v, const double* w, std::size_t n,
                           double mu, double inv_sigma, const PsiFunction& psi_mu,
                           const PsiFunction& psi_sigma, double* sum1,
                           double* sum2) {
#if defined(__x86_64__)
  if (active_backend() == Backend::avx2)
    return detail::weighted_psi_pair_sum_avx2(v, w, n, mu, inv_sigma, psi_mu,
                                              psi_sigma, sum1, sum2);
#endif
  detail::weighted_psi_pair_sum_scalar(v, w, n, mu, inv_sigma, psi_mu, psi_sigma,
                                       sum1, sum2);
}

double psi_sq_sum(const double* v, std::size_t n, double mu, double inv_sigma,
                  const PsiFunction& psi) {
#if defined(__x86_64__)
  if (active_backend() == Backend::avx2)
    return detail::psi_sq_sum_avx2(v, n, mu, inv_sigma, psi);
#endif
  return detail::psi_sq_sum_scalar(v, n, mu, inv_sigma, psi);
}

}  // namespace robmiss::kernels
