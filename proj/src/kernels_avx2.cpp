// AVX2 variants of the psi kernels. Arithmetic mirrors the scalar reference
// operation for operation (no FMA), so results are bitwise identical.
#if defined(__x86_64__)

#include <immintrin.h>

#include "robmiss/kernels.hpp"

namespace robmiss::kernels::detail {

namespace {

struct PsiParams {
  PsiKind kind;
  double c;
  double inv_c2;
};

inline PsiParams params(const PsiFunction& p) {
  return {p.kind, p.c, p.kind == PsiKind::tukey ? 1.0 / (p.c * p.c) : 0.0};
}

inline __m256d abs_pd(__m256d x) {
  const __m256d mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7FFFFFFFFFFFFFFFll));
  return _mm256_and_pd(x, mask);
}

template <PsiKind K>
inline __m256d apply(__m256d u, const PsiParams& p) {
  if constexpr (K == PsiKind::identity) {
    return u;
  } else if constexpr (K == PsiKind::huber) {
    const __m256d c = _mm256_set1_pd(p.c);
    const __m256d nc = _mm256_set1_pd(-p.c);
    return _mm256_min_pd(c, _mm256_max_pd(u, nc));
  } else {
    const __m256d inv_c2 = _mm256_set1_pd(p.inv_c2);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d q = _mm256_sub_pd(_mm256_mul_pd(_mm256_mul_pd(u, u), inv_c2), one);
    const __m256d val = _mm256_mul_pd(_mm256_mul_pd(q, q), u);
    const __m256d inside = _mm256_cmp_pd(abs_pd(u), _mm256_set1_pd(p.c), _CMP_LT_OQ);
    return _mm256_and_pd(val, inside);
  }
}

template <PsiKind K>
inline double apply_scalar(double u, const PsiParams& p) {
  if constexpr (K == PsiKind::identity) {
    return u;
  } else if constexpr (K == PsiKind::huber) {
    return robmiss::detail::psi_huber(u, p.c);
  } else {
    return robmiss::detail::psi_tukey(u, p.c, p.inv_c2);
  }
}

// Lane j of the vector accumulator sees elements j, j+4, j+8, ... exactly
// like stripe j of the scalar reference; the horizontal combine matches too.
inline double combine(__m256d acc) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

template <PsiKind KMu, PsiKind KSg>
void pair_sum(const double* v, const double* w, std::size_t n, double mu,
              double inv_sigma, const PsiParams& pmu, const PsiParams& psg,
              double* sum1, double* sum2) {
  const __m256d vmu = _mm256_set1_pd(mu);
  const __m256d vis = _mm256_set1_pd(inv_sigma);
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  const std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4) {
    const __m256d x = _mm256_loadu_pd(v + i);
    const __m256d u = _mm256_mul_pd(_mm256_sub_pd(x, vmu), vis);
    const __m256d s = apply<KSg>(u, psg);
    const __m256d t1 = apply<KMu>(u, pmu);
    const __m256d t2 = _mm256_mul_pd(s, s);
    if (w) {
      const __m256d wi = _mm256_loadu_pd(w + i);
      acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(wi, t1));
      acc2 = _mm256_add_pd(acc2, _mm256_mul_pd(wi, t2));
    } else {
      acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_set1_pd(1.0), t1));
      acc2 = _mm256_add_pd(acc2, _mm256_mul_pd(_mm256_set1_pd(1.0), t2));
    }
  }
  double s1 = combine(acc1);
  double s2 = combine(acc2);
  for (std::size_t i = main; i < n; ++i) {
    const double u = (v[i] - mu) * inv_sigma;
    const double s = apply_scalar<KSg>(u, psg);
    const double wi = w ? w[i] : 1.0;
    s1 += wi * apply_scalar<KMu>(u, pmu);
    s2 += wi * (s * s);
  }
  *sum1 = s1;
  *sum2 = s2;
}

template <PsiKind K>
void batch(const double* t, double* out, std::size_t n, const PsiParams& p) {
  const std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4)
    _mm256_storeu_pd(out + i, apply<K>(_mm256_loadu_pd(t + i), p));
  for (std::size_t i = main; i < n; ++i) out[i] = apply_scalar<K>(t[i], p);
}

template <PsiKind K>
double sq_sum(const double* v, std::size_t n, double mu, double inv_sigma,
              const PsiParams& p) {
  const __m256d vmu = _mm256_set1_pd(mu);
  const __m256d vis = _mm256_set1_pd(inv_sigma);
  __m256d acc = _mm256_setzero_pd();
  const std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4) {
    const __m256d x = _mm256_loadu_pd(v + i);
    const __m256d u = _mm256_mul_pd(_mm256_sub_pd(x, vmu), vis);
    const __m256d s = apply<K>(u, p);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(s, s));
  }
  double out = combine(acc);
  for (std::size_t i = main; i < n; ++i) {
    const double u = (v[i] - mu) * inv_sigma;
    const double s = apply_scalar<K>(u, p);
    out += s * s;
  }
  return out;
}

}  // namespace

void psi_batch_avx2(const PsiFunction& psi, const double* t, double* out,
                    std::size_t n) {
  const PsiParams p = params(psi);
  switch (psi.kind) {
    case PsiKind::identity: batch<PsiKind::identity>(t, out, n, p); break;
    case PsiKind::huber: batch<PsiKind::huber>(t, out, n, p); break;
    case PsiKind::tukey: batch<PsiKind::tukey>(t, out, n, p); break;
  }
}

void weighted_psi_pair_sum_avx2(const double* v, const double* w, std::size_t n,
                                double mu, double inv_sigma,
                                const PsiFunction& psi_mu,
                                const PsiFunction& psi_sigma, double* sum1,
                                double* sum2) {
  const PsiParams pmu = params(psi_mu);
  const PsiParams psg = params(psi_sigma);
  auto run = [&](auto kmu, auto ksg) {
    pair_sum<decltype(kmu)::value, decltype(ksg)::value>(v, w, n, mu, inv_sigma,
                                                         pmu, psg, sum1, sum2);
  };
  auto outer = [&](auto kmu) {
    switch (psi_sigma.kind) {
      case PsiKind::identity:
        run(kmu, std::integral_constant<PsiKind, PsiKind::identity>{});
        break;
      case PsiKind::huber:
        run(kmu, std::integral_constant<PsiKind, PsiKind::huber>{});
        break;
      case PsiKind::tukey:
        run(kmu, std::integral_constant<PsiKind, PsiKind::tukey>{});
        break;
    }
  };
  switch (psi_mu.kind) {
    case PsiKind::identity:
      outer(std::integral_constant<PsiKind, PsiKind::identity>{});
      break;
    case PsiKind::huber:
      outer(std::integral_constant<PsiKind, PsiKind::huber>{});
      break;
    case PsiKind::tukey:
      outer(std::integral_constant<PsiKind, PsiKind::tukey>{});
      break;
  }
}

double psi_sq_sum_avx2(const double* v, std::size_t n, double mu,
                       double inv_sigma, const PsiFunction& psi) {
  const PsiParams p = params(psi);
  switch (psi.kind) {
    case PsiKind::identity: return sq_sum<PsiKind::identity>(v, n, mu, inv_sigma, p);
    case PsiKind::huber: return sq_sum<PsiKind::huber>(v, n, mu, inv_sigma, p);
    case PsiKind::tukey: return sq_sum<PsiKind::tukey>(v, n, mu, inv_sigma, p);
  }
  return 0.0;
}

}  // namespace robmiss::kernels::detail

#endif  // __x86_64__
