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

template <PsiKind K>
inline double apply(double u, const PsiParams& p) {
  if constexpr (K == PsiKind::identity) {
    return u;
  } else if constexpr (K == PsiKind::huber) {
    return robmiss::detail::psi_huber(u, p.c);
  } else {
    return robmiss::detail::psi_tukey(u, p.c, p.inv_c2);
  }
}

// Four-stripe accumulation, combined as ((s0+s1)+(s2+s3)) + tail. The AVX2
// backend produces the same stripe pattern, so sums match bitwise.
template <PsiKind KMu, PsiKind KSg>
void pair_sum(const double* v, const double* w, std::size_t n, double mu,
              double inv_sigma, const PsiParams& pmu, const PsiParams& psg,
              double* sum1, double* sum2) {
  double a1[4] = {0, 0, 0, 0};
  double a2[4] = {0, 0, 0, 0};
  const std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double u = (v[i + j] - mu) * inv_sigma;
      const double s = apply<KSg>(u, psg);
      const double wi = w ? w[i + j] : 1.0;
      a1[j] += wi * apply<KMu>(u, pmu);
      a2[j] += wi * (s * s);
    }
  }
  double s1 = (a1[0] + a1[1]) + (a1[2] + a1[3]);
  double s2 = (a2[0] + a2[1]) + (a2[2] + a2[3]);
  for (std::size_t i = main; i < n; ++i) {
    const double u = (v[i] - mu) * inv_sigma;
    const double s = apply<KSg>(u, psg);
    const double wi = w ? w[i] : 1.0;
    s1 += wi * apply<KMu>(u, pmu);
    s2 += wi * (s * s);
  }
  *sum1 = s1;
  *sum2 = s2;
}

template <PsiKind K>
void batch(const double* t, double* out, std::size_t n, const PsiParams& p) {
  for (std::size_t i = 0; i < n; ++i) out[i] = apply<K>(t[i], p);
}

template <PsiKind K>
double sq_sum(const double* v, std::size_t n, double mu, double inv_sigma,
              const PsiParams& p) {
  double a[4] = {0, 0, 0, 0};
  const std::size_t main = n - n % 4;
  for (std::size_t i = 0; i < main; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double u = (v[i + j] - mu) * inv_sigma;
      const double s = apply<K>(u, p);
      a[j] += s * s;
    }
  }
  double acc = (a[0] + a[1]) + (a[2] + a[3]);
  for (std::size_t i = main; i < n; ++i) {
    const double u = (v[i] - mu) * inv_sigma;
    const double s = apply<K>(u, p);
    acc += s * s;
  }
  return acc;
}

}  // namespace

void psi_batch_scalar(const PsiFunction& psi, const double* t, double* out,
                      std::size_t n) {
  const PsiParams p = params(psi);
  switch (psi.kind) {
    case PsiKind::identity: batch<PsiKind::identity>(t, out, n, p); break;
    case PsiKind::huber: batch<PsiKind::huber>(t, out, n, p); break;
    case PsiKind::tukey: batch<PsiKind::tukey>(t, out, n, p); break;
  }
}

void weighted_psi_pair_sum_scalar(const double* v, const double* w, std::size_t n,
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

double psi_sq_sum_scalar(const double* v, std::size_t n, double mu,
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
