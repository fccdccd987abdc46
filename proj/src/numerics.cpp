#include "robmiss/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

namespace robmiss {

double normal_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779399461;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double normal_cdf(double x) {
  static const double inv_sqrt2 = 0.7071067811865475244008444;
  return 0.5 * std::erfc(-x * inv_sqrt2);
}

// ---------------------------------------------------------------------------
// Multivariate normal sampling

MvNormal::MvNormal(const Eigen::MatrixXd& covariance) {
  if (covariance.rows() != covariance.cols())
    throw std::invalid_argument("covariance must be square");
  if (!covariance.isApprox(covariance.transpose(), 1e-12))
    throw std::invalid_argument("covariance must be symmetric");

  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() == Eigen::Success) {
    factor_ = llt.matrixL();
    return;
  }
  // Semi-definite case: eigen factorization with tiny negatives clamped.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covariance);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("covariance factorization failed");
  const double max_ev = es.eigenvalues().maxCoeff();
  const double floor = -1e-10 * std::max(1.0, max_ev);
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] < floor)
      throw std::invalid_argument("covariance is not positive semi-definite");
    ev[i] = std::max(ev[i], 0.0);
  }
  factor_ = es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
}

Eigen::VectorXd MvNormal::sample(const Eigen::VectorXd& mean, RngStream& rng) const {
  if (mean.size() != factor_.rows())
    throw std::invalid_argument("mean dimension mismatch");
  Eigen::VectorXd z(mean.size());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + factor_ * z;
}

Eigen::VectorXd sample_mvnormal(const Eigen::VectorXd& mean,
                                const Eigen::MatrixXd& covariance,
                                RngStream& rng) {
  return MvNormal(covariance).sample(mean, rng);
}

// ---------------------------------------------------------------------------
// Nelder-Mead

namespace {

double simplex_diameter(const std::vector<Eigen::VectorXd>& x) {
  double d = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i)
    d = std::max(d, (x[i] - x[0]).lpNorm<Eigen::Infinity>());
  return d;
}

double checked_eval(const std::function<double(const Eigen::VectorXd&)>& f,
                    const Eigen::VectorXd& x) {
  const double v = f(x);
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "minimize: non-finite objective at point [";
    for (int i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << "]";
    throw std::runtime_error(os.str());
  }
  return v;
}

// One Nelder-Mead run; simplex built around start with steps `step`.
void nm_run(const std::function<double(const Eigen::VectorXd&)>& f,
            const Eigen::VectorXd& start, double step, double tol, int max_iter,
            Eigen::VectorXd& best_x, double& best_f, int& iters, bool& converged) {
  const int d = static_cast<int>(start.size());
  std::vector<Eigen::VectorXd> x(d + 1, start);
  std::vector<double> fx(d + 1);
  for (int i = 0; i < d; ++i)
    x[i + 1][i] += step * std::max(1.0, std::abs(start[i]));
  for (int i = 0; i <= d; ++i) fx[i] = checked_eval(f, x[i]);

  converged = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    // Order vertices by objective.
    std::vector<int> idx(d + 1);
    for (int i = 0; i <= d; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      return fx[a] < fx[b] || (fx[a] == fx[b] && a < b);
    });
    {
      std::vector<Eigen::VectorXd> xs(d + 1);
      std::vector<double> fs(d + 1);
      for (int i = 0; i <= d; ++i) { xs[i] = x[idx[i]]; fs[i] = fx[idx[i]]; }
      x.swap(xs);
      fx.swap(fs);
    }
    if (simplex_diameter(x) < tol) {
      converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) centroid += x[i];
    centroid /= d;

    const Eigen::VectorXd xr = centroid + (centroid - x[d]);
    const double fr = checked_eval(f, xr);
    if (fr < fx[0]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - x[d]);
      const double fe = checked_eval(f, xe);
      if (fe < fr) { x[d] = xe; fx[d] = fe; } else { x[d] = xr; fx[d] = fr; }
    } else if (fr < fx[d - 1]) {
      x[d] = xr;
      fx[d] = fr;
    } else {
      const bool outside = fr < fx[d];
      const Eigen::VectorXd xc =
          outside ? centroid + 0.5 * (xr - centroid) : centroid + 0.5 * (x[d] - centroid);
      const double fc = checked_eval(f, xc);
      if (fc < (outside ? fr : fx[d])) {
        x[d] = xc;
        fx[d] = fc;
      } else {
        for (int i = 1; i <= d; ++i) {
          x[i] = x[0] + 0.5 * (x[i] - x[0]);
          fx[i] = checked_eval(f, x[i]);
        }
      }
    }
  }

  int bi = 0;
  for (int i = 1; i <= d; ++i)
    if (fx[i] < fx[bi]) bi = i;
  best_x = x[bi];
  best_f = fx[bi];
  iters = it;
}

}  // namespace

MinimizerReport minimize(const std::function<double(const Eigen::VectorXd&)>& objective,
                         const Eigen::VectorXd& start, const MinimizeOptions& opts) {
  MinimizerReport report;
  report.argmin = start;
  report.objective_at_min = checked_eval(objective, start);

  Eigen::VectorXd x = start;
  double step = opts.initial_step;
  for (int r = 0; r <= opts.restarts; ++r) {
    Eigen::VectorXd bx;
    double bf;
    int iters = 0;
    bool conv = false;
    nm_run(objective, x, step, opts.tolerance, opts.max_iter, bx, bf, iters, conv);
    report.iterations += iters;
    if (bf <= report.objective_at_min) {
      report.objective_at_min = bf;
      report.argmin = bx;
    }
    report.converged = conv;
    x = report.argmin;
    step *= 0.25;  // restart from the incumbent with a tighter simplex
    if (conv && r > 0) break;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Quadrature

namespace {

GaussHermiteRule build_gauss_hermite(int n) {
  // Roots of the order-n Hermite polynomial by Newton iteration on the
  // orthonormal recurrence, then rescaled so that
  // E[f(Z)] = sum_k w_k f(x_k) for Z ~ N(0,1).
  GaussHermiteRule rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  const double sqrt_pi_inv_quartic = 0.7511255444649424828587030;  // pi^{-1/4}
  std::vector<double> x((n + 1) / 2), w((n + 1) / 2);
  double z = 0.0;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    if (i == 0)
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
    else if (i == 1)
      z -= 1.14 * std::pow(n, 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * x[0];
    else if (i == 3)
      z = 1.91 * z - 0.91 * x[1];
    else
      z = 2.0 * z - x[i - 2];

    double pp = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
      double p1 = sqrt_pi_inv_quartic;
      double p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    x[i] = z;
    w[i] = 2.0 / (pp * pp);
  }
  // Mirror to the full symmetric rule, largest node first.
  const double sqrt2 = 1.4142135623730950488016887;
  const double inv_sqrt_pi = 0.5641895835477562869480795;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    rule.nodes[i] = sqrt2 * x[i];
    rule.nodes[n - 1 - i] = -sqrt2 * x[i];
    rule.weights[i] = w[i] * inv_sqrt_pi;
    rule.weights[n - 1 - i] = w[i] * inv_sqrt_pi;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

// Kronrod 15 with embedded Gauss 7 (QUADPACK dqk15 constants).
const double kXgk[8] = {0.991455371120812639206854697526329,
                        0.949107912342758524526189684047851,
                        0.864864423359769072789712788640926,
                        0.741531185599394439863864773280788,
                        0.586087235467691130294144838258730,
                        0.405845151377397166906606412076961,
                        0.207784955007898467600689403773245,
                        0.000000000000000000000000000000000};
const double kWgk[8] = {0.022935322010529224963732008058970,
                        0.063092092629978553290700663189204,
                        0.104790010322250183839876322541518,
                        0.140653259715525918745189590510238,
                        0.169004726639267902826583426598550,
                        0.190350578064785409913256402421014,
                        0.204432940075298892414161999234649,
                        0.209482141084727828012999174891714};
const double kWg[4] = {0.129484966168869693270611432679082,
                       0.279705391489276667901467771423780,
                       0.381830050505118944950369775488975,
                       0.417959183673469387755102040816327};

void gk15(const std::function<double(double)>& f, double a, double b,
          double& result, double& err) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double resg = fc * kWg[3];
  double resk = fc * kWgk[7];
  for (int j = 0; j < 7; ++j) {
    const double x = h * kXgk[j];
    const double f1 = f(c - x);
    const double f2 = f(c + x);
    resk += kWgk[j] * (f1 + f2);
    if (j % 2 == 1) resg += kWg[j / 2] * (f1 + f2);
  }
  result = resk * h;
  err = std::abs((resk - resg) * h);
}

struct Segment {
  double a, b, result, err;
};

}  // namespace

const GaussHermiteRule& gauss_hermite_rule(int n) {
  static std::mutex mu;
  static std::map<int, GaussHermiteRule> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_gauss_hermite(n)).first;
  return it->second;
}

double adaptive_gauss_kronrod(const std::function<double(double)>& f, double a,
                              double b, double tol, double* err_estimate) {
  std::vector<Segment> segs;
  Segment s{a, b, 0, 0};
  gk15(f, a, b, s.result, s.err);
  segs.push_back(s);
  for (int pass = 0; pass < 2000; ++pass) {
    // Split the segment with the largest error until the total fits.
    double total_err = 0.0;
    std::size_t worst = 0;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      total_err += segs[i].err;
      if (segs[i].err > segs[worst].err) worst = i;
    }
    if (total_err <= tol || segs.size() > 1000) {
      double result = 0.0;
      for (const auto& sg : segs) result += sg.result;
      if (err_estimate) *err_estimate = total_err;
      return result;
    }
    const Segment cur = segs[worst];
    const double mid = 0.5 * (cur.a + cur.b);
    Segment left{cur.a, mid, 0, 0}, right{mid, cur.b, 0, 0};
    gk15(f, left.a, left.b, left.result, left.err);
    gk15(f, right.a, right.b, right.result, right.err);
    segs[worst] = left;
    segs.push_back(right);
  }
  double result = 0.0, total_err = 0.0;
  for (const auto& sg : segs) {
    result += sg.result;
    total_err += sg.err;
  }
  if (err_estimate) *err_estimate = total_err;
  return result;
}

double quadrature_normal_expectation(const std::function<double(double)>& f,
                                     double tol) {
  const GaussHermiteRule& r40 = gauss_hermite_rule(40);
  const GaussHermiteRule& r80 = gauss_hermite_rule(80);
  double s40 = 0.0, s80 = 0.0;
  for (int k = 0; k < 40; ++k) s40 += r40.weights[k] * f(r40.nodes[k]);
  for (int k = 0; k < 80; ++k) s80 += r80.weights[k] * f(r80.nodes[k]);
  if (std::abs(s80 - s40) <= std::max(tol, 8.0 * std::abs(s80) * 1e-16)) return s80;

  // Orders disagree (integrand not smooth enough): adaptive refinement.
  double err = 0.0;
  const double v = adaptive_gauss_kronrod(
      [&f](double z) { return f(z) * normal_pdf(z); }, -12.0, 12.0, tol, &err);
  if (err > 10.0 * tol)
    throw QuadratureError("quadrature_normal_expectation did not refine", err);
  return v;
}

Eigen::MatrixXd numerical_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& g,
    const Eigen::VectorXd& x) {
  const double cbrt_eps = std::cbrt(std::numeric_limits<double>::epsilon());
  Eigen::MatrixXd jac;
  for (int j = 0; j < x.size(); ++j) {
    const double h = cbrt_eps * std::max(1.0, std::abs(x[j]));
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const Eigen::VectorXd gp = g(xp);
    const Eigen::VectorXd gm = g(xm);
    if (!gp.allFinite() || !gm.allFinite())
      throw std::runtime_error("numerical_jacobian: non-finite function value");
    if (jac.size() == 0) jac.resize(gp.size(), x.size());
    jac.col(j) = (gp - gm) / (2.0 * h);
  }
  return jac;
}

}  // namespace robmiss
