#include "robmiss/dgp.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "robmiss/format.hpp"
#include "robmiss/numerics.hpp"

namespace robmiss {

namespace {

enum StreamPurpose : std::uint64_t {
  kCovariates = 0,
  kMissingness = 1,
  kNoise = 2,
  kContamination = 3,
  kAuxiliaryDraws = 4,
};

RngStream stream_for(const ScenarioConfig& cfg, StreamPurpose purpose) {
  return RngStream(cfg.seed, cfg.replicate_index * 8 + purpose);
}

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

XiLevel parse_xi_level(const std::string& s) {
  if (s == "strong") return XiLevel::strong;
  if (s == "moderate") return XiLevel::moderate;
  if (s == "none" || s == "no") return XiLevel::none;
  throw std::invalid_argument("unknown xi level: " + s);
}

GammaLevel parse_gamma_level(const std::string& s) {
  if (s == "strong") return GammaLevel::strong;
  if (s == "moderate") return GammaLevel::moderate;
  throw std::invalid_argument("unknown gamma level: " + s);
}

Contamination parse_contamination(const std::string& s) {
  if (s == "clean") return Contamination::clean;
  if (s == "c_asym" || s == "casym") return Contamination::c_asym;
  if (s == "c_sym" || s == "csym") return Contamination::c_sym;
  if (s == "c_hidden" || s == "chidden") return Contamination::c_hidden;
  throw std::invalid_argument("unknown contamination scheme: " + s);
}

std::string to_string(XiLevel l) {
  switch (l) {
    case XiLevel::strong: return "strong";
    case XiLevel::moderate: return "moderate";
    case XiLevel::none: return "none";
  }
  return "?";
}

std::string to_string(GammaLevel l) {
  return l == GammaLevel::strong ? "strong" : "moderate";
}

std::string to_string(Contamination c) {
  switch (c) {
    case Contamination::clean: return "clean";
    case Contamination::c_asym: return "c_asym";
    case Contamination::c_sym: return "c_sym";
    case Contamination::c_hidden: return "c_hidden";
  }
  return "?";
}

Eigen::VectorXd outcome_coefficients(XiLevel level) {
  Eigen::VectorXd xi(7);
  xi << 0.0, -1.0, 1.0, -1.0, 0.0, 0.0, 0.0;
  switch (level) {
    case XiLevel::strong:
      xi[4] = -1.0; xi[5] = 1.0; xi[6] = 1.0;
      break;
    case XiLevel::moderate:
      xi[4] = -0.5; xi[5] = 0.5; xi[6] = 0.5;
      break;
    case XiLevel::none:
      break;
  }
  return xi;
}

Eigen::Vector4d missingness_coefficients(GammaLevel level) {
  if (level == GammaLevel::strong) return {0.0, 0.6, -0.6, 0.6};
  return {0.0, 0.3, -0.3, 0.3};
}

const Eigen::Matrix4d& covariate_covariance() {
  static const Eigen::Matrix4d sigma = [] {
    Eigen::Matrix4d s;
    s << 1.0, 0.5, -0.5, -0.5,
         0.5, 1.0, -0.5, -0.5,
        -0.5, -0.5, 1.0, 0.5,
        -0.5, -0.5, 0.5, 1.0;
    return s;
  }();
  return sigma;
}

Eigen::Vector4d covariate_mean(int x3) {
  return x3 ? Eigen::Vector4d{1.0, 1.0, -1.0, -1.0}
            : Eigen::Vector4d{-1.0, -1.0, 1.0, 1.0};
}

Dataset generate_replicate(const ScenarioConfig& cfg) {
  if (cfg.n <= 0) throw std::invalid_argument("n must be positive");
  if (cfg.contamination_rate < 0.0 || cfg.contamination_rate >= 0.5)
    throw std::invalid_argument("contamination rate must be in [0, 0.5)");

  static const MvNormal mvn(covariate_covariance());

  RngStream cov_rng = stream_for(cfg, kCovariates);
  RngStream miss_rng = stream_for(cfg, kMissingness);
  RngStream noise_rng = stream_for(cfg, kNoise);

  const Eigen::VectorXd xi = outcome_coefficients(cfg.xi_level);
  const Eigen::Vector4d gamma = missingness_coefficients(cfg.gamma_level);

  Dataset d;
  d.X.resize(cfg.n, 3);
  d.V.resize(cfg.n, 3);
  d.R.resize(cfg.n);
  d.z2.resize(cfg.n);
  d.contaminated.assign(cfg.n, 0);

  for (int i = 0; i < cfg.n; ++i) {
    const int x3 = cov_rng.bernoulli(0.2) ? 1 : 0;
    const int v3 = cov_rng.bernoulli(x3 ? 0.75 : 0.25) ? 1 : 0;
    // Draw order within the quadruple: (X1, V1, X2, V2).
    const Eigen::VectorXd q = mvn.sample(covariate_mean(x3), cov_rng);
    d.X(i, 0) = q[0];
    d.X(i, 1) = q[2];
    d.X(i, 2) = x3;
    d.V(i, 0) = q[1];
    d.V(i, 1) = q[3];
    d.V(i, 2) = v3;

    // The logistic model gives the probability of dropout (R = 0).
    const double p_miss =
        expit(gamma[0] + gamma[1] * d.X(i, 0) + gamma[2] * d.X(i, 1) + gamma[3] * x3);
    d.R[i] = miss_rng.uniform() < p_miss ? 0 : 1;

    d.z2[i] = xi[0] + xi[1] * d.X(i, 0) + xi[2] * d.X(i, 1) + xi[3] * x3 +
              xi[4] * d.V(i, 0) + xi[5] * d.V(i, 1) + xi[6] * v3 +
              noise_rng.normal();
  }

  if (cfg.contamination != Contamination::clean) {
    RngStream contam_rng = stream_for(cfg, kContamination);
    d = contaminate(d, cfg.contamination, cfg.contamination_rate,
                    cfg.hidden_scale_is_sd, contam_rng);
  }
  return d;
}

Dataset contaminate(const Dataset& d, Contamination scheme, double rate,
                    bool hidden_scale_is_sd, RngStream& rng) {
  if (scheme == Contamination::clean)
    throw std::invalid_argument("contaminate: scheme must not be clean");

  Dataset out = d;
  std::vector<int> observed;
  observed.reserve(d.n());
  for (int i = 0; i < d.n(); ++i)
    if (d.R[i] == 1) observed.push_back(i);

  // Nearest integer: matches the target fraction as closely as counts allow.
  const auto count =
      static_cast<std::size_t>(std::llround(rate * static_cast<double>(observed.size())));
  if (count == 0) {
    out.contamination_skipped = true;
    return out;
  }

  // Partial Fisher-Yates pick without replacement.
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t j = k + rng.uniform_below(observed.size() - k);
    std::swap(observed[k], observed[j]);
  }

  const double hidden_sd = hidden_scale_is_sd ? 0.4 : std::sqrt(0.4);
  for (std::size_t k = 0; k < count; ++k) {
    const int i = observed[k];
    double value = 0.0;
    switch (scheme) {
      case Contamination::c_asym:
        value = -20.0 + 8.0 * rng.uniform();
        break;
      case Contamination::c_sym: {
        const double u = -20.0 + 8.0 * rng.uniform();
        value = rng.bernoulli(0.5) ? u : -u;
        break;
      }
      case Contamination::c_hidden:
        value = -10.0 + hidden_sd * rng.normal();
        break;
      case Contamination::clean:
        break;
    }
    out.z2[i] = value;
    out.contaminated[i] = 1;
  }
  return out;
}

RngStream auxiliary_stream(const ScenarioConfig& cfg) {
  return stream_for(cfg, kAuxiliaryDraws);
}

std::pair<double, double> true_beta(const ScenarioConfig& cfg) {
  const Eigen::VectorXd xi = outcome_coefficients(cfg.xi_level);
  // Reordered coefficient vector matching the quadruple (X1, V1, X2, V2).
  Eigen::Vector4d xt{xi[1], xi[4], xi[2], xi[5]};
  const Eigen::Vector4d tau1 = covariate_mean(1);
  const Eigen::Vector4d tau0 = covariate_mean(0);
  const double xi13 = xi[3], xi16 = xi[6];

  const double mu = xi[0] + 0.2 * tau1.dot(xt) + 0.8 * tau0.dot(xt) +
                    0.2 * (xi13 + 0.5 * xi16) + 0.25 * xi16;

  // Law of total variance conditioning on X3; V3 | X3 has variance
  // 0.1875 in both strata and the quadruple covariance does not depend
  // on X3.
  const double gap = (tau1 - tau0).dot(xt) + xi13 + 0.5 * xi16;
  const double var = 0.16 * gap * gap + xt.dot(covariate_covariance() * xt) +
                     0.1875 * xi16 * xi16 + 1.0;
  return {mu, std::sqrt(var)};
}

void write_dataset_csv(const Dataset& d, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "x1,x2,x3,v1,v2,v3,r,z2,contaminated\n";
  for (int i = 0; i < d.n(); ++i) {
    os << format_double(d.X(i, 0)) << ',' << format_double(d.X(i, 1)) << ','
       << static_cast<int>(d.X(i, 2)) << ',' << format_double(d.V(i, 0)) << ','
       << format_double(d.V(i, 1)) << ',' << static_cast<int>(d.V(i, 2)) << ','
       << d.R[i] << ',';
    if (d.R[i] == 1) os << format_double(d.z2[i]);
    os << ',' << int(d.contaminated[i]) << '\n';
  }
}

}  // namespace robmiss
