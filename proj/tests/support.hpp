#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "medsens/datamodel.hpp"
#include "medsens/effects.hpp"
#include "medsens/simgen.hpp"

namespace testsupport {

using medsens::CovariateGenerator;
using medsens::ModelSpec;
using medsens::TrueParams;

inline double phi_ref(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double cdf_ref(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double binorm_density(double x, double y, double r) {
  const double s2 = 1.0 - r * r;
  return std::exp(-(x * x - 2.0 * r * x * y + y * y) / (2.0 * s2)) / (2.0 * std::numbers::pi * std::sqrt(s2));
}

/// Phi2(a, b; rho) by nested adaptive Gauss-Kronrod quadrature of the density.
/// Integration limits are cut at 9 standard deviations (tail mass below 1e-18).
inline double binorm_quadrature(double a, double b, double rho) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  constexpr double cut = 9.0;
  const double sd = std::sqrt(1.0 - rho * rho);
  auto inner = [&](double x) {
    const double lo = rho * x - cut * sd;
    if (b <= lo) return 0.0;
    const double hi = std::min(b, rho * x + cut * sd);
    return GK::integrate([&](double y) { return binorm_density(x, y, rho); }, lo, hi, 10, 1e-13);
  };
  const double x_hi = std::min(a, cut);
  if (x_hi <= -cut) return 0.0;
  return GK::integrate(inner, -cut, x_hi, 10, 1e-13);
}

/// Phi2 via Sheppard's identity Phi(a)Phi(b) + integral_0^rho phi2(a, b; r) dr.
inline double binorm_sheppard(double a, double b, double rho) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double base = cdf_ref(a) * cdf_ref(b);
  if (rho == 0.0) return base;
  return base + GK::integrate([&](double r) { return binorm_density(a, b, r); }, 0.0, rho, 12, 1e-13);
}

/// Two covariates: a Bernoulli(0.5) indicator and a standard normal.
inline TrueParams two_covariate_params(const ModelSpec& spec = ModelSpec::main_effects()) {
  TrueParams tp;
  tp.spec = spec;
  tp.covariates = {CovariateGenerator::bernoulli("male", 0.5), CovariateGenerator::normal("age")};
  tp.alpha = Eigen::Vector3d(-0.5, 0.1, 0.2);
  const medsens::MediatorBlocks mb{-1.0, 0.6, Eigen::Vector2d(0.1, 0.2), Eigen::Vector2d(0.1, -0.1)};
  medsens::OutcomeBlocks ob;
  ob.t0 = -0.8;
  ob.t1 = 0.3;
  ob.t2 = 0.8;
  ob.t3 = 0.2;
  ob.t4 = Eigen::Vector2d(0.1, 0.3);
  ob.t5 = Eigen::Vector2d(0.05, -0.1);
  ob.t6 = Eigen::Vector2d(-0.1, 0.1);
  ob.t7 = Eigen::Vector2d(0.1, 0.05);
  tp.beta = medsens::compress_mediator(mb, spec);
  tp.theta = medsens::compress_outcome(ob, spec);
  return tp;
}

/// Random coefficient vectors in the layouts of `spec` with p covariates.
struct RandomCoefficients {
  Eigen::VectorXd beta, theta;
  medsens::CovariateProfile profile;
};

inline RandomCoefficients random_coefficients(std::mt19937_64& rng, const ModelSpec& spec, Eigen::Index p,
                                              double scale = 0.8) {
  std::normal_distribution<double> nd(0.0, scale);
  RandomCoefficients rc;
  rc.beta.resize(spec.mediator_size(p));
  rc.theta.resize(spec.outcome_size(p));
  for (auto& v : rc.beta) v = nd(rng);
  for (auto& v : rc.theta) v = nd(rng);
  rc.profile.x.resize(p);
  for (auto& v : rc.profile.x) v = nd(rng);
  return rc;
}

/// Linear predictors for one covariate pattern, obtained from the design
/// builders on a one-row dataset with the given (z, m).
inline double mediator_predictor(const Eigen::VectorXd& beta, const ModelSpec& spec, const Eigen::VectorXd& x,
                                 double z) {
  const Eigen::Index p = x.size();
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
  medsens::Dataset ds(Eigen::VectorXd::Constant(1, z), Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1),
                      x.transpose(), names);
  return medsens::build_mediator_design(ds, spec).matrix.row(0).dot(beta);
}

inline double outcome_predictor(const Eigen::VectorXd& theta, const ModelSpec& spec, const Eigen::VectorXd& x,
                                double z, double m) {
  const Eigen::Index p = x.size();
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
  medsens::Dataset ds(Eigen::VectorXd::Constant(1, z), Eigen::VectorXd::Constant(1, m), Eigen::VectorXd::Zero(1),
                      x.transpose(), names);
  return medsens::build_outcome_design(ds, spec).matrix.row(0).dot(theta);
}

/// E[Y(z, M(z'))] at x by summing over the two mediator states.
inline double mean_potential_outcome(const Eigen::VectorXd& theta, const Eigen::VectorXd& beta, const ModelSpec& spec,
                                     const Eigen::VectorXd& x, double z, double z_mediator) {
  const double pm = cdf_ref(mediator_predictor(beta, spec, x, z_mediator));
  return cdf_ref(outcome_predictor(theta, spec, x, z, 1.0)) * pm +
         cdf_ref(outcome_predictor(theta, spec, x, z, 0.0)) * (1.0 - pm);
}

/// Effect at x from the mediation formula: contrasts of E[Y(z, M(z'))].
inline double effect_by_enumeration(medsens::EffectType type, const Eigen::VectorXd& theta,
                                    const Eigen::VectorXd& beta, const ModelSpec& spec, const Eigen::VectorXd& x) {
  auto mu = [&](double z, double zm) { return mean_potential_outcome(theta, beta, spec, x, z, zm); };
  switch (type) {
    case medsens::EffectType::NDE: return mu(1, 0) - mu(0, 0);
    case medsens::EffectType::NIE: return mu(1, 1) - mu(1, 0);
    case medsens::EffectType::NDE_total: return mu(1, 1) - mu(0, 1);
    case medsens::EffectType::NIE_pure: return mu(0, 1) - mu(0, 0);
    case medsens::EffectType::TE: return mu(1, 1) - mu(0, 0);
  }
  return 0.0;
}

/// Monte-Carlo potential-outcome effects from latent draws of the generating
/// model (valid when the mediator and outcome errors are independent).
struct LatentEffects {
  double nde, nie, nde_total, nie_pure;
  double nde_se, nie_se;
};

inline LatentEffects latent_draw_effects(const TrueParams& tp, std::size_t draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud;
  const Eigen::Index p = tp.p();
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
  double s_nde = 0, s_nie = 0, s_ndet = 0, s_niep = 0, q_nde = 0, q_nie = 0;

  constexpr Eigen::Index chunk = 20000;
  for (std::size_t done = 0; done < draws;) {
    const Eigen::Index k = static_cast<Eigen::Index>(std::min<std::size_t>(chunk, draws - done));
    Eigen::MatrixXd x(k, p);
    Eigen::VectorXd eta(k), xi(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) {
        const auto& g = tp.covariates[static_cast<std::size_t>(j)];
        switch (g.kind) {
          case CovariateGenerator::Kind::Constant: x(i, j) = g.a; break;
          case CovariateGenerator::Kind::Uniform: x(i, j) = g.a + (g.b - g.a) * ud(rng); break;
          case CovariateGenerator::Kind::Normal: x(i, j) = g.a + g.b * nd(rng); break;
          case CovariateGenerator::Kind::Bernoulli: x(i, j) = ud(rng) < g.a ? 1.0 : 0.0; break;
        }
      }
      eta(i) = nd(rng);
      xi(i) = nd(rng);
    }
    auto data = [&](double z, double m) {
      return medsens::Dataset(Eigen::VectorXd::Constant(k, z), Eigen::VectorXd::Constant(k, m),
                              Eigen::VectorXd::Zero(k), x, names);
    };
    auto med = [&](double z) { return Eigen::VectorXd(medsens::build_mediator_design(data(z, 0), tp.spec).matrix * tp.beta); };
    auto out = [&](double z, double m) {
      return Eigen::VectorXd(medsens::build_outcome_design(data(z, m), tp.spec).matrix * tp.theta);
    };
    const Eigen::VectorXd b0 = med(0), b1 = med(1);
    const Eigen::VectorXd t00 = out(0, 0), t01 = out(0, 1), t10 = out(1, 0), t11 = out(1, 1);
    for (Eigen::Index i = 0; i < k; ++i) {
      const bool m0 = b0(i) + eta(i) > 0.0, m1 = b1(i) + eta(i) > 0.0;
      auto Y = [&](int z, bool m) {
        const double lp = z == 1 ? (m ? t11(i) : t10(i)) : (m ? t01(i) : t00(i));
        return lp + xi(i) > 0.0 ? 1.0 : 0.0;
      };
      const double nde = Y(1, m0) - Y(0, m0);
      const double nie = Y(1, m1) - Y(1, m0);
      s_nde += nde;
      s_nie += nie;
      q_nde += nde * nde;
      q_nie += nie * nie;
      s_ndet += Y(1, m1) - Y(0, m1);
      s_niep += Y(0, m1) - Y(0, m0);
    }
    done += static_cast<std::size_t>(k);
  }
  const double n = static_cast<double>(draws);
  LatentEffects res{s_nde / n, s_nie / n, s_ndet / n, s_niep / n, 0, 0};
  res.nde_se = std::sqrt((q_nde / n - res.nde * res.nde) / n);
  res.nie_se = std::sqrt((q_nie / n - res.nie * res.nie) / n);
  return res;
}

}  // namespace testsupport
