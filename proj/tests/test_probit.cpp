#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"

#include "medsens/error.hpp"
#include "medsens/numkernel.hpp"
#include "medsens/probit.hpp"
#include "medsens/simgen.hpp"
#include "support.hpp"

using namespace medsens;

namespace {

Design intercept_only(Eigen::Index n) { return Design{Eigen::MatrixXd::Ones(n, 1), {"(Intercept)"}}; }

/// n draws of r ~ probit(b0 + b1 x) with x ~ N(0, 1), plus the design.
std::pair<Design, Eigen::VectorXd> synthetic(Eigen::Index n, double b0, double b1, std::uint64_t seed) {
  Rng rng(seed);
  Design d{Eigen::MatrixXd(n, 2), {"(Intercept)", "x"}};
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = rng.normal();
    d.matrix(i, 0) = 1.0;
    d.matrix(i, 1) = x;
    r(i) = b0 + b1 * x + rng.normal() > 0.0 ? 1.0 : 0.0;
  }
  return {d, r};
}

Eigen::VectorXd probit_score(const Eigen::VectorXd& b, const Eigen::MatrixXd& X, const Eigen::VectorXd& r) {
  return finite_diff_grad([&](const Eigen::VectorXd& v) { return probit_loglik(v, X, r); }, b, 1e-6);
}

}  // namespace

TEST_CASE("probit_loglik simple values") {
  const Eigen::VectorXd r = (Eigen::VectorXd(6) << 1, 0, 1, 1, 0, 1).finished();
  CHECK(probit_loglik(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Ones(6, 1), r) ==
        doctest::Approx(6.0 * std::log(0.5)).epsilon(1e-15));
  CHECK(probit_loglik(Eigen::VectorXd::Constant(1, 0.4), Eigen::MatrixXd::Ones(6, 1), r) >
        probit_loglik(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Ones(6, 1), r));
  CHECK_THROWS_AS(probit_loglik(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Ones(6, 1), r), ContractError);
  // extreme predictors stay finite thanks to the floor
  CHECK(std::isfinite(probit_loglik(Eigen::VectorXd::Constant(1, -60.0), Eigen::MatrixXd::Ones(6, 1), r)));
}

TEST_CASE("intercept-only fit reproduces the sample mean") {
  Eigen::VectorXd r(400);
  for (Eigen::Index i = 0; i < 400; ++i) r(i) = i % 4 == 0 ? 0.0 : 1.0;
  const ProbitFit f = fit_probit(intercept_only(400), r);
  CHECK(f.converged);
  CHECK(f.coefficients(0) == doctest::Approx(norm_quantile(0.75)).epsilon(1e-9));
  CHECK(f.coefficients(0) == doctest::Approx(0.6745).epsilon(1e-4));
  CHECK(std::abs(norm_cdf(f.coefficients(0)) - 0.75) <= 1e-8);
  // observed information for the intercept-only model
  const double t = f.coefficients(0);
  const double lam1 = testsupport::phi_ref(t) / norm_cdf(t), lam0 = testsupport::phi_ref(t) / norm_cdf(-t);
  const double info = 300.0 * lam1 * (t + lam1) + 100.0 * lam0 * (lam0 - t);
  CHECK(f.covariance(0, 0) == doctest::Approx(1.0 / info).epsilon(1e-6));
}

TEST_CASE("separation is reported") {
  Eigen::VectorXd r = Eigen::VectorXd::Ones(30);
  CHECK_THROWS_AS(fit_probit(intercept_only(30), r), SeparationError);

  Design d{Eigen::MatrixXd(40, 2), {"(Intercept)", "z"}};
  Eigen::VectorXd y(40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    d.matrix(i, 0) = 1.0;
    d.matrix(i, 1) = i % 2;
    y(i) = i % 2;
  }
  bool flagged = false;
  try {
    flagged = !fit_probit(d, y).converged;
  } catch (const SeparationError&) {
    flagged = true;
  }
  CHECK(flagged);
}

TEST_CASE("recovery of known coefficients") {
  const auto [d, r] = synthetic(5000, -0.5, 0.8, 42);
  const ProbitFit f = fit_probit(d, r);
  REQUIRE(f.converged);
  const Eigen::VectorXd se = f.std_errors();
  CHECK(std::abs(f.coefficients(0) + 0.5) < 3.0 * se(0));
  CHECK(std::abs(f.coefficients(1) - 0.8) < 3.0 * se(1));
  CHECK(f.iterations < 15);
}

TEST_CASE("optimum properties") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const auto [d, r] = synthetic(1500, 0.3 * static_cast<double>(seed) - 1.0, 0.5, seed);
    const ProbitFit f = fit_probit(d, r);
    REQUIRE(f.converged);
    CHECK(f.gradient_norm < 1e-6);
    CHECK(probit_score(f.coefficients, d.matrix, r).cwiseAbs().maxCoeff() < 1e-4);
    CHECK((f.covariance - f.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f.covariance);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    CHECK(f.loglik == doctest::Approx(probit_loglik(f.coefficients, d.matrix, r)).epsilon(1e-14));
    // local maximum
    for (int k = 0; k < 2; ++k) {
      Eigen::VectorXd b = f.coefficients;
      b(k) += 1e-3;
      CHECK(probit_loglik(b, d.matrix, r) < f.loglik);
      b(k) -= 2e-3;
      CHECK(probit_loglik(b, d.matrix, r) < f.loglik);
    }
  }
}

TEST_CASE("row permutation leaves the fit unchanged") {
  const auto tp = testsupport::two_covariate_params(ModelSpec::full());
  const Dataset ds = simulate(tp, 2000, 77);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(ds.n()));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(8);
  std::shuffle(perm.begin(), perm.end(), rng);
  const Dataset shuffled = ds.subset(perm);
  const ModelSpec spec = ModelSpec::full();
  const ProbitFit a = fit_probit(build_outcome_design(ds, spec), ds.y());
  const ProbitFit b = fit_probit(build_outcome_design(shuffled, spec), shuffled.y());
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK((a.coefficients - b.coefficients).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(a.terms == b.terms);
}

TEST_CASE("start values do not change the optimum") {
  const auto [d, r] = synthetic(2000, 0.2, -0.7, 99);
  const ProbitFit a = fit_probit(d, r);
  const ProbitFit b = fit_probit(d, r, {}, Eigen::Vector2d(1.0, 1.0));
  CHECK((a.coefficients - b.coefficients).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("iteration cap yields a non-converged fit") {
  const auto [d, r] = synthetic(2000, 0.2, -0.7, 99);
  NewtonOptions opt;
  opt.max_iterations = 1;
  const ProbitFit f = fit_probit(d, r, opt);
  CHECK_FALSE(f.converged);
  CHECK(f.iterations == 1);
}

TEST_CASE("inverse_mills") {
  for (double t : {-10.0, -3.0, 0.0, 2.0, 9.0}) {
    const double direct = testsupport::phi_ref(t) / testsupport::cdf_ref(t);
    CHECK(inverse_mills(t) == doctest::Approx(direct).epsilon(1e-12));
  }
  // asymptotic series -t - 1/t + 2/t^3 - 10/t^5 for large negative t
  for (double t : {-40.0, -200.0}) {
    CHECK(inverse_mills(t) == doctest::Approx(-t - 1.0 / t + 2.0 / std::pow(t, 3) - 10.0 / std::pow(t, 5)).epsilon(1e-9));
  }
  CHECK(std::isfinite(inverse_mills(-1e4)));
  CHECK(inverse_mills(-1e4) == doctest::Approx(1e4).epsilon(1e-6));
}

TEST_CASE("repeated recovery stays within three standard errors") {
  // coverage-style property over many small replications
  int inside = 0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    const auto [d, r] = synthetic(1000, -0.5, 0.8, replication_seed(314, static_cast<std::uint64_t>(rep)));
    const ProbitFit f = fit_probit(d, r);
    REQUIRE(f.converged);
    const Eigen::VectorXd se = f.std_errors();
    if (std::abs(f.coefficients(1) - 0.8) < 3.0 * se(1)) ++inside;
  }
  // 3-SE coverage is about 99.7%
  CHECK(inside >= reps - 5);
}
