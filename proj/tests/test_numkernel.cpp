#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"

#include "medsens/error.hpp"
#include "medsens/numkernel.hpp"
#include "support.hpp"

using namespace medsens;
using testsupport::binorm_quadrature;
using testsupport::binorm_sheppard;
using testsupport::cdf_ref;

TEST_CASE("norm_cdf values") {
  CHECK(norm_cdf(0.0) == 0.5);
  CHECK(norm_cdf(8.0) >= 1.0 - 1e-14);
  CHECK(norm_cdf(1.0) == doctest::Approx(0.841344746068543).epsilon(1e-14));
  for (double z = -37.0; z <= 8.0; z += 0.173) {
    const double ref = cdf_ref(z);
    CHECK(std::abs(norm_cdf(z) - ref) <= 1e-15 + 1e-14 * ref);
  }
}

TEST_CASE("norm_cdf is monotone and symmetric") {
  double prev = 0.0;
  for (double z = -10.0; z <= 10.0; z += 0.01) {
    const double v = norm_cdf(z);
    CHECK(v >= prev);
    prev = v;
    CHECK(std::abs(norm_cdf(z) + norm_cdf(-z) - 1.0) <= 1e-14);
  }
}

TEST_CASE("norm_pdf values") {
  CHECK(norm_pdf(0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-15));
  CHECK(norm_pdf(1.0) == doctest::Approx(0.24197072451914337).epsilon(1e-15));
  for (double z = 0.1; z < 6; z += 0.37) CHECK(norm_pdf(z) == norm_pdf(-z));
}

TEST_CASE("non-finite inputs are domain errors") {
  const double inf = std::numeric_limits<double>::infinity();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(norm_cdf(nan), DomainError);
  CHECK_THROWS_AS(norm_cdf(inf), DomainError);
  CHECK_THROWS_AS(norm_pdf(nan), DomainError);
  CHECK_THROWS_AS(binorm_cdf(nan, 0.0, 0.1), DomainError);
  CHECK_THROWS_AS(binorm_cdf(0.0, -inf, 0.1), DomainError);
  CHECK_THROWS_AS(norm_quantile(0.0), DomainError);
  CHECK_THROWS_AS(norm_quantile(1.0), DomainError);
  CHECK_THROWS_AS(norm_quantile(-0.2), DomainError);
  CHECK_THROWS_AS(Correlation(1.2), DomainError);
}

TEST_CASE("norm_quantile") {
  CHECK(norm_quantile(0.5) == 0.0);
  CHECK(norm_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-13));
  for (double p : {1e-300, 1e-100, 1e-20, 1e-8, 0.001, 0.02425, 0.1, 0.3, 0.5, 0.7, 0.9, 0.97575, 0.999, 1 - 1e-12}) {
    CHECK(std::abs(norm_cdf(norm_quantile(p)) - p) <= 1e-12);
    if (p > 1e-16) CHECK(norm_quantile(p) == doctest::Approx(-norm_quantile(1.0 - p)).epsilon(1e-9));
  }
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double p = u(rng);
    if (p <= 0.0) continue;
    CHECK(std::abs(norm_cdf(norm_quantile(p)) - p) <= 1e-12);
  }
}

TEST_CASE("binorm_cdf spot values") {
  CHECK(binorm_cdf(0.0, 0.0, 0.0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(binorm_cdf(0.0, 0.0, 0.5) == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
  for (double r : {-0.99, -0.7, -0.2, 0.0, 0.4, 0.9, 0.999}) {
    const double closed = 0.25 + std::asin(r) / (2.0 * std::numbers::pi);
    CHECK(std::abs(binorm_cdf(0.0, 0.0, r) - closed) <= 1e-13);
  }
  for (double a : {-3.0, -0.5, 0.0, 1.2, 3.5}) {
    for (double r : {-0.999, -0.5, 0.0, 0.5, 0.999}) {
      CHECK(std::abs(binorm_cdf(a, 8.0, r) - norm_cdf(a)) <= 1e-12);
    }
  }
}

TEST_CASE("binorm_cdf against quadrature and Sheppard oracles") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ab(-4.0, 4.0), rr(-0.999, 0.999);
  double worst_quad = 0.0, worst_shep = 0.0;
  for (int i = 0; i < 150; ++i) {
    const double a = ab(rng), b = ab(rng), r = rr(rng);
    const double v = binorm_cdf(a, b, r);
    worst_quad = std::max(worst_quad, std::abs(v - binorm_quadrature(a, b, r)));
    worst_shep = std::max(worst_shep, std::abs(v - binorm_sheppard(a, b, r)));
  }
  CHECK(worst_quad <= 1e-12);
  CHECK(worst_shep <= 1e-12);
}

TEST_CASE("binorm_cdf structural properties") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ab(-5.0, 5.0), rr(-1.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double a = ab(rng), b = ab(rng), r = rr(rng);
    CHECK(binorm_cdf(a, b, r) == binorm_cdf(b, a, r));
    CHECK(std::abs(binorm_cdf(a, b, 0.0) - norm_cdf(a) * norm_cdf(b)) <= 1e-12);
  }
  for (int i = 0; i < 500; ++i) {
    double a1 = ab(rng), a2 = ab(rng), b1 = ab(rng), b2 = ab(rng);
    if (a1 > a2) std::swap(a1, a2);
    if (b1 > b2) std::swap(b1, b2);
    const double r = rr(rng);
    const double mass =
        binorm_cdf(a2, b2, r) - binorm_cdf(a1, b2, r) - binorm_cdf(a2, b1, r) + binorm_cdf(a1, b1, r);
    CHECK(mass >= -1e-12);
  }
  for (double a = -3.0; a <= 3.0; a += 0.75) {
    for (double b = -3.0; b <= 3.0; b += 0.75) {
      double prev = -1.0;
      for (double r = -1.0; r <= 1.0 + 1e-12; r += 0.01) {
        const double v = binorm_cdf(a, b, std::clamp(r, -1.0, 1.0));
        CHECK(v >= prev - 1e-15);
        prev = v;
      }
    }
  }
}

TEST_CASE("binorm_cdf limits at |rho| = 1") {
  for (double a : {-2.0, -0.3, 0.0, 0.8, 2.5}) {
    for (double b : {-1.5, 0.0, 0.4, 3.0}) {
      CHECK(binorm_cdf(a, b, 1.0) == doctest::Approx(norm_cdf(std::min(a, b))).epsilon(1e-15));
      CHECK(binorm_cdf(a, b, -1.0) ==
            doctest::Approx(std::max(0.0, norm_cdf(a) + norm_cdf(b) - 1.0)).epsilon(1e-15));
      // continuity into the limits
      CHECK(std::abs(binorm_cdf(a, b, 0.999999) - binorm_cdf(a, b, 1.0)) < 2e-3);
      CHECK(std::abs(binorm_cdf(a, b, -0.999999) - binorm_cdf(a, b, -1.0)) < 2e-3);
    }
  }
}

TEST_CASE("Correlation clamping") {
  Correlation c(0.9995);
  CHECK_FALSE(c.is_interior());
  CHECK(c.clamped().value() == kMaxInteriorCorrelation);
  CHECK(Correlation(-1.0).clamped().value() == -kMaxInteriorCorrelation);
  CHECK(Correlation(0.3).clamped().value() == 0.3);
}

TEST_CASE("binorm_pdf matches the density formula") {
  for (double r : {-0.8, 0.0, 0.45}) {
    CHECK(binorm_pdf(0.3, -1.1, r) == doctest::Approx(testsupport::binorm_density(0.3, -1.1, r)).epsilon(1e-14));
  }
}

TEST_CASE("finite_diff_grad") {
  Eigen::VectorXd x(1);
  x << 3.0;
  const Eigen::VectorXd g = finite_diff_grad([](const Eigen::VectorXd& v) { return v.dot(v); }, x, 1e-5);
  CHECK(g(0) == doctest::Approx(6.0).epsilon(1e-9));

  const Eigen::VectorXd pt = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
  const Eigen::VectorXd zero = finite_diff_grad([](const Eigen::VectorXd&) { return 4.2; }, pt);
  CHECK(zero.isZero(0.0));

  auto bad = [](const Eigen::VectorXd& v) { return v(2) > 0.5 ? std::nan("") : v.sum(); };
  Eigen::VectorXd q(4);
  q << 0.0, 0.0, 0.5, 0.0;
  try {
    finite_diff_grad(bad, q, 1e-3);
    FAIL("expected EvaluationError");
  } catch (const EvaluationError& e) {
    CHECK(e.component() == 2);
  }
}
