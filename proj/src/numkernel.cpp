#include "medsens/numkernel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "medsens/error.hpp"

namespace medsens {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
constexpr double kSqrt1_2 = 0.707106781186547524400844362105;
constexpr double kProbabilityFloor = 1e-300;

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw DomainError(std::string(what) + ": argument is not finite");
  }
}

// Gauss-Legendre abscissae (negative half) and weights for 6, 12 and 20 points.
struct LegendreRule {
  int half;
  std::array<double, 10> x;
  std::array<double, 10> w;
};

constexpr LegendreRule kRule6{3,
                              {-0.9324695142031522, -0.6612093864662647, -0.2386191860831970},
                              {0.1713244923791705, 0.3607615730481384, 0.4679139345726904}};

constexpr LegendreRule kRule12{
    6,
    {-0.9815606342467191, -0.9041172563704750, -0.7699026741943050, -0.5873179542866171,
     -0.3678314989981802, -0.1252334085114692},
    {0.04717533638651177, 0.1069393259953183, 0.1600783285433464, 0.2031674267230659,
     0.2334925365383547, 0.2491470458134029}};

constexpr LegendreRule kRule20{
    10,
    {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259, -0.8391169718222188,
     -0.7463319064601508, -0.6360536807265150, -0.5108670019508271, -0.3737060887154196,
     -0.2277858511416451, -0.07652652113349733},
    {0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
     0.1019301198172404, 0.1181945319615184, 0.1316886384491766, 0.1420961093183821,
     0.1491729864726037, 0.1527533871307259}};

double phi_unchecked(double z) { return 0.5 * std::erfc(-z * kSqrt1_2); }

// P(X > h, Y > k), |r| < 1.
double upper_bvn(double h, double k, double r) {
  const double abs_r = std::abs(r);
  const LegendreRule& rule = abs_r < 0.3 ? kRule6 : (abs_r < 0.75 ? kRule12 : kRule20);
  double hk = h * k;
  double bvn = 0.0;

  if (abs_r < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r);
    for (int i = 0; i < rule.half; ++i) {
      double sn = std::sin(asr * (rule.x[i] + 1.0) / 2.0);
      bvn += rule.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      sn = std::sin(asr * (-rule.x[i] + 1.0) / 2.0);
      bvn += rule.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    return bvn * asr / (2.0 * kTwoPi) + phi_unchecked(-h) * phi_unchecked(-k);
  }

  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  const double as = (1.0 - r) * (1.0 + r);
  double a = std::sqrt(as);
  const double bs = (h - k) * (h - k);
  const double c = (4.0 - hk) / 8.0;
  const double d = (12.0 - hk) / 16.0;
  bvn = a * std::exp(-(bs / as + hk) / 2.0) *
        (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
  if (hk > -160.0) {
    const double b = std::sqrt(bs);
    bvn -= std::exp(-hk / 2.0) * std::sqrt(kTwoPi) * phi_unchecked(-b / a) * b *
           (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
  }
  a /= 2.0;
  for (int i = 0; i < rule.half; ++i) {
    double xs = a * (rule.x[i] + 1.0);
    xs *= xs;
    double rs = std::sqrt(1.0 - xs);
    bvn += a * rule.w[i] *
           (std::exp(-bs / (2.0 * xs) - hk / (1.0 + rs)) / rs -
            std::exp(-(bs / xs + hk) / 2.0) * (1.0 + c * xs * (1.0 + d * xs)));
    xs = as * (-rule.x[i] + 1.0) * (-rule.x[i] + 1.0) / 4.0;
    rs = std::sqrt(1.0 - xs);
    bvn += a * rule.w[i] * std::exp(-(bs / xs + hk) / 2.0) *
           (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs - (1.0 + c * xs * (1.0 + d * xs)));
  }
  bvn = -bvn / kTwoPi;

  if (r > 0.0) return bvn + phi_unchecked(-std::max(h, k));
  return -bvn + std::max(0.0, phi_unchecked(-h) - phi_unchecked(-k));
}

// Acklam's rational approximation to the normal quantile; refined afterwards.
double acklam_quantile(double p) {
  static constexpr std::array<double, 6> a{-3.969683028665376e+01, 2.209460984245205e+02,
                                           -2.759285104469687e+02, 1.383577518672690e+02,
                                           -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b{-5.447609879822406e+01, 1.615858368580409e+02,
                                           -1.556989798598866e+02, 6.680131188771972e+01,
                                           -1.328068155288572e+01};
  static constexpr std::array<double, 6> c{-7.784894002430293e-03, -3.223964580411365e-01,
                                           -2.400758277161838e+00, -2.549732539343734e+00,
                                           4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array<double, 4> d{7.784695709041462e-03, 3.224671290700398e-01,
                                           2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

Correlation::Correlation(double value) : value_(value) {
  if (!(std::abs(value) <= 1.0)) {
    throw DomainError("correlation must lie in [-1, 1], got " + std::to_string(value));
  }
}

Correlation Correlation::clamped(double bound) const noexcept {
  Correlation out;
  out.value_ = std::clamp(value_, -bound, bound);
  return out;
}

bool Correlation::is_interior(double bound) const noexcept { return std::abs(value_) <= bound; }

double norm_cdf(double z) {
  require_finite(z, "norm_cdf");
  return phi_unchecked(z);
}

double norm_pdf(double z) {
  require_finite(z, "norm_pdf");
  return kInvSqrt2Pi * std::exp(-0.5 * z * z);
}

double log_norm_cdf(double z) {
  require_finite(z, "log_norm_cdf");
  // Upper tail through the complement so nearly certain outcomes keep a
  // nonzero (and still improving) contribution.
  if (z > 0.0) return std::log1p(-phi_unchecked(-z));
  return std::log(std::max(phi_unchecked(z), kProbabilityFloor));
}

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("norm_quantile: probability must lie in (0, 1)");
  }
  // Work in the lower tail; 1 - p is exact for p > 0.5.
  if (p > 0.5) return -norm_quantile(1.0 - p);
  if (p == 0.5) return 0.0;

  double x = acklam_quantile(p);
  // Halley refinement.
  for (int iter = 0; iter < 2; ++iter) {
    const double e = phi_unchecked(x) - p;
    const double u = e * std::sqrt(kTwoPi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

double binorm_cdf(double a, double b, Correlation rho) { return binorm_cdf(a, b, rho.value()); }

double binorm_cdf(double a, double b, double rho) {
  require_finite(a, "binorm_cdf");
  require_finite(b, "binorm_cdf");
  if (!(std::abs(rho) <= 1.0)) throw DomainError("binorm_cdf: correlation outside [-1, 1]");
  if (a > b) std::swap(a, b);

  if (rho == 1.0) return phi_unchecked(a);
  if (rho == -1.0) return std::max(0.0, phi_unchecked(a) - phi_unchecked(-b));

  const double value = upper_bvn(-a, -b, rho);
  return std::clamp(value, 0.0, phi_unchecked(a));
}

double binorm_pdf(double a, double b, double rho) {
  const double one_minus = (1.0 - rho) * (1.0 + rho);
  const double q = (a * a - 2.0 * rho * a * b + b * b) / one_minus;
  return std::exp(-0.5 * q) / (kTwoPi * std::sqrt(one_minus));
}

Eigen::VectorXd finite_diff_grad(const ScalarFunction& f, const Eigen::VectorXd& point, double step) {
  if (!(step > 0.0)) throw DomainError("finite_diff_grad: step must be positive");
  Eigen::VectorXd grad(point.size());
  Eigen::VectorXd probe = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double up = f(probe);
    probe[i] = point[i] - step;
    const double down = f(probe);
    probe[i] = point[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw EvaluationError("finite_diff_grad: non-finite value at component " + std::to_string(i),
                            static_cast<std::size_t>(i));
    }
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace medsens
