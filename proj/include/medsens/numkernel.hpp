#pragma once

#include <functional>

#include <Eigen/Dense>

namespace medsens {

/// Largest |rho| used inside the constrained likelihoods. Requests beyond this
/// are clamped (with a warning recorded by the caller).
inline constexpr double kMaxInteriorCorrelation = 0.999;

/// A correlation coefficient, |value| <= 1.
class Correlation {
 public:
  constexpr Correlation() = default;
  explicit Correlation(double value);

  double value() const noexcept { return value_; }

  /// Copy with |value| limited to `bound`.
  Correlation clamped(double bound = kMaxInteriorCorrelation) const noexcept;
  bool is_interior(double bound = kMaxInteriorCorrelation) const noexcept;

  friend bool operator==(Correlation, Correlation) = default;

 private:
  double value_ = 0.0;
};

double norm_cdf(double z);
double norm_pdf(double z);

/// ln Phi(z) with the probability floored at 1e-300.
double log_norm_cdf(double z);

/// Inverse of norm_cdf on (0, 1).
double norm_quantile(double p);

/// P(U <= a, V <= b) for a standard bivariate normal pair with correlation rho.
///
/// Uses Genz's refinement of the Drezner-Wesolowsky Gauss-Legendre scheme:
/// a 6/12/20 point rule on the arcsine form for |rho| < 0.925 and an
/// asymptotic expansion around the singular limit otherwise. |rho| = 1 is
/// handled by its closed form. Arguments are ordered internally so the result
/// is exactly symmetric in (a, b).
double binorm_cdf(double a, double b, Correlation rho);
double binorm_cdf(double a, double b, double rho);

/// Standard bivariate normal density, |rho| < 1.
double binorm_pdf(double a, double b, double rho);

using ScalarFunction = std::function<double(const Eigen::VectorXd&)>;

/// Central-difference gradient. Throws EvaluationError carrying the component
/// index when f is non-finite at a probe.
Eigen::VectorXd finite_diff_grad(const ScalarFunction& f, const Eigen::VectorXd& point,
                                 double step = 1e-5);

}  // namespace medsens
