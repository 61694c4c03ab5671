#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medsens/biprobit.hpp"
#include "medsens/effects.hpp"

namespace medsens {

/// Ordered, unique correlation values spanning [lower, upper]. Zero is
/// inserted when the interval contains it; values beyond +/-0.999 are clamped.
class RhoGrid {
 public:
  static RhoGrid make(double lower, double upper, double step);
  static RhoGrid from_points(std::vector<double> points);
  /// Parses "LO:HI:STEP".
  static RhoGrid parse(std::string_view text);
  /// [-0.95, 0.95] in steps of 0.01.
  static RhoGrid standard();

  double lower() const noexcept { return lower_; }
  double upper() const noexcept { return upper_; }
  double step() const noexcept { return step_; }
  const std::vector<double>& points() const noexcept { return points_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  /// Index of the point closest to zero.
  std::size_t center_index() const;

 private:
  double lower_ = 0.0, upper_ = 0.0, step_ = 0.0;
  std::vector<double> points_;
  std::vector<std::string> warnings_;
};

struct ScanOptions {
  /// Two outward-chained halves run concurrently instead of sequentially.
  bool parallel = false;
  int max_threads = 2;
  /// Use the full joint inverse information of the constrained fit (only
  /// meaningful for mediator-outcome confounding, where both coefficient sets
  /// come from the same fit).
  bool joint_covariance = false;
  /// Refit each grid point from the unconstrained solution instead of chaining.
  bool cold_start = false;
  ConstrainedOptions constrained;
};

/// Unconstrained baseline fits plus the data they were computed from.
struct ScanInputs {
  Dataset data;
  ModelSpec spec;
  ProbitFit exposure, mediator, outcome;
  ScanOptions options;
};

/// Fits the three univariate probit models used as baselines and warm starts.
std::shared_ptr<const ScanInputs> prepare_scan_inputs(const Dataset& ds, const ModelSpec& spec,
                                                      const ScanOptions& options = {});

struct GridFit {
  double rho = 0.0;
  bool converged = false;
  std::optional<ConstrainedFit> fit;
  std::string failure;
};

/// Constrained fits over a grid for one confounding kind.
struct ScanFits {
  ConfoundingKind kind = ConfoundingKind::ExposureMediator;
  RhoGrid grid;
  std::vector<GridFit> points;
  std::shared_ptr<const ScanInputs> inputs;
};

/// Fits every grid point, chaining warm starts outward from the point nearest
/// zero. Throws ScanError when more than half of the points fail.
ScanFits fit_scan_grid(ConfoundingKind kind, const RhoGrid& grid, std::shared_ptr<const ScanInputs> inputs);

/// Coefficient/covariance set for an effect under a constrained fit: the
/// exposure-mediator kind pairs the constrained mediator model with the
/// unconstrained outcome model, the exposure-outcome kind the reverse, and
/// the mediator-outcome kind uses both constrained models.
FitContext fit_context_for(ConfoundingKind kind, const ConstrainedFit& fit, const ScanInputs& inputs);

/// Unconstrained (rho = 0, separate fits) context.
FitContext baseline_context(const ScanInputs& inputs);

struct ScanPoint {
  double rho = 0.0;
  bool converged = false;
  std::optional<EffectEstimate> estimate;
  std::string failure;
  Eigen::VectorXd coefficients;  // stacked (a, b) optimum; empty when not converged
};

struct SensitivityScan {
  ConfoundingKind kind = ConfoundingKind::ExposureMediator;
  EffectType effect_type = EffectType::NDE;
  EffectScope scope = EffectScope::marginal();
  RhoGrid grid;
  double alpha = 0.05;
  std::vector<ScanPoint> per_point;
  std::vector<std::string> warnings;
  std::shared_ptr<const ScanInputs> inputs;

  std::vector<const ScanPoint*> failures() const;
};

SensitivityScan evaluate_scan(const ScanFits& fits, EffectType effect_type, const EffectScope& scope,
                              double alpha);

SensitivityScan run_scan(ConfoundingKind kind, EffectType effect_type, const EffectScope& scope,
                         const RhoGrid& grid, const Dataset& ds, const ModelSpec& spec, double alpha,
                         const ScanOptions& options = {});

struct IntervalResult {
  enum class Kind { IdentificationSet, UncertaintyInterval };
  double lower = 0.0;
  double upper = 0.0;
  Kind kind = Kind::IdentificationSet;

  bool contains(double v) const noexcept { return lower <= v && v <= upper; }
};

/// [min, max] of the converged point estimates.
IntervalResult identification_set(const SensitivityScan& scan);
/// [min lower CI bound, max upper CI bound] over converged points.
IntervalResult uncertainty_interval(const SensitivityScan& scan);

enum class SignClass { SignificantSameSign, NotSignificant, Reversed };
std::string_view to_string(SignClass c);

struct SignRange {
  double rho_lower = 0.0;
  double rho_upper = 0.0;
  SignClass classification = SignClass::NotSignificant;
};

struct SignRanges {
  int reference_sign = 0;  // sign of the estimate at the point nearest rho = 0
  double reference_rho = 0.0;
  std::vector<SignRange> ranges;
  std::vector<std::string> warnings;
};

SignClass classify(const EffectEstimate& est, int reference_sign);
SignRanges sign_ranges(const SensitivityScan& scan);

/// Human-readable range statement, e.g. "0 in 95% UI for rho in [0.05, 0.31]".
std::string describe(const SignRange& range, double alpha);

struct BoundaryBracket {
  double lower = 0.0;  // last rho with `below` classification
  double upper = 0.0;  // first rho with `above` classification
  SignClass below = SignClass::NotSignificant;
  SignClass above = SignClass::NotSignificant;
  bool refined = true;  // false when bisection hit a non-converged fit
  std::string warning;

  double midpoint() const noexcept { return 0.5 * (lower + upper); }
  double width() const noexcept { return upper - lower; }
};

/// Bisects between adjacent differently-classified grid points, refitting at
/// midpoints, until each classification change is bracketed within
/// `resolution`. Brackets are sorted ascending.
std::vector<BoundaryBracket> refine_boundary(const SensitivityScan& scan, double resolution = 0.01);

}  // namespace medsens
