#include "medsens/sensitivity.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "medsens/error.hpp"

namespace medsens {

namespace {

double round12(double v) { return std::round(v * 1e12) / 1e12; }

std::string rho_text(double rho) {
  std::ostringstream os;
  os << rho;
  return os.str();
}

Eigen::VectorXd baseline_start(ConfoundingKind kind, const ScanInputs& in) {
  const Eigen::VectorXd* a = nullptr;
  const Eigen::VectorXd* b = nullptr;
  switch (kind) {
    case ConfoundingKind::ExposureMediator:
      a = &in.exposure.coefficients;
      b = &in.mediator.coefficients;
      break;
    case ConfoundingKind::MediatorOutcome:
      a = &in.mediator.coefficients;
      b = &in.outcome.coefficients;
      break;
    case ConfoundingKind::ExposureOutcome:
      a = &in.exposure.coefficients;
      b = &in.outcome.coefficients;
      break;
  }
  Eigen::VectorXd start(a->size() + b->size());
  start << *a, *b;
  return start;
}

Eigen::VectorXd stacked(const ConstrainedFit& fit) {
  Eigen::VectorXd out(fit.coefficients_a.size() + fit.coefficients_b.size());
  out << fit.coefficients_a, fit.coefficients_b;
  return out;
}

GridFit fit_point(ConfoundingKind kind, double rho, const ScanInputs& in, const Eigen::VectorXd& start) {
  GridFit out;
  out.rho = rho;
  try {
    ConstrainedOptions opts = in.options.constrained;
    opts.start = start;
    ConstrainedFit fit = fit_constrained(kind, rho, in.data, in.spec, opts);
    out.converged = fit.converged;
    if (!fit.converged) {
      out.failure = "no convergence after " + std::to_string(fit.iterations) + " iterations (score norm " +
                    rho_text(fit.gradient_norm) + ")";
    }
    out.fit = std::move(fit);
  } catch (const Error& e) {
    out.failure = e.what();
  }
  return out;
}

// Fits indices in `order`, each warm-started from the last converged optimum.
void fit_chain(ConfoundingKind kind, const RhoGrid& grid, const ScanInputs& in, const std::vector<std::size_t>& order,
               std::vector<GridFit>& out) {
  const Eigen::VectorXd base = baseline_start(kind, in);
  Eigen::VectorXd start = base;
  for (std::size_t idx : order) {
    out[idx] = fit_point(kind, grid.points()[idx], in, in.options.cold_start ? base : start);
    if (out[idx].converged) start = stacked(*out[idx].fit);
  }
}

ScanPoint evaluate_point(const GridFit& gf, ConfoundingKind kind, EffectType type, const EffectScope& scope,
                         double alpha, const ScanInputs& in) {
  ScanPoint pt;
  pt.rho = gf.rho;
  pt.failure = gf.failure;
  if (!gf.converged || !gf.fit) return pt;
  try {
    const FitContext ctx = fit_context_for(kind, *gf.fit, in);
    pt.estimate = effect_with_ci(type, scope, ctx, in.data.x(), alpha);
    pt.converged = true;
    pt.coefficients = stacked(*gf.fit);
  } catch (const Error& e) {
    pt.failure = e.what();
  }
  return pt;
}

std::string percent(double alpha) {
  std::ostringstream os;
  os << (1.0 - alpha) * 100.0 << "%";
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// RhoGrid

RhoGrid RhoGrid::make(double lower, double upper, double step) {
  if (!std::isfinite(lower) || !std::isfinite(upper) || !(step > 0.0)) {
    throw ConfigError("rho grid: bounds must be finite and step positive");
  }
  if (lower > upper) throw ConfigError("rho grid: lower bound exceeds upper bound");
  if (lower < -1.0 || upper > 1.0) throw ConfigError("rho grid: bounds must lie in [-1, 1]");
  std::vector<double> pts;
  const auto count = static_cast<long>(std::floor((upper - lower) / step + 1e-9));
  for (long k = 0; k <= count; ++k) pts.push_back(round12(lower + static_cast<double>(k) * step));
  if (pts.back() < upper - 1e-12) pts.push_back(upper);
  RhoGrid grid = from_points(std::move(pts));
  grid.lower_ = lower;
  grid.upper_ = upper;
  grid.step_ = step;
  return grid;
}

RhoGrid RhoGrid::from_points(std::vector<double> pts) {
  if (pts.empty()) throw ConfigError("rho grid has no points");
  RhoGrid grid;
  for (double v : pts) {
    if (!(std::abs(v) <= 1.0)) throw ConfigError("rho grid point outside [-1, 1]");
  }
  const auto [lo, hi] = std::minmax_element(pts.begin(), pts.end());
  grid.lower_ = *lo;
  grid.upper_ = *hi;
  if (grid.lower_ <= 0.0 && grid.upper_ >= 0.0) pts.push_back(0.0);
  for (double& v : pts) {
    if (std::abs(v) > kMaxInteriorCorrelation) {
      const double c = std::copysign(kMaxInteriorCorrelation, v);
      grid.warnings_.push_back("grid point " + rho_text(v) + " clamped to " + rho_text(c));
      v = c;
    } else if (std::abs(v) > 0.95) {
      grid.warnings_.push_back("grid point " + rho_text(v) + " is beyond +/-0.95; fits there are numerically delicate");
    }
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }),
            pts.end());
  grid.points_ = std::move(pts);
  return grid;
}

RhoGrid RhoGrid::parse(std::string_view text) {
  double vals[3];
  std::size_t pos = 0;
  for (int k = 0; k < 3; ++k) {
    const std::size_t end = k < 2 ? text.find(':', pos) : text.size();
    if (end == std::string_view::npos) throw ConfigError("rho grid must be LO:HI:STEP, got '" + std::string(text) + "'");
    std::string_view part = text.substr(pos, end - pos);
    if (!part.empty() && part.front() == '+') part.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), vals[k]);
    if (ec != std::errc() || ptr != part.data() + part.size()) {
      throw ConfigError("rho grid must be LO:HI:STEP, got '" + std::string(text) + "'");
    }
    pos = end + 1;
  }
  return make(vals[0], vals[1], vals[2]);
}

RhoGrid RhoGrid::standard() { return make(-0.95, 0.95, 0.01); }

std::size_t RhoGrid::center_index() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < points_.size(); ++i) {
    if (std::abs(points_[i]) < std::abs(points_[best])) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Fitting

std::shared_ptr<const ScanInputs> prepare_scan_inputs(const Dataset& ds, const ModelSpec& spec,
                                                      const ScanOptions& options) {
  spec.validate();
  ds.validate_for_fitting();
  const NewtonOptions& newton = options.constrained.newton;
  NewtonOptions univariate = newton;
  univariate.max_iterations = std::min(newton.max_iterations, 100);
  auto in = std::make_shared<ScanInputs>(ScanInputs{
      ds, spec, fit_probit(build_exposure_design(ds, spec), ds.z(), univariate),
      fit_probit(build_mediator_design(ds, spec), ds.m(), univariate),
      fit_probit(build_outcome_design(ds, spec), ds.y(), univariate), options});
  return in;
}

ScanFits fit_scan_grid(ConfoundingKind kind, const RhoGrid& grid, std::shared_ptr<const ScanInputs> inputs) {
  if (!inputs) throw ContractError("fit_scan_grid: missing inputs");
  ScanFits out;
  out.kind = kind;
  out.grid = grid;
  out.inputs = inputs;
  const auto& pts = grid.points();
  out.points.resize(pts.size());

  const std::size_t center = grid.center_index();
  std::vector<std::size_t> up, down;
  for (std::size_t i = center; i < pts.size(); ++i) up.push_back(i);
  for (std::size_t i = center; i-- > 0;) down.push_back(i);

  const bool threaded = inputs->options.parallel && inputs->options.max_threads >= 2 && !down.empty();
  if (threaded) {
    std::thread worker([&] { fit_chain(kind, grid, *inputs, down, out.points); });
    fit_chain(kind, grid, *inputs, up, out.points);
    worker.join();
  } else {
    fit_chain(kind, grid, *inputs, up, out.points);
    fit_chain(kind, grid, *inputs, down, out.points);
  }

  const auto failed = static_cast<std::size_t>(
      std::count_if(out.points.begin(), out.points.end(), [](const GridFit& g) { return !g.converged; }));
  if (2 * failed > pts.size()) {
    std::ostringstream msg;
    msg << to_string(kind) << " scan: " << failed << " of " << pts.size() << " grid points failed";
    for (const auto& g : out.points) {
      if (!g.converged) msg << "\n  rho = " << g.rho << ": " << g.failure;
    }
    throw ScanError(msg.str());
  }
  return out;
}

FitContext baseline_context(const ScanInputs& in) {
  FitContext ctx;
  ctx.spec = in.spec;
  ctx.beta = in.mediator.coefficients;
  ctx.sigma_beta = in.mediator.covariance;
  ctx.beta_converged = in.mediator.converged;
  ctx.theta = in.outcome.coefficients;
  ctx.sigma_theta = in.outcome.covariance;
  ctx.theta_converged = in.outcome.converged;
  return ctx;
}

FitContext fit_context_for(ConfoundingKind kind, const ConstrainedFit& fit, const ScanInputs& in) {
  FitContext ctx = baseline_context(in);
  ctx.rho_context = RhoContext{kind, fit.rho.value()};
  const std::string source = std::string(to_string(kind)) + " constrained fit at rho = " + rho_text(fit.rho.value());
  switch (kind) {
    case ConfoundingKind::ExposureMediator:
      ctx.beta = fit.coefficients_b;
      ctx.sigma_beta = fit.covariance_b;
      ctx.beta_converged = fit.converged;
      ctx.beta_source = source;
      break;
    case ConfoundingKind::MediatorOutcome:
      ctx.beta = fit.coefficients_a;
      ctx.sigma_beta = fit.covariance_a;
      ctx.theta = fit.coefficients_b;
      ctx.sigma_theta = fit.covariance_b;
      ctx.beta_converged = ctx.theta_converged = fit.converged;
      ctx.beta_source = ctx.theta_source = source;
      if (in.options.joint_covariance) ctx.sigma_joint = fit.covariance_full;
      break;
    case ConfoundingKind::ExposureOutcome:
      ctx.theta = fit.coefficients_b;
      ctx.sigma_theta = fit.covariance_b;
      ctx.theta_converged = fit.converged;
      ctx.theta_source = source;
      break;
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Scans

std::vector<const ScanPoint*> SensitivityScan::failures() const {
  std::vector<const ScanPoint*> out;
  for (const auto& pt : per_point) {
    if (!pt.converged) out.push_back(&pt);
  }
  return out;
}

SensitivityScan evaluate_scan(const ScanFits& fits, EffectType effect_type, const EffectScope& scope, double alpha) {
  SensitivityScan scan;
  scan.kind = fits.kind;
  scan.effect_type = effect_type;
  scan.scope = scope;
  scan.grid = fits.grid;
  scan.alpha = alpha;
  scan.inputs = fits.inputs;
  scan.warnings = fits.grid.warnings();
  for (const auto& gf : fits.points) {
    scan.per_point.push_back(evaluate_point(gf, fits.kind, effect_type, scope, alpha, *fits.inputs));
  }
  return scan;
}

SensitivityScan run_scan(ConfoundingKind kind, EffectType effect_type, const EffectScope& scope, const RhoGrid& grid,
                         const Dataset& ds, const ModelSpec& spec, double alpha, const ScanOptions& options) {
  return evaluate_scan(fit_scan_grid(kind, grid, prepare_scan_inputs(ds, spec, options)), effect_type, scope,
                       alpha);
}

IntervalResult identification_set(const SensitivityScan& scan) {
  IntervalResult out{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                     IntervalResult::Kind::IdentificationSet};
  bool any = false;
  for (const auto& pt : scan.per_point) {
    if (!pt.converged || !pt.estimate) continue;
    any = true;
    out.lower = std::min(out.lower, pt.estimate->estimate);
    out.upper = std::max(out.upper, pt.estimate->estimate);
  }
  if (!any) throw ScanError("identification set: scan has no converged points");
  return out;
}

IntervalResult uncertainty_interval(const SensitivityScan& scan) {
  IntervalResult out{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                     IntervalResult::Kind::UncertaintyInterval};
  bool any = false;
  for (const auto& pt : scan.per_point) {
    if (!pt.converged || !pt.estimate) continue;
    any = true;
    out.lower = std::min(out.lower, pt.estimate->ci_lower);
    out.upper = std::max(out.upper, pt.estimate->ci_upper);
  }
  if (!any) throw ScanError("uncertainty interval: scan has no converged points");
  return out;
}

// ---------------------------------------------------------------------------
// Sign classification

std::string_view to_string(SignClass c) {
  switch (c) {
    case SignClass::SignificantSameSign: return "significant_same_sign";
    case SignClass::NotSignificant: return "not_significant";
    case SignClass::Reversed: return "reversed";
  }
  return "?";
}

SignClass classify(const EffectEstimate& est, int reference_sign) {
  const bool excludes_zero = est.ci_lower > 0.0 || est.ci_upper < 0.0;
  if (!excludes_zero) return SignClass::NotSignificant;
  const int sign = est.ci_lower > 0.0 ? 1 : -1;
  const int ref = reference_sign == 0 ? 1 : reference_sign;
  return sign == ref ? SignClass::SignificantSameSign : SignClass::Reversed;
}

namespace {

struct Reference {
  int sign = 0;
  double rho = 0.0;
  std::vector<std::string> warnings;
};

Reference reference_of(const SensitivityScan& scan) {
  const ScanPoint* best = nullptr;
  for (const auto& pt : scan.per_point) {
    if (!pt.converged || !pt.estimate) continue;
    if (!best || std::abs(pt.rho) < std::abs(best->rho)) best = &pt;
  }
  if (!best) throw ScanError("sign ranges: scan has no converged points");
  Reference ref;
  ref.rho = best->rho;
  const double est = best->estimate->estimate;
  ref.sign = est > 0.0 ? 1 : (est < 0.0 ? -1 : 0);
  if (ref.sign == 0) {
    ref.warnings.push_back("reference estimate is exactly zero; significant points are classified against a "
                           "positive reference direction");
  }
  if (ref.rho != 0.0) {
    ref.warnings.push_back("no converged point at rho = 0; reference taken at rho = " + rho_text(ref.rho));
  }
  return ref;
}

}  // namespace

SignRanges sign_ranges(const SensitivityScan& scan) {
  const Reference ref = reference_of(scan);
  SignRanges out;
  out.reference_sign = ref.sign;
  out.reference_rho = ref.rho;
  out.warnings = ref.warnings;
  for (const auto& pt : scan.per_point) {
    if (!pt.converged || !pt.estimate) continue;
    const SignClass c = classify(*pt.estimate, ref.sign);
    if (!out.ranges.empty() && out.ranges.back().classification == c) {
      out.ranges.back().rho_upper = pt.rho;
    } else {
      out.ranges.push_back({pt.rho, pt.rho, c});
    }
  }
  return out;
}

std::string describe(const SignRange& range, double alpha) {
  std::ostringstream os;
  switch (range.classification) {
    case SignClass::SignificantSameSign: os << "0 not in " << percent(alpha) << " UI (same direction)"; break;
    case SignClass::NotSignificant: os << "0 in " << percent(alpha) << " UI"; break;
    case SignClass::Reversed: os << "0 not in " << percent(alpha) << " UI (reversed)"; break;
  }
  os << " for rho in [" << range.rho_lower << ", " << range.rho_upper << "]";
  return os.str();
}

namespace {

struct Probe {
  bool ok = false;
  SignClass cls = SignClass::NotSignificant;
  Eigen::VectorXd coefficients;
  std::string failure;
};

Probe probe(const SensitivityScan& scan, double rho, const Eigen::VectorXd& start, int reference_sign) {
  const ScanInputs& in = *scan.inputs;
  const GridFit gf = fit_point(scan.kind, rho, in, start);
  const ScanPoint pt = evaluate_point(gf, scan.kind, scan.effect_type, scan.scope, scan.alpha, in);
  Probe out;
  out.ok = pt.converged;
  out.failure = pt.failure;
  if (out.ok) {
    out.cls = classify(*pt.estimate, reference_sign);
    out.coefficients = pt.coefficients;
  }
  return out;
}

void bisect(const SensitivityScan& scan, int reference_sign, double resolution, double lo, SignClass lo_cls,
            Eigen::VectorXd lo_coef, double hi, SignClass hi_cls, std::vector<BoundaryBracket>& out) {
  while (hi - lo > resolution) {
    const double mid = 0.5 * (lo + hi);
    const Probe p = probe(scan, mid, lo_coef, reference_sign);
    if (!p.ok) {
      out.push_back({lo, hi, lo_cls, hi_cls, false, "bisection stopped at rho = " + rho_text(mid) + ": " + p.failure});
      return;
    }
    if (p.cls == lo_cls) {
      lo = mid;
      lo_coef = p.coefficients;
    } else if (p.cls == hi_cls) {
      hi = mid;
    } else {
      // A third class between the endpoints: two changes to locate.
      bisect(scan, reference_sign, resolution, lo, lo_cls, lo_coef, mid, p.cls, out);
      bisect(scan, reference_sign, resolution, mid, p.cls, p.coefficients, hi, hi_cls, out);
      return;
    }
  }
  out.push_back({lo, hi, lo_cls, hi_cls, true, {}});
}

}  // namespace

std::vector<BoundaryBracket> refine_boundary(const SensitivityScan& scan, double resolution) {
  if (!(resolution > 0.0)) throw DomainError("refine_boundary: resolution must be positive");
  if (!scan.inputs) throw ContractError("refine_boundary: scan carries no inputs");
  const SignRanges ranges = sign_ranges(scan);

  std::vector<const ScanPoint*> converged;
  for (const auto& pt : scan.per_point) {
    if (pt.converged && pt.estimate) converged.push_back(&pt);
  }
  std::vector<BoundaryBracket> out;
  for (std::size_t i = 0; i + 1 < converged.size(); ++i) {
    const ScanPoint& a = *converged[i];
    const ScanPoint& b = *converged[i + 1];
    const SignClass ca = classify(*a.estimate, ranges.reference_sign);
    const SignClass cb = classify(*b.estimate, ranges.reference_sign);
    if (ca == cb) continue;
    bisect(scan, ranges.reference_sign, resolution, a.rho, ca, a.coefficients, b.rho, cb, out);
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.lower < y.lower; });
  return out;
}

}  // namespace medsens
