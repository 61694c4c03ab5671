#include "medsens/effects.hpp"

#include <cmath>

#include "medsens/error.hpp"
#include "medsens/numkernel.hpp"

namespace medsens {

namespace {

using Eigen::VectorXd;

// Linear predictors of the outcome at (z, m) and of the mediator at z.
struct Predictors {
  double a00, a10, a01, a11;
  double b0, b1;
};

Predictors predictors(const OutcomeBlocks& t, const MediatorBlocks& b, const Eigen::Ref<const VectorXd>& x) {
  const double t4x = t.t4.dot(x);
  const double t5x = t.t5.dot(x);
  const double t6x = t.t6.dot(x);
  const double t7x = t.t7.dot(x);
  const double b2x = b.b2.dot(x);
  const double b3x = b.b3.dot(x);
  return {t.t0 + t4x,
          t.t0 + t.t1 + t4x + t5x,
          t.t0 + t.t2 + t4x + t6x,
          t.t0 + t.t1 + t.t2 + t.t3 + t4x + t5x + t6x + t7x,
          b.b0 + b2x,
          b.b0 + b.b1 + b2x + b3x};
}

struct Expanded {
  OutcomeBlocks theta;
  MediatorBlocks beta;
};

Expanded expand(const VectorXd& theta, const VectorXd& beta, const ModelSpec& spec, Eigen::Index p) {
  return {expand_outcome(theta, spec, p), expand_mediator(beta, spec, p)};
}

double evaluate(EffectType type, const Predictors& lp) {
  const double C0 = norm_cdf(lp.b0);
  const double C1 = norm_cdf(lp.b1);
  const double P00 = norm_cdf(lp.a00);
  const double P10 = norm_cdf(lp.a10);
  const double P01 = norm_cdf(lp.a01);
  const double P11 = norm_cdf(lp.a11);
  const double A = P10 - P00;
  const double B = P11 - P01;
  switch (type) {
    case EffectType::NDE: return A * (1.0 - C0) + B * C0;
    case EffectType::NIE: return (P11 - P10) * (C1 - C0);
    case EffectType::NDE_total: return A * (1.0 - C1) + B * C1;
    case EffectType::NIE_pure: return (P01 - P00) * (C1 - C0);
    case EffectType::TE: return evaluate(EffectType::NDE, lp) + evaluate(EffectType::NIE, lp);
  }
  throw ContractError("unknown effect type");
}

// Full-layout gradient where every covariate block is a scalar multiple of x.
struct FullGradient {
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0;
  double t0 = 0, t1 = 0, t2 = 0, t3 = 0, t4 = 0, t5 = 0, t6 = 0, t7 = 0;
};

FullGradient nde_gradient(const Predictors& lp) {
  const double C = norm_cdf(lp.b0);
  const double A = norm_cdf(lp.a10) - norm_cdf(lp.a00);
  const double B = norm_cdf(lp.a11) - norm_cdf(lp.a01);
  const double D = norm_pdf(lp.a11);
  const double phi_b0 = norm_pdf(lp.b0);
  const double phi10 = norm_pdf(lp.a10);
  const double phi00 = norm_pdf(lp.a00);
  const double phi01 = norm_pdf(lp.a01);

  FullGradient g;
  g.b0 = A * (-phi_b0) + B * phi_b0;  // d1; d3 = d1 x
  g.b1 = 0.0;                          // d2
  g.b2 = g.b0;
  g.b3 = 0.0;  // d4
  g.t0 = (phi10 - phi00) * (1.0 - C) + (D - phi01) * C;  // d5
  g.t1 = phi10 * (1.0 - C) + D * C;                      // d6
  g.t2 = (D - phi01) * C;                                // d7
  g.t3 = D * C;                                          // d8
  g.t4 = g.t0;                                           // d9 .. d12 scale x
  g.t5 = g.t1;
  g.t6 = g.t2;
  g.t7 = g.t3;
  return g;
}

FullGradient nie_gradient(const Predictors& lp) {
  const double F = norm_cdf(lp.a11) - norm_cdf(lp.a10);
  const double G = norm_cdf(lp.b1) - norm_cdf(lp.b0);
  const double D = norm_pdf(lp.a11);
  const double phi_b1 = norm_pdf(lp.b1);
  const double phi_b0 = norm_pdf(lp.b0);

  FullGradient g;
  g.b0 = F * (phi_b1 - phi_b0);  // g1
  g.b1 = F * phi_b1;             // g2
  g.b2 = g.b0;                   // g3 = g1 x
  g.b3 = g.b1;                   // g4 = g2 x
  g.t0 = (D - norm_pdf(lp.a10)) * G;  // g5
  g.t1 = g.t0;                        // g6 = g5
  g.t2 = D * G;                       // g7
  g.t3 = g.t2;                        // g8 = g7
  g.t4 = g.t0;
  g.t5 = g.t0;
  g.t6 = g.t2;
  g.t7 = g.t2;
  return g;
}

FullGradient nde_total_gradient(const Predictors& lp) {
  const double C1 = norm_cdf(lp.b1);
  const double A = norm_cdf(lp.a10) - norm_cdf(lp.a00);
  const double B = norm_cdf(lp.a11) - norm_cdf(lp.a01);
  const double D = norm_pdf(lp.a11);
  const double phi_b1 = norm_pdf(lp.b1);
  const double phi10 = norm_pdf(lp.a10);
  const double phi00 = norm_pdf(lp.a00);
  const double phi01 = norm_pdf(lp.a01);

  FullGradient g;
  g.b0 = (B - A) * phi_b1;
  g.b1 = g.b0;
  g.b2 = g.b0;
  g.b3 = g.b0;
  g.t0 = (phi10 - phi00) * (1.0 - C1) + (D - phi01) * C1;
  g.t1 = phi10 * (1.0 - C1) + D * C1;
  g.t2 = (D - phi01) * C1;
  g.t3 = D * C1;
  g.t4 = g.t0;
  g.t5 = g.t1;
  g.t6 = g.t2;
  g.t7 = g.t3;
  return g;
}

FullGradient nie_pure_gradient(const Predictors& lp) {
  const double E = norm_cdf(lp.a01) - norm_cdf(lp.a00);
  const double G = norm_cdf(lp.b1) - norm_cdf(lp.b0);
  const double phi_b1 = norm_pdf(lp.b1);
  const double phi_b0 = norm_pdf(lp.b0);
  const double phi01 = norm_pdf(lp.a01);

  FullGradient g;
  g.b0 = E * (phi_b1 - phi_b0);
  g.b1 = E * phi_b1;
  g.b2 = g.b0;
  g.b3 = g.b1;
  g.t0 = (phi01 - norm_pdf(lp.a00)) * G;
  g.t2 = phi01 * G;
  g.t4 = g.t0;
  g.t6 = g.t2;
  return g;
}

FullGradient full_gradient(EffectType type, const Predictors& lp) {
  switch (type) {
    case EffectType::NDE: return nde_gradient(lp);
    case EffectType::NIE: return nie_gradient(lp);
    case EffectType::NDE_total: return nde_total_gradient(lp);
    case EffectType::NIE_pure: return nie_pure_gradient(lp);
    case EffectType::TE: {
      const FullGradient a = nde_gradient(lp);
      const FullGradient b = nie_gradient(lp);
      return {a.b0 + b.b0, a.b1 + b.b1, a.b2 + b.b2, a.b3 + b.b3, a.t0 + b.t0, a.t1 + b.t1,
              a.t2 + b.t2, a.t3 + b.t3, a.t4 + b.t4, a.t5 + b.t5, a.t6 + b.t6, a.t7 + b.t7};
    }
  }
  throw ContractError("unknown effect type");
}

// Accumulates weight * gradient(x) into full-layout blocks.
void accumulate(const FullGradient& g, const Eigen::Ref<const VectorXd>& x, double weight, MediatorBlocks& gb,
                OutcomeBlocks& gt) {
  gb.b0 += weight * g.b0;
  gb.b1 += weight * g.b1;
  gb.b2 += (weight * g.b2) * x;
  gb.b3 += (weight * g.b3) * x;
  gt.t0 += weight * g.t0;
  gt.t1 += weight * g.t1;
  gt.t2 += weight * g.t2;
  gt.t3 += weight * g.t3;
  gt.t4 += (weight * g.t4) * x;
  gt.t5 += (weight * g.t5) * x;
  gt.t6 += (weight * g.t6) * x;
  gt.t7 += (weight * g.t7) * x;
}

GradientVector averaged_gradient(EffectType type, const VectorXd& theta, const VectorXd& beta,
                                 const Eigen::MatrixXd& rows, const ModelSpec& spec) {
  const Eigen::Index p = rows.cols();
  const Expanded e = expand(theta, beta, spec, p);
  MediatorBlocks gb{0.0, 0.0, VectorXd::Zero(p), VectorXd::Zero(p)};
  OutcomeBlocks gt{0.0, 0.0, 0.0, 0.0, VectorXd::Zero(p), VectorXd::Zero(p), VectorXd::Zero(p), VectorXd::Zero(p)};
  const double weight = 1.0 / static_cast<double>(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const VectorXd x = rows.row(i).transpose();
    accumulate(full_gradient(type, predictors(e.theta, e.beta, x)), x, weight, gb, gt);
  }
  return {compress_mediator(gb, spec), compress_outcome(gt, spec)};
}

Eigen::MatrixXd profile_row(const CovariateProfile& profile) {
  if (!profile.x.allFinite()) throw DomainError("covariate profile contains non-finite values");
  return profile.x.transpose();
}

}  // namespace

std::string_view to_string(EffectType type) {
  switch (type) {
    case EffectType::NDE: return "NDE";
    case EffectType::NIE: return "NIE";
    case EffectType::TE: return "TE";
    case EffectType::NDE_total: return "NDE*";
    case EffectType::NIE_pure: return "NIE*";
  }
  return "?";
}

EffectType parse_effect_type(std::string_view text) {
  if (text == "NDE") return EffectType::NDE;
  if (text == "NIE") return EffectType::NIE;
  if (text == "TE") return EffectType::TE;
  if (text == "NDE*" || text == "NDE_total") return EffectType::NDE_total;
  if (text == "NIE*" || text == "NIE_pure") return EffectType::NIE_pure;
  throw ConfigError("unknown effect type '" + std::string(text) + "' (expected NDE, NIE, TE, NDE*, NIE*)");
}

double effect_conditional(EffectType type, const VectorXd& theta, const VectorXd& beta,
                          const CovariateProfile& profile, const ModelSpec& spec) {
  const Eigen::MatrixXd row = profile_row(profile);
  const Expanded e = expand(theta, beta, spec, row.cols());
  return evaluate(type, predictors(e.theta, e.beta, profile.x));
}

double nde_conditional(const VectorXd& theta, const VectorXd& beta, const CovariateProfile& profile,
                       const ModelSpec& spec) {
  return effect_conditional(EffectType::NDE, theta, beta, profile, spec);
}

double nie_conditional(const VectorXd& theta, const VectorXd& beta, const CovariateProfile& profile,
                       const ModelSpec& spec) {
  return effect_conditional(EffectType::NIE, theta, beta, profile, spec);
}

double nde_total_conditional(const VectorXd& theta, const VectorXd& beta, const CovariateProfile& profile,
                             const ModelSpec& spec) {
  return effect_conditional(EffectType::NDE_total, theta, beta, profile, spec);
}

double nie_pure_conditional(const VectorXd& theta, const VectorXd& beta, const CovariateProfile& profile,
                            const ModelSpec& spec) {
  return effect_conditional(EffectType::NIE_pure, theta, beta, profile, spec);
}

double total_effect_conditional(const VectorXd& theta, const VectorXd& beta, const CovariateProfile& profile,
                                const ModelSpec& spec) {
  return nde_conditional(theta, beta, profile, spec) + nie_conditional(theta, beta, profile, spec);
}

double effect_marginal(EffectType type, const VectorXd& theta, const VectorXd& beta,
                       const Eigen::MatrixXd& covariates, const ModelSpec& spec) {
  if (covariates.rows() == 0) throw ContractError("marginal effect needs at least one covariate row");
  const Expanded e = expand(theta, beta, spec, covariates.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < covariates.rows(); ++i) {
    sum += evaluate(type, predictors(e.theta, e.beta, covariates.row(i).transpose()));
  }
  return sum / static_cast<double>(covariates.rows());
}

double effect_marginal(EffectType type, const VectorXd& theta, const VectorXd& beta, const Dataset& ds,
                       const ModelSpec& spec) {
  return effect_marginal(type, theta, beta, ds.x(), spec);
}

GradientVector grad_effect_conditional(EffectType type, const VectorXd& theta, const VectorXd& beta,
                                       const CovariateProfile& profile, const ModelSpec& spec) {
  return averaged_gradient(type, theta, beta, profile_row(profile), spec);
}

GradientVector grad_nde_conditional(const VectorXd& theta, const VectorXd& beta, const CovariateProfile& profile,
                                    const ModelSpec& spec) {
  return grad_effect_conditional(EffectType::NDE, theta, beta, profile, spec);
}

GradientVector grad_nie_conditional(const VectorXd& theta, const VectorXd& beta, const CovariateProfile& profile,
                                    const ModelSpec& spec) {
  return grad_effect_conditional(EffectType::NIE, theta, beta, profile, spec);
}

GradientVector grad_nde_total_conditional(const VectorXd& theta, const VectorXd& beta,
                                          const CovariateProfile& profile, const ModelSpec& spec) {
  return grad_effect_conditional(EffectType::NDE_total, theta, beta, profile, spec);
}

GradientVector grad_nie_pure_conditional(const VectorXd& theta, const VectorXd& beta,
                                         const CovariateProfile& profile, const ModelSpec& spec) {
  return grad_effect_conditional(EffectType::NIE_pure, theta, beta, profile, spec);
}

GradientVector grad_effect_marginal(EffectType type, const VectorXd& theta, const VectorXd& beta,
                                    const Eigen::MatrixXd& covariates, const ModelSpec& spec) {
  if (covariates.rows() == 0) throw ContractError("marginal gradient needs at least one covariate row");
  return averaged_gradient(type, theta, beta, covariates, spec);
}

GradientVector grad_effect_marginal(EffectType type, const VectorXd& theta, const VectorXd& beta,
                                    const Dataset& ds, const ModelSpec& spec) {
  return grad_effect_marginal(type, theta, beta, ds.x(), spec);
}

namespace {

double checked_sqrt(double quad) {
  if (!std::isfinite(quad)) throw NumericalError("delta method: non-finite variance");
  if (quad < -1e-12) throw NumericalError("delta method: negative variance " + std::to_string(quad));
  return std::sqrt(std::max(quad, 0.0));
}

}  // namespace

double delta_se(const GradientVector& grad, const Eigen::MatrixXd& sigma_beta, const Eigen::MatrixXd& sigma_theta) {
  if (sigma_beta.rows() != grad.wrt_beta.size() || sigma_beta.cols() != grad.wrt_beta.size() ||
      sigma_theta.rows() != grad.wrt_theta.size() || sigma_theta.cols() != grad.wrt_theta.size()) {
    throw ContractError("delta_se: covariance dimensions do not match the gradient");
  }
  const double quad = grad.wrt_beta.dot(sigma_beta * grad.wrt_beta) + grad.wrt_theta.dot(sigma_theta * grad.wrt_theta);
  return checked_sqrt(quad);
}

double delta_se(const GradientVector& grad, const Eigen::MatrixXd& sigma_joint) {
  const Eigen::Index kb = grad.wrt_beta.size();
  const Eigen::Index kt = grad.wrt_theta.size();
  if (sigma_joint.rows() != kb + kt || sigma_joint.cols() != kb + kt) {
    throw ContractError("delta_se: joint covariance dimensions do not match the gradient");
  }
  VectorXd g(kb + kt);
  g << grad.wrt_beta, grad.wrt_theta;
  return checked_sqrt(g.dot(sigma_joint * g));
}

EffectScope EffectScope::conditional(CovariateProfile profile) {
  EffectScope s;
  s.marginal_ = false;
  s.profile_ = std::move(profile);
  return s;
}

EffectScope EffectScope::marginal() { return EffectScope{}; }

const CovariateProfile& EffectScope::profile() const {
  if (marginal_) throw ContractError("marginal scope has no covariate profile");
  return profile_;
}

std::string EffectScope::label() const {
  if (marginal_) return "marginal";
  return profile_.label.empty() ? std::string("profile") : profile_.label;
}

EffectEstimate effect_with_ci(EffectType type, const EffectScope& scope, const FitContext& fit,
                              const Eigen::MatrixXd& covariates, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  if (!fit.beta_converged) throw NotConvergedError("cannot report effects: " + fit.beta_source + " did not converge");
  if (!fit.theta_converged) {
    throw NotConvergedError("cannot report effects: " + fit.theta_source + " did not converge");
  }

  EffectEstimate out;
  out.effect_type = type;
  out.marginal = scope.is_marginal();
  out.scope_label = scope.label();
  out.alpha = alpha;
  out.rho_context = fit.rho_context;

  GradientVector grad;
  if (scope.is_marginal()) {
    out.estimate = effect_marginal(type, fit.theta, fit.beta, covariates, fit.spec);
    grad = grad_effect_marginal(type, fit.theta, fit.beta, covariates, fit.spec);
  } else {
    out.estimate = effect_conditional(type, fit.theta, fit.beta, scope.profile(), fit.spec);
    grad = grad_effect_conditional(type, fit.theta, fit.beta, scope.profile(), fit.spec);
  }
  out.std_error = fit.sigma_joint ? delta_se(grad, *fit.sigma_joint) : delta_se(grad, fit.sigma_beta, fit.sigma_theta);
  const double z = norm_quantile(1.0 - alpha / 2.0);
  out.ci_lower = out.estimate - z * out.std_error;
  out.ci_upper = out.estimate + z * out.std_error;
  return out;
}

}  // namespace medsens
