#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "medsens/biprobit.hpp"
#include "medsens/datamodel.hpp"

namespace medsens {

enum class EffectType {
  NDE,        // natural (pure) direct effect
  NIE,        // natural (total) indirect effect
  TE,         // total effect
  NDE_total,  // total direct effect, NDE*
  NIE_pure,   // pure indirect effect, NIE*
};

std::string_view to_string(EffectType type);
/// Accepts "NDE", "NIE", "TE", "NDE*", "NIE*" and the enumerator names.
EffectType parse_effect_type(std::string_view text);

/// Partial derivatives of an effect with respect to the mediator (beta) and
/// outcome (theta) coefficient vectors, in the design-builder layouts.
struct GradientVector {
  Eigen::VectorXd wrt_beta;
  Eigen::VectorXd wrt_theta;
};

// Closed-form conditional effects at a covariate profile. `theta` and `beta`
// follow build_outcome_design / build_mediator_design under `spec`.
double nde_conditional(const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
                       const CovariateProfile& profile, const ModelSpec& spec);
double nie_conditional(const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
                       const CovariateProfile& profile, const ModelSpec& spec);
double nde_total_conditional(const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
                             const CovariateProfile& profile, const ModelSpec& spec);
double nie_pure_conditional(const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
                            const CovariateProfile& profile, const ModelSpec& spec);
double total_effect_conditional(const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
                                const CovariateProfile& profile, const ModelSpec& spec);

double effect_conditional(EffectType type, const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
                          const CovariateProfile& profile, const ModelSpec& spec);

/// Mean of the conditional effect over the rows of `covariates` (n x p).
double effect_marginal(EffectType type, const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
                       const Eigen::MatrixXd& covariates, const ModelSpec& spec);
double effect_marginal(EffectType type, const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
                       const Dataset& ds, const ModelSpec& spec);

/// Analytic gradient of the conditional NDE (the vector commonly written Lambda).
GradientVector grad_nde_conditional(const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
                                    const CovariateProfile& profile, const ModelSpec& spec);
/// Analytic gradient of the conditional NIE (Gamma).
GradientVector grad_nie_conditional(const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
                                    const CovariateProfile& profile, const ModelSpec& spec);
GradientVector grad_nde_total_conditional(const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
                                          const CovariateProfile& profile, const ModelSpec& spec);
GradientVector grad_nie_pure_conditional(const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
                                         const CovariateProfile& profile, const ModelSpec& spec);

GradientVector grad_effect_conditional(EffectType type, const Eigen::VectorXd& theta,
                                       const Eigen::VectorXd& beta, const CovariateProfile& profile,
                                       const ModelSpec& spec);

/// Row-average of the conditional gradients (H and K for NDE and NIE).
GradientVector grad_effect_marginal(EffectType type, const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
                                    const Eigen::MatrixXd& covariates, const ModelSpec& spec);
GradientVector grad_effect_marginal(EffectType type, const Eigen::VectorXd& theta, const Eigen::VectorXd& beta,
                                    const Dataset& ds, const ModelSpec& spec);

/// Delta-method standard error with block-diagonal covariance
/// sqrt(g_b' S_b g_b + g_t' S_t g_t).
double delta_se(const GradientVector& grad, const Eigen::MatrixXd& sigma_beta, const Eigen::MatrixXd& sigma_theta);

/// Same with a joint covariance over the stacked (beta, theta) vector.
double delta_se(const GradientVector& grad, const Eigen::MatrixXd& sigma_joint);

/// Conditional-at-profile or marginal (sample-averaged) evaluation.
class EffectScope {
 public:
  static EffectScope conditional(CovariateProfile profile);
  static EffectScope marginal();

  bool is_marginal() const noexcept { return marginal_; }
  const CovariateProfile& profile() const;
  std::string label() const;

 private:
  bool marginal_ = true;
  CovariateProfile profile_;
};

struct RhoContext {
  ConfoundingKind kind;
  double rho;
};

/// Coefficients and covariances feeding one effect evaluation.
struct FitContext {
  ModelSpec spec;
  Eigen::VectorXd beta, theta;
  Eigen::MatrixXd sigma_beta, sigma_theta;
  /// When set, used instead of the block-diagonal covariance; (beta, theta) order.
  std::optional<Eigen::MatrixXd> sigma_joint;
  bool beta_converged = true;
  bool theta_converged = true;
  std::string beta_source = "mediator model";
  std::string theta_source = "outcome model";
  std::optional<RhoContext> rho_context;
};

struct EffectEstimate {
  EffectType effect_type = EffectType::NDE;
  bool marginal = true;
  std::string scope_label;
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double alpha = 0.05;
  std::optional<RhoContext> rho_context;
};

/// Point estimate, delta-method SE and Wald (1 - alpha) CI. `covariates` is
/// only read for marginal scope. Throws NotConvergedError naming the fit when
/// either coefficient set did not converge.
EffectEstimate effect_with_ci(EffectType type, const EffectScope& scope, const FitContext& fit,
                              const Eigen::MatrixXd& covariates, double alpha);

}  // namespace medsens
