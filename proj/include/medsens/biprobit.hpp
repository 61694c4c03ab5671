#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "medsens/datamodel.hpp"
#include "medsens/numkernel.hpp"
#include "medsens/probit.hpp"

namespace medsens {

/// Which pair of latent error terms is allowed to correlate.
enum class ConfoundingKind {
  ExposureMediator,  // (epsilon, eta): likelihood in (alpha, beta)
  MediatorOutcome,   // (eta, xi): likelihood in (beta, theta)
  ExposureOutcome,   // (epsilon, xi): likelihood in (alpha, theta)
};

std::string_view to_string(ConfoundingKind kind);
/// Short code used on the command line: "zm", "my" or "zy".
std::string_view short_code(ConfoundingKind kind);
/// Accepts the short codes and the full names.
ConfoundingKind parse_confounding_kind(std::string_view text);

/// Per-observation pieces of a constrained likelihood. Observation i
/// contributes ln Phi2(w_i, s_i * second_i; s_i * rho_star_i) where
/// s_i = 2 * selector_i - 1.
///
/// For exposure-mediator confounding w is (2m - 1) times the mediator
/// predictor, second is alpha'x, rho_star is (2m - 1) rho and the selector is
/// z. For the outcome kinds w is (2y - 1) times the outcome predictor and
/// rho_star is (2y - 1) rho; the selector is m (mediator-outcome, second is
/// the mediator predictor) or z (exposure-outcome, second is alpha'x).
struct LikelihoodTerms {
  Eigen::VectorXd w;
  Eigen::VectorXd second;
  Eigen::VectorXd rho_star;
  Eigen::VectorXd selector;
};

LikelihoodTerms likelihood_terms(ConfoundingKind kind, const Eigen::VectorXd& coef_a,
                                 const Eigen::VectorXd& coef_b, Correlation rho, const Dataset& ds,
                                 const ModelSpec& spec);

double loglik_exposure_mediator(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, Correlation rho,
                                const Dataset& ds, const ModelSpec& spec);
double loglik_mediator_outcome(const Eigen::VectorXd& beta, const Eigen::VectorXd& theta, Correlation rho,
                               const Dataset& ds, const ModelSpec& spec);
double loglik_exposure_outcome(const Eigen::VectorXd& alpha, const Eigen::VectorXd& theta, Correlation rho,
                               const Dataset& ds, const ModelSpec& spec);

/// Dispatch on kind; (coef_a, coef_b) follow the argument order above.
double constrained_loglik(ConfoundingKind kind, const Eigen::VectorXd& coef_a, const Eigen::VectorXd& coef_b,
                          Correlation rho, const Dataset& ds, const ModelSpec& spec);

/// Score of the constrained likelihood with respect to the stacked (a, b) vector.
Eigen::VectorXd constrained_score(ConfoundingKind kind, const Eigen::VectorXd& coef_a,
                                  const Eigen::VectorXd& coef_b, Correlation rho, const Dataset& ds,
                                  const ModelSpec& spec);

struct ConstrainedFit {
  ConfoundingKind kind = ConfoundingKind::ExposureMediator;
  Correlation rho;            // value used in the likelihood (after clamping)
  double requested_rho = 0.0;
  std::vector<std::string> warnings;

  Eigen::VectorXd coefficients_a, coefficients_b;
  Eigen::MatrixXd covariance_a, covariance_b;  // diagonal blocks of the joint inverse information
  Eigen::MatrixXd covariance_full;             // joint inverse information, (a, b) order
  std::vector<std::string> terms_a, terms_b;

  double loglik = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct ConstrainedOptions {
  NewtonOptions newton{1e-6, 1e-10, 200, 30.0};
  /// Stacked (a, b) start; defaults to the two univariate probit solutions.
  std::optional<Eigen::VectorXd> start;
};

/// Modified maximum likelihood: maximizes the kind's likelihood over both
/// coefficient vectors with rho held fixed. |rho| beyond 0.999 is clamped and
/// a warning recorded.
ConstrainedFit fit_constrained(ConfoundingKind kind, double rho, const Dataset& ds, const ModelSpec& spec,
                               const ConstrainedOptions& options = {});

}  // namespace medsens
