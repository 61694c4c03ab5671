#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "medsens/datamodel.hpp"

namespace medsens {

struct ProbitFit {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;  // inverse observed information at the optimum
  std::vector<std::string> terms;
  double loglik = 0.0;
  double gradient_norm = 0.0;  // infinity norm of the score
  int iterations = 0;
  bool converged = false;

  Eigen::VectorXd std_errors() const { return covariance.diagonal().cwiseSqrt(); }
};

struct NewtonOptions {
  double score_tolerance = 1e-6;
  double relative_loglik_tolerance = 1e-10;
  int max_iterations = 100;
  double separation_bound = 30.0;
};

/// sum_i r_i ln Phi(d_i'b) + (1 - r_i) ln Phi(-d_i'b), probabilities floored at 1e-300.
double probit_loglik(const Eigen::VectorXd& coef, const Eigen::MatrixXd& design,
                     const Eigen::VectorXd& response);

/// Newton-Raphson probit maximum likelihood from a zero start.
///
/// Throws SeparationError for a constant response, or when a linear predictor
/// exceeds `separation_bound` in magnitude while the likelihood is still
/// improving. Throws RankError for a rank-deficient design. Reaching the
/// iteration cap returns a fit with converged = false.
ProbitFit fit_probit(const Design& design, const Eigen::VectorXd& response,
                     const NewtonOptions& options = {},
                     const std::optional<Eigen::VectorXd>& start = std::nullopt);

/// phi(t) / Phi(t), stable for large negative t.
double inverse_mills(double t);

}  // namespace medsens
