#include "medsens/probit.hpp"

#include <cmath>

#include "medsens/error.hpp"
#include "medsens/numkernel.hpp"

namespace medsens {

namespace {

void check_dimensions(const Eigen::VectorXd& coef, const Eigen::MatrixXd& design,
                      const Eigen::VectorXd& response) {
  if (design.cols() != coef.size() || design.rows() != response.size()) {
    throw ContractError("probit: design is " + std::to_string(design.rows()) + "x" +
                        std::to_string(design.cols()) + " but coefficients have length " +
                        std::to_string(coef.size()) + " and response length " +
                        std::to_string(response.size()));
  }
}

struct Derivatives {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd hessian;
};

Derivatives derivatives(const Eigen::VectorXd& coef, const Eigen::MatrixXd& design,
                        const Eigen::VectorXd& response) {
  const Eigen::VectorXd eta = design * coef;
  const Eigen::Index n = design.rows();
  Eigen::VectorXd first(n), weight(n);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double q = 2.0 * response[i] - 1.0;
    const double t = q * eta[i];
    const double lambda = inverse_mills(t);
    ll += log_norm_cdf(t);
    first[i] = q * lambda;
    weight[i] = lambda * (lambda + t);
  }
  Derivatives d;
  d.loglik = ll;
  d.score = design.transpose() * first;
  d.hessian = -(design.transpose() * weight.asDiagonal() * design);
  return d;
}

}  // namespace

double inverse_mills(double t) {
  if (t > -30.0) return norm_pdf(t) / norm_cdf(t);
  // Asymptotic series of Phi(t)/phi(t) for t -> -inf.
  const double t2 = t * t;
  return -t / (1.0 - 1.0 / t2 + 3.0 / (t2 * t2) - 15.0 / (t2 * t2 * t2));
}

double probit_loglik(const Eigen::VectorXd& coef, const Eigen::MatrixXd& design,
                     const Eigen::VectorXd& response) {
  check_dimensions(coef, design, response);
  const Eigen::VectorXd eta = design * coef;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    ll += log_norm_cdf((2.0 * response[i] - 1.0) * eta[i]);
  }
  return ll;
}

ProbitFit fit_probit(const Design& design, const Eigen::VectorXd& response, const NewtonOptions& options,
                     const std::optional<Eigen::VectorXd>& start) {
  const Eigen::MatrixXd& X = design.matrix;
  if (X.rows() != response.size()) throw ContractError("probit: design and response lengths differ");
  const double mean = response.mean();
  if (mean == 0.0 || mean == 1.0) {
    throw SeparationError("probit: response is constant; no finite maximum likelihood estimate");
  }
  require_full_rank(design, "probit");

  ProbitFit fit;
  fit.terms = design.columns;
  Eigen::VectorXd coef = start ? *start : Eigen::VectorXd::Zero(X.cols());
  check_dimensions(coef, X, response);

  Derivatives d = derivatives(coef, X, response);
  double rel_change = 1.0;
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    fit.iterations = iter;
    Eigen::LLT<Eigen::MatrixXd> llt(-d.hessian);
    Eigen::VectorXd step;
    if (llt.info() == Eigen::Success) {
      step = llt.solve(d.score);
    } else {
      step = d.score;  // steepest ascent when curvature is lost
    }

    double t = 1.0;
    Eigen::VectorXd trial = coef + step;
    double trial_ll = probit_loglik(trial, X, response);
    // Near the optimum the predicted gain drops below the rounding of the
    // summed loglik; the full Newton step is taken without comparison.
    const bool local = d.score.dot(step) < 1e-9 * (1.0 + std::abs(d.loglik));
    if (local && std::isfinite(trial_ll) && trial_ll > d.loglik - 1e-11 * (1.0 + std::abs(d.loglik))) {
      trial_ll = std::max(trial_ll, d.loglik);
    }
    while (!(trial_ll >= d.loglik) && t > 1e-12) {
      t *= 0.5;
      trial = coef + t * step;
      trial_ll = probit_loglik(trial, X, response);
    }
    if (!(trial_ll >= d.loglik)) {
      // No ascent within rounding: accept if already stationary.
      fit.converged = d.score.cwiseAbs().maxCoeff() < options.score_tolerance;
      break;
    }

    if ((X * trial).cwiseAbs().maxCoeff() > options.separation_bound && trial_ll > d.loglik) {
      throw SeparationError("probit: linear predictor exceeded " + std::to_string(options.separation_bound) +
                            " while the likelihood kept improving (quasi-complete separation)");
    }

    rel_change = std::abs(trial_ll - d.loglik) / (std::abs(d.loglik) + 1e-300);
    coef = trial;
    d = derivatives(coef, X, response);
    if (d.score.cwiseAbs().maxCoeff() < options.score_tolerance &&
        rel_change < options.relative_loglik_tolerance) {
      fit.converged = true;
      break;
    }
  }

  fit.coefficients = coef;
  fit.loglik = d.loglik;
  fit.gradient_norm = d.score.cwiseAbs().maxCoeff();
  fit.converged = fit.converged && fit.gradient_norm < options.score_tolerance;
  Eigen::MatrixXd info = -d.hessian;
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("probit: observed information is not positive definite at the optimum");
  }
  Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
  fit.covariance = 0.5 * (cov + cov.transpose());
  return fit;
}

}  // namespace medsens
