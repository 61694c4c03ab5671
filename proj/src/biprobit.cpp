#include "medsens/biprobit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "medsens/error.hpp"

namespace medsens {

namespace {

constexpr double kProbabilityFloor = 1e-300;

// Model "a" supplies the second Phi2 argument and its response selects the
// sign; model "b" supplies w.
struct Problem {
  Design a, b;
  Eigen::VectorXd a_response, b_response;
};

Problem make_problem(ConfoundingKind kind, const Dataset& ds, const ModelSpec& spec) {
  switch (kind) {
    case ConfoundingKind::ExposureMediator:
      return {build_exposure_design(ds, spec), build_mediator_design(ds, spec), ds.z(), ds.m()};
    case ConfoundingKind::MediatorOutcome:
      return {build_mediator_design(ds, spec), build_outcome_design(ds, spec), ds.m(), ds.y()};
    case ConfoundingKind::ExposureOutcome:
      return {build_exposure_design(ds, spec), build_outcome_design(ds, spec), ds.z(), ds.y()};
  }
  throw ContractError("unknown confounding kind");
}

void check_layout(const Problem& prob, const Eigen::VectorXd& coef_a, const Eigen::VectorXd& coef_b) {
  if (coef_a.size() != prob.a.matrix.cols() || coef_b.size() != prob.b.matrix.cols()) {
    std::ostringstream msg;
    msg << "constrained likelihood: coefficient lengths (" << coef_a.size() << ", " << coef_b.size()
        << ") do not match design widths (" << prob.a.matrix.cols() << ", " << prob.b.matrix.cols() << ")";
    throw ContractError(msg.str());
  }
}

void check_rho(Correlation rho) {
  if (!rho.is_interior()) {
    throw DomainError("constrained likelihood requires |rho| <= 0.999");
  }
}

struct Evaluation {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd hessian;
  double max_abs_predictor = 0.0;
};

Evaluation evaluate(const Problem& prob, const Eigen::VectorXd& coef_a, const Eigen::VectorXd& coef_b,
                    double rho, bool with_derivatives) {
  const Eigen::VectorXd eta_a = prob.a.matrix * coef_a;
  const Eigen::VectorXd eta_b = prob.b.matrix * coef_b;
  const Eigen::Index n = eta_a.size();

  Evaluation ev;
  ev.max_abs_predictor = std::max(eta_a.cwiseAbs().maxCoeff(), eta_b.cwiseAbs().maxCoeff());
  Eigen::VectorXd first_a, first_b, h_aa, h_bb, h_ab;
  if (with_derivatives) {
    first_a.resize(n);
    first_b.resize(n);
    h_aa.resize(n);
    h_bb.resize(n);
    h_ab.resize(n);
  }

  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double qa = 2.0 * prob.a_response[i] - 1.0;
    const double qb = 2.0 * prob.b_response[i] - 1.0;
    const double u = qb * eta_b[i];
    const double v = qa * eta_a[i];
    const double r = qa * qb * rho;
    const double prob_uv = std::max(binorm_cdf(u, v, r), kProbabilityFloor);
    ll += std::log(prob_uv);
    if (!with_derivatives) continue;

    // Partial derivatives of Phi2 via the conditional-normal identities.
    const double s = std::sqrt((1.0 - r) * (1.0 + r));
    const double cond_v = (v - r * u) / s;
    const double cond_u = (u - r * v) / s;
    const double gu = norm_pdf(u) * norm_cdf(cond_v);
    const double gv = norm_pdf(v) * norm_cdf(cond_u);
    const double density = norm_pdf(u) * norm_pdf(cond_v) / s;
    const double du = gu / prob_uv;
    const double dv = gv / prob_uv;
    first_b[i] = qb * du;
    first_a[i] = qa * dv;
    h_bb[i] = (-u * gu - r * density) / prob_uv - du * du;
    h_aa[i] = (-v * gv - r * density) / prob_uv - dv * dv;
    h_ab[i] = qa * qb * (density / prob_uv - du * dv);
  }
  ev.loglik = ll;
  if (!with_derivatives) return ev;

  const auto& Xa = prob.a.matrix;
  const auto& Xb = prob.b.matrix;
  const Eigen::Index ka = Xa.cols();
  const Eigen::Index kb = Xb.cols();
  ev.score.resize(ka + kb);
  ev.score.head(ka) = Xa.transpose() * first_a;
  ev.score.tail(kb) = Xb.transpose() * first_b;
  ev.hessian.resize(ka + kb, ka + kb);
  ev.hessian.topLeftCorner(ka, ka) = Xa.transpose() * h_aa.asDiagonal() * Xa;
  ev.hessian.bottomRightCorner(kb, kb) = Xb.transpose() * h_bb.asDiagonal() * Xb;
  ev.hessian.topRightCorner(ka, kb) = Xa.transpose() * h_ab.asDiagonal() * Xb;
  ev.hessian.bottomLeftCorner(kb, ka) = ev.hessian.topRightCorner(ka, kb).transpose();
  return ev;
}

// Newton direction for maximization; damps the Hessian until -H is positive definite.
Eigen::VectorXd ascent_direction(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& score) {
  Eigen::MatrixXd info = -hessian;
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() == Eigen::Success) return llt.solve(score);
  double mu = 1e-6 * std::max(1.0, info.diagonal().cwiseAbs().maxCoeff());
  for (int k = 0; k < 40; ++k, mu *= 10.0) {
    Eigen::MatrixXd damped = info;
    damped.diagonal().array() += mu;
    llt.compute(damped);
    if (llt.info() == Eigen::Success) return llt.solve(score);
  }
  return score;
}

}  // namespace

std::string_view to_string(ConfoundingKind kind) {
  switch (kind) {
    case ConfoundingKind::ExposureMediator: return "exposure-mediator";
    case ConfoundingKind::MediatorOutcome: return "mediator-outcome";
    case ConfoundingKind::ExposureOutcome: return "exposure-outcome";
  }
  return "unknown";
}

std::string_view short_code(ConfoundingKind kind) {
  switch (kind) {
    case ConfoundingKind::ExposureMediator: return "zm";
    case ConfoundingKind::MediatorOutcome: return "my";
    case ConfoundingKind::ExposureOutcome: return "zy";
  }
  return "??";
}

ConfoundingKind parse_confounding_kind(std::string_view text) {
  for (auto kind : {ConfoundingKind::ExposureMediator, ConfoundingKind::MediatorOutcome,
                    ConfoundingKind::ExposureOutcome}) {
    if (text == short_code(kind) || text == to_string(kind)) return kind;
  }
  throw ConfigError("unknown confounding kind '" + std::string(text) + "' (expected zm, my or zy)");
}

LikelihoodTerms likelihood_terms(ConfoundingKind kind, const Eigen::VectorXd& coef_a,
                                 const Eigen::VectorXd& coef_b, Correlation rho, const Dataset& ds,
                                 const ModelSpec& spec) {
  const Problem prob = make_problem(kind, ds, spec);
  check_layout(prob, coef_a, coef_b);
  const Eigen::VectorXd qb = 2.0 * prob.b_response.array() - 1.0;
  LikelihoodTerms t;
  t.w = qb.cwiseProduct(prob.b.matrix * coef_b);
  t.second = prob.a.matrix * coef_a;
  t.rho_star = qb * rho.value();
  t.selector = prob.a_response;
  return t;
}

double constrained_loglik(ConfoundingKind kind, const Eigen::VectorXd& coef_a, const Eigen::VectorXd& coef_b,
                          Correlation rho, const Dataset& ds, const ModelSpec& spec) {
  check_rho(rho);
  const Problem prob = make_problem(kind, ds, spec);
  check_layout(prob, coef_a, coef_b);
  return evaluate(prob, coef_a, coef_b, rho.value(), false).loglik;
}

double loglik_exposure_mediator(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, Correlation rho,
                                const Dataset& ds, const ModelSpec& spec) {
  return constrained_loglik(ConfoundingKind::ExposureMediator, alpha, beta, rho, ds, spec);
}

double loglik_mediator_outcome(const Eigen::VectorXd& beta, const Eigen::VectorXd& theta, Correlation rho,
                               const Dataset& ds, const ModelSpec& spec) {
  return constrained_loglik(ConfoundingKind::MediatorOutcome, beta, theta, rho, ds, spec);
}

double loglik_exposure_outcome(const Eigen::VectorXd& alpha, const Eigen::VectorXd& theta, Correlation rho,
                               const Dataset& ds, const ModelSpec& spec) {
  return constrained_loglik(ConfoundingKind::ExposureOutcome, alpha, theta, rho, ds, spec);
}

Eigen::VectorXd constrained_score(ConfoundingKind kind, const Eigen::VectorXd& coef_a,
                                  const Eigen::VectorXd& coef_b, Correlation rho, const Dataset& ds,
                                  const ModelSpec& spec) {
  check_rho(rho);
  const Problem prob = make_problem(kind, ds, spec);
  check_layout(prob, coef_a, coef_b);
  return evaluate(prob, coef_a, coef_b, rho.value(), true).score;
}

ConstrainedFit fit_constrained(ConfoundingKind kind, double rho, const Dataset& ds, const ModelSpec& spec,
                               const ConstrainedOptions& options) {
  ConstrainedFit fit;
  fit.kind = kind;
  fit.requested_rho = rho;
  const Correlation requested(rho);
  fit.rho = requested.clamped();
  if (!requested.is_interior()) {
    std::ostringstream msg;
    msg << "rho " << rho << " clamped to " << fit.rho.value();
    fit.warnings.push_back(msg.str());
  }

  const Problem prob = make_problem(kind, ds, spec);
  require_full_rank(prob.a, "constrained fit (first model)");
  require_full_rank(prob.b, "constrained fit (second model)");
  fit.terms_a = prob.a.columns;
  fit.terms_b = prob.b.columns;
  const Eigen::Index ka = prob.a.matrix.cols();
  const Eigen::Index kb = prob.b.matrix.cols();

  Eigen::VectorXd coef(ka + kb);
  if (options.start) {
    if (options.start->size() != ka + kb) throw ContractError("constrained fit: start vector has wrong length");
    coef = *options.start;
  } else {
    coef.head(ka) = fit_probit(prob.a, prob.a_response).coefficients;
    coef.tail(kb) = fit_probit(prob.b, prob.b_response).coefficients;
  }

  const double r = fit.rho.value();
  const auto& opt = options.newton;
  auto loglik_at = [&](const Eigen::VectorXd& c) {
    return evaluate(prob, c.head(ka), c.tail(kb), r, false).loglik;
  };

  Evaluation ev = evaluate(prob, coef.head(ka), coef.tail(kb), r, true);
  for (int iter = 1; iter <= opt.max_iterations; ++iter) {
    fit.iterations = iter;
    const Eigen::VectorXd step = ascent_direction(ev.hessian, ev.score);
    double t = 1.0;
    Eigen::VectorXd trial = coef + step;
    double trial_ll = loglik_at(trial);
    const bool local = ev.score.dot(step) < 1e-9 * (1.0 + std::abs(ev.loglik));
    if (local && std::isfinite(trial_ll) && trial_ll > ev.loglik - 1e-11 * (1.0 + std::abs(ev.loglik))) {
      trial_ll = std::max(trial_ll, ev.loglik);
    }
    while (!(trial_ll >= ev.loglik) && t > 1e-12) {
      t *= 0.5;
      trial = coef + t * step;
      trial_ll = loglik_at(trial);
    }
    if (!(trial_ll >= ev.loglik)) {
      fit.converged = ev.score.cwiseAbs().maxCoeff() < opt.score_tolerance;
      break;
    }
    const double rel_change = std::abs(trial_ll - ev.loglik) / (std::abs(ev.loglik) + 1e-300);
    coef = trial;
    ev = evaluate(prob, coef.head(ka), coef.tail(kb), r, true);
    if (ev.max_abs_predictor > opt.separation_bound && rel_change > 0.0) {
      throw SeparationError("constrained fit: linear predictor exceeded " +
                            std::to_string(opt.separation_bound) +
                            " while the likelihood kept improving (separation)");
    }
    if (ev.score.cwiseAbs().maxCoeff() < opt.score_tolerance && rel_change < opt.relative_loglik_tolerance) {
      fit.converged = true;
      break;
    }
  }

  fit.coefficients_a = coef.head(ka);
  fit.coefficients_b = coef.tail(kb);
  fit.loglik = ev.loglik;
  fit.gradient_norm = ev.score.cwiseAbs().maxCoeff();

  const Eigen::MatrixXd info = -ev.hessian;
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) {
    fit.converged = false;
    fit.warnings.push_back("observed information is not positive definite at the final iterate");
    fit.covariance_full = Eigen::MatrixXd::Constant(ka + kb, ka + kb, std::numeric_limits<double>::quiet_NaN());
  } else {
    const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(ka + kb, ka + kb));
    fit.covariance_full = 0.5 * (cov + cov.transpose());
  }
  fit.covariance_a = fit.covariance_full.topLeftCorner(ka, ka);
  fit.covariance_b = fit.covariance_full.bottomRightCorner(kb, kb);
  return fit;
}

}  // namespace medsens
