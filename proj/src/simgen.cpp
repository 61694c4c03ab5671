#include "medsens/simgen.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "medsens/error.hpp"
#include "medsens/json_support.hpp"

namespace medsens {

namespace {

std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t replication_seed(std::uint64_t base, std::uint64_t index) noexcept {
  std::uint64_t state = base + index * 0x9e3779b97f4a7c15ULL;
  return splitmix64(state);
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t state = seed;
  for (auto& w : s_) w = splitmix64(state);
}

std::uint64_t Rng::next() noexcept {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() noexcept { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

double Rng::normal() { return norm_quantile(uniform()); }

// ---------------------------------------------------------------------------

CovariateGenerator CovariateGenerator::constant(std::string name, double value) {
  return {std::move(name), Kind::Constant, value, 0.0};
}
CovariateGenerator CovariateGenerator::uniform(std::string name, double lower, double upper) {
  return {std::move(name), Kind::Uniform, lower, upper};
}
CovariateGenerator CovariateGenerator::normal(std::string name, double mean, double sd) {
  return {std::move(name), Kind::Normal, mean, sd};
}
CovariateGenerator CovariateGenerator::bernoulli(std::string name, double p) {
  return {std::move(name), Kind::Bernoulli, p, 0.0};
}

double CovariateGenerator::draw(Rng& rng) const {
  switch (kind) {
    case Kind::Constant: return a;
    case Kind::Uniform: return a + (b - a) * rng.uniform();
    case Kind::Normal: return a + b * rng.normal();
    case Kind::Bernoulli: return rng.uniform() < a ? 1.0 : 0.0;
  }
  return 0.0;
}

double CovariateGenerator::mean() const noexcept {
  switch (kind) {
    case Kind::Constant: return a;
    case Kind::Uniform: return 0.5 * (a + b);
    case Kind::Normal: return a;
    case Kind::Bernoulli: return a;
  }
  return 0.0;
}

std::vector<std::string> TrueParams::covariate_names() const {
  std::vector<std::string> out;
  for (const auto& c : covariates) out.push_back(c.name);
  return out;
}

void TrueParams::validate() const {
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw ContractError(e.what());
  }
  const Eigen::Index k = p();
  auto check = [](const Eigen::VectorXd& v, Eigen::Index expected, const char* what) {
    if (v.size() != expected) {
      throw ContractError(std::string(what) + " has " + std::to_string(v.size()) + " coefficients, layout needs " +
                          std::to_string(expected));
    }
    if (!v.allFinite()) throw ContractError(std::string(what) + " has non-finite coefficients");
  };
  check(alpha, spec.exposure_size(k), "alpha");
  check(beta, spec.mediator_size(k), "beta");
  check(theta, spec.outcome_size(k), "theta");
  for (std::size_t i = 0; i < covariates.size(); ++i) {
    const auto& c = covariates[i];
    if (c.name.empty()) throw ContractError("covariate " + std::to_string(i) + " has no name");
    for (std::size_t j = 0; j < i; ++j) {
      if (covariates[j].name == c.name) throw ContractError("duplicate covariate name '" + c.name + "'");
    }
    const bool ok = std::isfinite(c.a) && std::isfinite(c.b) &&
                    (c.kind != CovariateGenerator::Kind::Uniform || c.a < c.b) &&
                    (c.kind != CovariateGenerator::Kind::Normal || c.b > 0.0) &&
                    (c.kind != CovariateGenerator::Kind::Bernoulli || (c.a >= 0.0 && c.a <= 1.0));
    if (!ok) throw ContractError("covariate '" + c.name + "' has invalid distribution parameters");
  }
  if (confounding && !confounding->rho.is_interior()) {
    throw ContractError("confounding correlation must satisfy |rho| <= 0.999");
  }
}

Dataset simulate(const TrueParams& params, Eigen::Index n, std::uint64_t seed, LatentDraws* latent) {
  if (n < 1) throw ContractError("simulate: n must be positive");
  params.validate();
  const Eigen::Index p = params.p();
  Rng rng(seed);

  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd eps(n), eta(n), xi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = params.covariates[static_cast<std::size_t>(j)].draw(rng);
    eps(i) = rng.normal();
    eta(i) = rng.normal();
    xi(i) = rng.normal();
    if (params.confounding) {
      const double r = params.confounding->rho.value();
      const double s = std::sqrt(1.0 - r * r);
      switch (params.confounding->kind) {
        case ConfoundingKind::ExposureMediator: eta(i) = r * eps(i) + s * eta(i); break;
        case ConfoundingKind::MediatorOutcome: xi(i) = r * eta(i) + s * xi(i); break;
        case ConfoundingKind::ExposureOutcome: xi(i) = r * eps(i) + s * xi(i); break;
      }
    }
  }

  const MediatorBlocks mb = expand_mediator(params.beta, params.spec, p);
  const OutcomeBlocks ob = expand_outcome(params.theta, params.spec, p);
  const Eigen::VectorXd ax = params.spec.exposure.covariates && p > 0
                                 ? Eigen::VectorXd(x * params.alpha.tail(p))
                                 : Eigen::VectorXd::Zero(n);

  Eigen::VectorXd z(n), m(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd xi_row = x.row(i).transpose();
    z(i) = params.alpha(0) + ax(i) + eps(i) > 0.0 ? 1.0 : 0.0;
    double ms = mb.b0 + mb.b1 * z(i) + eta(i);
    if (p > 0) ms += mb.b2.dot(xi_row) + z(i) * mb.b3.dot(xi_row);
    m(i) = ms > 0.0 ? 1.0 : 0.0;
    const double zm = z(i) * m(i);
    double ys = ob.t0 + ob.t1 * z(i) + ob.t2 * m(i) + ob.t3 * zm + xi(i);
    if (p > 0) {
      ys += ob.t4.dot(xi_row) + z(i) * ob.t5.dot(xi_row) + m(i) * ob.t6.dot(xi_row) + zm * ob.t7.dot(xi_row);
    }
    y(i) = ys > 0.0 ? 1.0 : 0.0;
  }
  if (latent) *latent = LatentDraws{eps, eta, xi};
  return Dataset(std::move(z), std::move(m), std::move(y), std::move(x), params.covariate_names());
}

namespace {

EffectMap collect(const std::function<double(EffectType)>& f) {
  EffectMap out;
  for (EffectType t : {EffectType::NDE, EffectType::NIE, EffectType::NDE_total, EffectType::NIE_pure}) {
    out[t] = f(t);
  }
  out[EffectType::TE] = out[EffectType::NDE] + out[EffectType::NIE];
  return out;
}

}  // namespace

EffectMap true_effects(const TrueParams& params, const CovariateProfile& profile) {
  params.validate();
  if (profile.x.size() != params.p()) throw ContractError("true_effects: profile length does not match covariates");
  return collect([&](EffectType t) { return effect_conditional(t, params.theta, params.beta, profile, params.spec); });
}

EffectMap true_effects(const TrueParams& params, const Eigen::MatrixXd& covariates) {
  params.validate();
  if (covariates.cols() != params.p()) throw ContractError("true_effects: covariate matrix has wrong column count");
  if (covariates.rows() < 1) throw ContractError("true_effects: empty covariate sample");
  return collect([&](EffectType t) { return effect_marginal(t, params.theta, params.beta, covariates, params.spec); });
}

// ---------------------------------------------------------------------------
// Scenario files

namespace {

Eigen::VectorXd vector_from(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = json_number(j[i], where + "/" + std::to_string(i));
  }
  return v;
}

CovariateGenerator covariate_from(const nlohmann::json& j, const std::string& where) {
  const std::string name = json_string(require_member(j, "name", where), where + "/name");
  const std::string dist = json_string(require_member(j, "dist", where), where + "/dist");
  auto num = [&](const char* key, double fallback) {
    return j.contains(key) ? json_number(j.at(key), where + "/" + key) : fallback;
  };
  if (dist == "constant") return CovariateGenerator::constant(name, json_number(require_member(j, "value", where), where + "/value"));
  if (dist == "uniform") return CovariateGenerator::uniform(name, num("lower", 0.0), num("upper", 1.0));
  if (dist == "normal") return CovariateGenerator::normal(name, num("mean", 0.0), num("sd", 1.0));
  if (dist == "bernoulli") return CovariateGenerator::bernoulli(name, json_number(require_member(j, "p", where), where + "/p"));
  throw ConfigError(where + "/dist: unknown distribution '" + dist + "'");
}

}  // namespace

Scenario parse_scenario(std::string_view text, const std::string& source) {
  const nlohmann::json j = parse_json_text(text, source);
  const std::string root = source + ":";
  if (!j.is_object()) throw ConfigError(root + " scenario must be a JSON object");

  Scenario sc;
  TrueParams& tp = sc.params;
  tp.spec = j.contains("model") ? model_spec_from_json(j.at("model"), root + "/model") : ModelSpec::main_effects();
  if (j.contains("covariates")) {
    const auto& cs = j.at("covariates");
    if (!cs.is_array()) throw ConfigError(root + "/covariates: expected an array");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      tp.covariates.push_back(covariate_from(cs[i], root + "/covariates/" + std::to_string(i)));
    }
  }
  tp.alpha = vector_from(require_member(j, "alpha", root), root + "/alpha");
  tp.beta = vector_from(require_member(j, "beta", root), root + "/beta");
  tp.theta = vector_from(require_member(j, "theta", root), root + "/theta");
  if (j.contains("confounding") && !j.at("confounding").is_null()) {
    const auto& c = j.at("confounding");
    const std::string at = root + "/confounding";
    const std::string kind = json_string(require_member(c, "kind", at), at + "/kind");
    const double rho = json_number(require_member(c, "rho", at), at + "/rho");
    if (!(std::abs(rho) <= kMaxInteriorCorrelation)) throw ConfigError(at + "/rho: must satisfy |rho| <= 0.999");
    tp.confounding = Confounding{parse_confounding_kind(kind), Correlation(rho)};
  }
  if (j.contains("n")) {
    const auto& v = j.at("n");
    if (!v.is_number_integer() || v.get<long long>() < 1) throw ConfigError(root + "/n: expected a positive integer");
    sc.n = static_cast<Eigen::Index>(v.get<long long>());
  }
  if (j.contains("seed")) {
    const auto& v = j.at("seed");
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(root + "/seed: expected a non-negative integer");
    sc.seed = v.get<std::uint64_t>();
  }
  try {
    tp.validate();
  } catch (const ContractError& e) {
    throw ConfigError(root + " " + e.what());
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open scenario '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

}  // namespace medsens
