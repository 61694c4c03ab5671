#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "medsens/biprobit.hpp"
#include "medsens/datamodel.hpp"
#include "medsens/effects.hpp"
#include "medsens/numkernel.hpp"

namespace medsens {

/// xoshiro256** seeded through splitmix64. The bit stream is fixed: the same
/// seed gives the same draws on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next() noexcept;
  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() noexcept;
  /// Standard normal by inversion: norm_quantile(uniform()).
  double normal();

 private:
  std::array<std::uint64_t, 4> s_;
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Seed of replication `index` derived from `base`: the index-th output of a
/// splitmix64 stream started at `base`.
std::uint64_t replication_seed(std::uint64_t base, std::uint64_t index) noexcept;

/// Distribution of one simulated covariate column.
struct CovariateGenerator {
  enum class Kind { Constant, Uniform, Normal, Bernoulli };

  std::string name;
  Kind kind = Kind::Normal;
  double a = 0.0;  // constant value | lower bound | mean | success probability
  double b = 1.0;  // unused | upper bound | standard deviation | unused

  static CovariateGenerator constant(std::string name, double value);
  static CovariateGenerator uniform(std::string name, double lower, double upper);
  static CovariateGenerator normal(std::string name, double mean = 0.0, double sd = 1.0);
  static CovariateGenerator bernoulli(std::string name, double p);

  double draw(Rng& rng) const;
  /// Population mean of the column.
  double mean() const noexcept;
};

struct Confounding {
  ConfoundingKind kind = ConfoundingKind::MediatorOutcome;
  Correlation rho;
};

/// Generating parameters of the latent-index models:
///   Z* = alpha'x + eps,  M* = beta'(1, z, x, z x) + eta,
///   Y* = theta'(1, z, m, z m, x, z x, m x, z m x) + xi,
/// each coefficient vector in the design-builder layout of `spec`.
struct TrueParams {
  ModelSpec spec;
  std::vector<CovariateGenerator> covariates;
  Eigen::VectorXd alpha, beta, theta;
  std::optional<Confounding> confounding;

  Eigen::Index p() const noexcept { return static_cast<Eigen::Index>(covariates.size()); }
  std::vector<std::string> covariate_names() const;
  /// Throws ContractError on layout mismatch, invalid distributions or
  /// |rho| > 0.999.
  void validate() const;
};

/// Latent error draws kept for diagnostics.
struct LatentDraws {
  Eigen::VectorXd eps, eta, xi;
};

/// Draws n observations. Per row: covariates in column order, then three
/// independent normals for (eps, eta, xi); the designated pair is correlated
/// by the Cholesky factor of its 2 x 2 correlation matrix.
Dataset simulate(const TrueParams& params, Eigen::Index n, std::uint64_t seed, LatentDraws* latent = nullptr);

using EffectMap = std::map<EffectType, double>;

/// Closed-form effects at the true coefficients, at a profile or averaged over
/// the rows of a covariate matrix.
EffectMap true_effects(const TrueParams& params, const CovariateProfile& profile);
EffectMap true_effects(const TrueParams& params, const Eigen::MatrixXd& covariates);

/// Scenario file (JSON):
///   {"model": <model spec>, "covariates": [{"name", "dist", ...}],
///    "alpha": [...], "beta": [...], "theta": [...],
///    "confounding": {"kind": "my", "rho": 0.3}, "n": 5000, "seed": 1}
/// "dist" is constant (value), uniform (lower, upper), normal (mean, sd) or
/// bernoulli (p). "confounding", "n" and "seed" are optional.
struct Scenario {
  TrueParams params;
  std::optional<Eigen::Index> n;
  std::optional<std::uint64_t> seed;
};

Scenario parse_scenario(std::string_view text, const std::string& source);
Scenario load_scenario(const std::string& path);

}  // namespace medsens
