#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace medsens {

/// Complete-case analysis data: binary exposure z, mediator m, outcome y and
/// an n x p covariate matrix. Immutable after construction.
class Dataset {
 public:
  /// Validates lengths, finiteness and the {0,1} coding of z, m and y.
  Dataset(Eigen::VectorXd z, Eigen::VectorXd m, Eigen::VectorXd y, Eigen::MatrixXd x,
          std::vector<std::string> covariate_names);

  Eigen::Index n() const noexcept { return z_.size(); }
  Eigen::Index p() const noexcept { return x_.cols(); }

  const Eigen::VectorXd& z() const noexcept { return z_; }
  const Eigen::VectorXd& m() const noexcept { return m_; }
  const Eigen::VectorXd& y() const noexcept { return y_; }
  const Eigen::MatrixXd& x() const noexcept { return x_; }
  const std::vector<std::string>& covariate_names() const noexcept { return names_; }

  /// Index of a covariate by name; throws ConfigError when absent.
  Eigen::Index covariate_index(const std::string& name) const;

  /// Rows selected by index (duplicates allowed; used for resampling).
  Dataset subset(const std::vector<Eigen::Index>& rows) const;

  /// Checks required before fitting: n > p + 10 and nonzero variance in every
  /// covariate column. Throws DataError.
  void validate_for_fitting() const;

  friend bool operator==(const Dataset& a, const Dataset& b);

 private:
  Eigen::VectorXd z_, m_, y_;
  Eigen::MatrixXd x_;
  std::vector<std::string> names_;
};

struct ExposureTerms {
  bool covariates = true;
};

struct MediatorTerms {
  bool covariates = true;
  bool exposure_covariate = false;  // z * x
};

struct OutcomeTerms {
  bool exposure_mediator = true;             // z * m
  bool covariates = true;                    // x
  bool exposure_covariate = false;           // z * x
  bool mediator_covariate = false;           // m * x
  bool exposure_mediator_covariate = false;  // z * m * x
};

/// Which blocks enter the three probit designs. Intercepts, z in the mediator
/// model and z, m in the outcome model are always present.
struct ModelSpec {
  ExposureTerms exposure;
  MediatorTerms mediator;
  OutcomeTerms outcome;

  /// Every interaction enabled.
  static ModelSpec full();
  /// Main effects only (no interactions, z*m included).
  static ModelSpec main_effects();

  /// Throws ConfigError if an interaction is enabled without its covariate
  /// main effect.
  void validate() const;

  Eigen::Index exposure_size(Eigen::Index p) const;
  Eigen::Index mediator_size(Eigen::Index p) const;
  Eigen::Index outcome_size(Eigen::Index p) const;

  friend bool operator==(const ModelSpec&, const ModelSpec&);
};

/// A covariate pattern x at which conditional effects are evaluated.
struct CovariateProfile {
  Eigen::VectorXd x;
  std::string label;
};

struct Design {
  Eigen::MatrixXd matrix;
  std::vector<std::string> columns;
};

// Column order: intercept, covariates.
Design build_exposure_design(const Dataset& ds, const ModelSpec& spec);
// Column order: intercept, z, x block, z*x block.
Design build_mediator_design(const Dataset& ds, const ModelSpec& spec);
// Column order: intercept, z, m, z*m, x, z*x, m*x, z*m*x.
Design build_outcome_design(const Dataset& ds, const ModelSpec& spec);

std::vector<std::string> exposure_terms(const ModelSpec& spec, const std::vector<std::string>& names);
std::vector<std::string> mediator_terms(const ModelSpec& spec, const std::vector<std::string>& names);
std::vector<std::string> outcome_terms(const ModelSpec& spec, const std::vector<std::string>& names);

/// Throws RankError naming the offending columns when the design is not of
/// full column rank.
void require_full_rank(const Design& design, const std::string& model);

/// Mediator coefficients expanded to the full (b0, b1, b2, b3) layout; blocks
/// disabled by the spec are zero.
struct MediatorBlocks {
  double b0 = 0.0, b1 = 0.0;
  Eigen::VectorXd b2, b3;
};

/// Outcome coefficients expanded to the full (t0 ... t7) layout.
struct OutcomeBlocks {
  double t0 = 0.0, t1 = 0.0, t2 = 0.0, t3 = 0.0;
  Eigen::VectorXd t4, t5, t6, t7;
};

MediatorBlocks expand_mediator(const Eigen::VectorXd& beta, const ModelSpec& spec, Eigen::Index p);
OutcomeBlocks expand_outcome(const Eigen::VectorXd& theta, const ModelSpec& spec, Eigen::Index p);
Eigen::VectorXd compress_mediator(const MediatorBlocks& blocks, const ModelSpec& spec);
Eigen::VectorXd compress_outcome(const OutcomeBlocks& blocks, const ModelSpec& spec);

// ---------------------------------------------------------------------------
// CSV input/output

/// One-hot expansion of a text column. Each non-reference level becomes an
/// indicator column named "<column>=<level>".
struct CategoricalColumn {
  std::vector<std::string> levels;
  std::string reference;
};

struct ColumnRoles {
  std::string exposure;
  std::string mediator;
  std::string outcome;
  std::vector<std::string> covariates;
  std::map<std::string, CategoricalColumn> categorical;
  char delimiter = ',';
};

struct LoadedData {
  Dataset data;
  std::size_t dropped_rows = 0;
};

/// Reads a header-first CSV. Rows with an empty or "NA" cell in any mapped
/// column are dropped and counted.
LoadedData load_csv(const std::string& path, const ColumnRoles& roles);

/// Writes z, m, y and covariates with columns named by `roles` (defaults
/// "z", "m", "y"). Values are printed in shortest round-trip form.
void write_csv(const Dataset& ds, const std::string& path, const ColumnRoles& roles = {});

/// Shortest round-trip decimal representation without exponent.
std::string format_decimal(double value);

}  // namespace medsens
