#include "medsens/datamodel.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "medsens/error.hpp"

namespace medsens {

namespace {

void require_binary(const Eigen::VectorXd& v, const char* column) {
  std::vector<Eigen::Index> bad;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0 && v[i] != 1.0) bad.push_back(i);
  }
  if (bad.empty()) return;
  std::ostringstream msg;
  msg << "column '" << column << "' must be coded 0/1; offending rows:";
  for (std::size_t k = 0; k < bad.size() && k < 10; ++k) msg << ' ' << bad[k] + 1;
  if (bad.size() > 10) msg << " ... (" << bad.size() << " total)";
  throw DataError(msg.str());
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(trim(current));
  return fields;
}

bool is_missing(const std::string& cell) { return cell.empty() || cell == "NA"; }

bool parse_double(const std::string& text, double& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

void append_block(Eigen::MatrixXd& out, Eigen::Index& col, const Eigen::MatrixXd& block) {
  out.middleCols(col, block.cols()) = block;
  col += block.cols();
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(Eigen::VectorXd z, Eigen::VectorXd m, Eigen::VectorXd y, Eigen::MatrixXd x,
                 std::vector<std::string> covariate_names)
    : z_(std::move(z)), m_(std::move(m)), y_(std::move(y)), x_(std::move(x)),
      names_(std::move(covariate_names)) {
  const Eigen::Index n = z_.size();
  if (n == 0) throw DataError("dataset has no rows");
  if (m_.size() != n || y_.size() != n || x_.rows() != n) {
    throw ContractError("dataset columns have inconsistent lengths");
  }
  if (static_cast<Eigen::Index>(names_.size()) != x_.cols()) {
    throw ContractError("covariate name count does not match covariate matrix width");
  }
  std::set<std::string> unique(names_.begin(), names_.end());
  if (unique.size() != names_.size()) throw DataError("covariate names must be unique");
  require_binary(z_, "exposure");
  require_binary(m_, "mediator");
  require_binary(y_, "outcome");
  if (!x_.allFinite()) throw DataError("covariates contain non-finite values");
}

Eigen::Index Dataset::covariate_index(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ConfigError("unknown covariate '" + name + "'");
  return static_cast<Eigen::Index>(it - names_.begin());
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  const auto k = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd z(k), m(k), y(k);
  Eigen::MatrixXd x(k, p());
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= n()) throw ContractError("subset row index out of range");
    z[i] = z_[r];
    m[i] = m_[r];
    y[i] = y_[r];
    x.row(i) = x_.row(r);
  }
  return Dataset(std::move(z), std::move(m), std::move(y), std::move(x), names_);
}

void Dataset::validate_for_fitting() const {
  if (n() <= p() + 10) {
    throw DataError("need more than p + 10 rows to fit (n = " + std::to_string(n()) +
                    ", p = " + std::to_string(p()) + ")");
  }
  for (Eigen::Index j = 0; j < p(); ++j) {
    const auto col = x_.col(j);
    if ((col.array() == col[0]).all()) {
      throw DataError("covariate '" + names_[static_cast<std::size_t>(j)] + "' has zero variance");
    }
  }
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.names_ == b.names_ && a.z_ == b.z_ && a.m_ == b.m_ && a.y_ == b.y_ &&
         a.x_.rows() == b.x_.rows() && a.x_.cols() == b.x_.cols() && a.x_ == b.x_;
}

// ---------------------------------------------------------------------------
// ModelSpec

ModelSpec ModelSpec::full() {
  ModelSpec s;
  s.mediator.exposure_covariate = true;
  s.outcome.exposure_covariate = true;
  s.outcome.mediator_covariate = true;
  s.outcome.exposure_mediator_covariate = true;
  return s;
}

ModelSpec ModelSpec::main_effects() { return ModelSpec{}; }

void ModelSpec::validate() const {
  if (mediator.exposure_covariate && !mediator.covariates) {
    throw ConfigError("mediator model: z*x requires the covariate main effects");
  }
  const bool any_x_interaction = outcome.exposure_covariate || outcome.mediator_covariate ||
                                 outcome.exposure_mediator_covariate;
  if (any_x_interaction && !outcome.covariates) {
    throw ConfigError("outcome model: covariate interactions require the covariate main effects");
  }
}

Eigen::Index ModelSpec::exposure_size(Eigen::Index p) const {
  return 1 + (exposure.covariates ? p : 0);
}

Eigen::Index ModelSpec::mediator_size(Eigen::Index p) const {
  return 2 + (mediator.covariates ? p : 0) + (mediator.exposure_covariate ? p : 0);
}

Eigen::Index ModelSpec::outcome_size(Eigen::Index p) const {
  const auto& o = outcome;
  return 3 + (o.exposure_mediator ? 1 : 0) + p * ((o.covariates ? 1 : 0) + (o.exposure_covariate ? 1 : 0) +
                                                  (o.mediator_covariate ? 1 : 0) +
                                                  (o.exposure_mediator_covariate ? 1 : 0));
}

bool operator==(const ModelSpec& a, const ModelSpec& b) {
  return a.exposure.covariates == b.exposure.covariates &&
         a.mediator.covariates == b.mediator.covariates &&
         a.mediator.exposure_covariate == b.mediator.exposure_covariate &&
         a.outcome.exposure_mediator == b.outcome.exposure_mediator &&
         a.outcome.covariates == b.outcome.covariates &&
         a.outcome.exposure_covariate == b.outcome.exposure_covariate &&
         a.outcome.mediator_covariate == b.outcome.mediator_covariate &&
         a.outcome.exposure_mediator_covariate == b.outcome.exposure_mediator_covariate;
}

// ---------------------------------------------------------------------------
// Designs

std::vector<std::string> exposure_terms(const ModelSpec& spec, const std::vector<std::string>& names) {
  std::vector<std::string> out{"(Intercept)"};
  if (spec.exposure.covariates) out.insert(out.end(), names.begin(), names.end());
  return out;
}

std::vector<std::string> mediator_terms(const ModelSpec& spec, const std::vector<std::string>& names) {
  std::vector<std::string> out{"(Intercept)", "z"};
  if (spec.mediator.covariates) out.insert(out.end(), names.begin(), names.end());
  if (spec.mediator.exposure_covariate) {
    for (const auto& n : names) out.push_back("z:" + n);
  }
  return out;
}

std::vector<std::string> outcome_terms(const ModelSpec& spec, const std::vector<std::string>& names) {
  std::vector<std::string> out{"(Intercept)", "z", "m"};
  const auto& o = spec.outcome;
  if (o.exposure_mediator) out.push_back("z:m");
  if (o.covariates) out.insert(out.end(), names.begin(), names.end());
  if (o.exposure_covariate) {
    for (const auto& n : names) out.push_back("z:" + n);
  }
  if (o.mediator_covariate) {
    for (const auto& n : names) out.push_back("m:" + n);
  }
  if (o.exposure_mediator_covariate) {
    for (const auto& n : names) out.push_back("z:m:" + n);
  }
  return out;
}

Design build_exposure_design(const Dataset& ds, const ModelSpec& spec) {
  spec.validate();
  const Eigen::Index n = ds.n();
  Eigen::MatrixXd out(n, spec.exposure_size(ds.p()));
  out.col(0).setOnes();
  if (spec.exposure.covariates) out.rightCols(ds.p()) = ds.x();
  return {std::move(out), exposure_terms(spec, ds.covariate_names())};
}

Design build_mediator_design(const Dataset& ds, const ModelSpec& spec) {
  spec.validate();
  const Eigen::Index n = ds.n();
  Eigen::MatrixXd out(n, spec.mediator_size(ds.p()));
  out.col(0).setOnes();
  out.col(1) = ds.z();
  Eigen::Index col = 2;
  if (spec.mediator.covariates) append_block(out, col, ds.x());
  if (spec.mediator.exposure_covariate) append_block(out, col, ds.z().asDiagonal() * ds.x());
  return {std::move(out), mediator_terms(spec, ds.covariate_names())};
}

Design build_outcome_design(const Dataset& ds, const ModelSpec& spec) {
  spec.validate();
  const Eigen::Index n = ds.n();
  const auto& o = spec.outcome;
  Eigen::MatrixXd out(n, spec.outcome_size(ds.p()));
  out.col(0).setOnes();
  out.col(1) = ds.z();
  out.col(2) = ds.m();
  Eigen::Index col = 3;
  const Eigen::VectorXd zm = ds.z().cwiseProduct(ds.m());
  if (o.exposure_mediator) out.col(col++) = zm;
  if (o.covariates) append_block(out, col, ds.x());
  if (o.exposure_covariate) append_block(out, col, ds.z().asDiagonal() * ds.x());
  if (o.mediator_covariate) append_block(out, col, ds.m().asDiagonal() * ds.x());
  if (o.exposure_mediator_covariate) append_block(out, col, zm.asDiagonal() * ds.x());
  return {std::move(out), outcome_terms(spec, ds.covariate_names())};
}

void require_full_rank(const Design& design, const std::string& model) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.matrix);
  qr.setThreshold(1e-10);
  const Eigen::Index rank = qr.rank();
  if (rank == design.matrix.cols()) return;
  std::ostringstream msg;
  msg << model << " design is rank deficient (rank " << rank << " of " << design.matrix.cols()
      << "); dependent columns:";
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index k = rank; k < design.matrix.cols(); ++k) {
    msg << " '" << design.columns[static_cast<std::size_t>(perm[k])] << "'";
  }
  throw RankError(msg.str());
}

// ---------------------------------------------------------------------------
// Coefficient layouts

MediatorBlocks expand_mediator(const Eigen::VectorXd& beta, const ModelSpec& spec, Eigen::Index p) {
  if (beta.size() != spec.mediator_size(p)) {
    throw ContractError("mediator coefficient vector has length " + std::to_string(beta.size()) +
                        ", layout requires " + std::to_string(spec.mediator_size(p)));
  }
  MediatorBlocks b;
  b.b0 = beta[0];
  b.b1 = beta[1];
  b.b2 = Eigen::VectorXd::Zero(p);
  b.b3 = Eigen::VectorXd::Zero(p);
  Eigen::Index k = 2;
  if (spec.mediator.covariates) {
    b.b2 = beta.segment(k, p);
    k += p;
  }
  if (spec.mediator.exposure_covariate) b.b3 = beta.segment(k, p);
  return b;
}

OutcomeBlocks expand_outcome(const Eigen::VectorXd& theta, const ModelSpec& spec, Eigen::Index p) {
  if (theta.size() != spec.outcome_size(p)) {
    throw ContractError("outcome coefficient vector has length " + std::to_string(theta.size()) +
                        ", layout requires " + std::to_string(spec.outcome_size(p)));
  }
  const auto& o = spec.outcome;
  OutcomeBlocks t;
  t.t0 = theta[0];
  t.t1 = theta[1];
  t.t2 = theta[2];
  Eigen::Index k = 3;
  if (o.exposure_mediator) t.t3 = theta[k++];
  auto take = [&](bool enabled, Eigen::VectorXd& dst) {
    dst = Eigen::VectorXd::Zero(p);
    if (enabled) {
      dst = theta.segment(k, p);
      k += p;
    }
  };
  take(o.covariates, t.t4);
  take(o.exposure_covariate, t.t5);
  take(o.mediator_covariate, t.t6);
  take(o.exposure_mediator_covariate, t.t7);
  return t;
}

Eigen::VectorXd compress_mediator(const MediatorBlocks& blocks, const ModelSpec& spec) {
  const Eigen::Index p = blocks.b2.size();
  Eigen::VectorXd out(spec.mediator_size(p));
  out[0] = blocks.b0;
  out[1] = blocks.b1;
  Eigen::Index k = 2;
  if (spec.mediator.covariates) {
    out.segment(k, p) = blocks.b2;
    k += p;
  }
  if (spec.mediator.exposure_covariate) out.segment(k, p) = blocks.b3;
  return out;
}

Eigen::VectorXd compress_outcome(const OutcomeBlocks& blocks, const ModelSpec& spec) {
  const Eigen::Index p = blocks.t4.size();
  const auto& o = spec.outcome;
  Eigen::VectorXd out(spec.outcome_size(p));
  out[0] = blocks.t0;
  out[1] = blocks.t1;
  out[2] = blocks.t2;
  Eigen::Index k = 3;
  if (o.exposure_mediator) out[k++] = blocks.t3;
  auto put = [&](bool enabled, const Eigen::VectorXd& src) {
    if (enabled) {
      out.segment(k, p) = src;
      k += p;
    }
  };
  put(o.covariates, blocks.t4);
  put(o.exposure_covariate, blocks.t5);
  put(o.mediator_covariate, blocks.t6);
  put(o.exposure_mediator_covariate, blocks.t7);
  return out;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_decimal(double value) {
  if (value == 0.0) return "0";
  std::array<char, 400> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::fixed);
  if (ec != std::errc()) throw NumericalError("cannot format value");
  return std::string(buf.data(), ptr);
}

LoadedData load_csv(const std::string& path, const ColumnRoles& roles) {
  if (roles.exposure.empty()) throw ConfigError("column roles: exposure column is not mapped");
  if (roles.mediator.empty()) throw ConfigError("column roles: mediator column is not mapped");
  if (roles.outcome.empty()) throw ConfigError("column roles: outcome column is not mapped");

  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": file is empty");
  const auto header = split_csv_line(line, roles.delimiter);

  auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError(path + ": column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t iz = column_of(roles.exposure);
  const std::size_t im = column_of(roles.mediator);
  const std::size_t iy = column_of(roles.outcome);

  // Covariate plan: numeric columns map 1:1, categorical ones to indicators.
  struct Plan {
    std::size_t column;
    const CategoricalColumn* categorical;
    std::vector<std::string> levels;  // non-reference levels
  };
  std::vector<Plan> plans;
  std::vector<std::string> names;
  for (const auto& cov : roles.covariates) {
    Plan plan{column_of(cov), nullptr, {}};
    if (auto it = roles.categorical.find(cov); it != roles.categorical.end()) {
      plan.categorical = &it->second;
      if (it->second.levels.empty()) {
        throw ConfigError("categorical column '" + cov + "' must list its levels");
      }
      const std::string& ref = it->second.reference.empty() ? it->second.levels.front()
                                                              : it->second.reference;
      if (std::find(it->second.levels.begin(), it->second.levels.end(), ref) == it->second.levels.end()) {
        throw ConfigError("categorical column '" + cov + "': reference level '" + ref + "' not in levels");
      }
      for (const auto& level : it->second.levels) {
        if (level == ref) continue;
        plan.levels.push_back(level);
        names.push_back(cov + "=" + level);
      }
    } else {
      names.push_back(cov);
    }
    plans.push_back(std::move(plan));
  }

  std::vector<double> zs, ms, ys;
  std::vector<std::vector<double>> rows;
  std::size_t dropped = 0;
  std::size_t line_no = 1;
  std::vector<std::string> problems;

  auto parse_binary = [&](const std::string& cell, const std::string& column, double& out) {
    if (!parse_double(cell, out) || (out != 0.0 && out != 1.0)) {
      problems.push_back("column '" + column + "' line " + std::to_string(line_no) + ": value '" + cell +
                         "' is not 0/1");
      return false;
    }
    return true;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line, roles.delimiter);
    if (cells.size() != header.size()) {
      throw DataError(path + " line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    bool missing = is_missing(cells[iz]) || is_missing(cells[im]) || is_missing(cells[iy]);
    for (const auto& plan : plans) missing = missing || is_missing(cells[plan.column]);
    if (missing) {
      ++dropped;
      continue;
    }
    double z = 0, m = 0, y = 0;
    bool ok = parse_binary(cells[iz], roles.exposure, z);
    ok = parse_binary(cells[im], roles.mediator, m) && ok;
    ok = parse_binary(cells[iy], roles.outcome, y) && ok;

    std::vector<double> row;
    row.reserve(names.size());
    for (const auto& plan : plans) {
      const std::string& cell = cells[plan.column];
      if (plan.categorical) {
        const auto& levels = plan.categorical->levels;
        if (std::find(levels.begin(), levels.end(), cell) == levels.end()) {
          problems.push_back("column '" + header[plan.column] + "' line " + std::to_string(line_no) +
                             ": unknown level '" + cell + "'");
          ok = false;
        }
        for (const auto& level : plan.levels) row.push_back(cell == level ? 1.0 : 0.0);
      } else {
        double v = 0;
        if (!parse_double(cell, v)) {
          problems.push_back("column '" + header[plan.column] + "' line " + std::to_string(line_no) +
                             ": value '" + cell + "' is not numeric");
          ok = false;
        }
        row.push_back(v);
      }
    }
    if (!ok) continue;
    zs.push_back(z);
    ms.push_back(m);
    ys.push_back(y);
    rows.push_back(std::move(row));
  }

  if (!problems.empty()) {
    std::ostringstream msg;
    msg << path << ": invalid values";
    for (std::size_t k = 0; k < problems.size() && k < 10; ++k) msg << "\n  " << problems[k];
    if (problems.size() > 10) msg << "\n  ... (" << problems.size() << " problems total)";
    throw DataError(msg.str());
  }
  if (zs.empty()) throw DataError(path + ": no complete rows remain after dropping missing values");

  const auto n = static_cast<Eigen::Index>(zs.size());
  const auto p = static_cast<Eigen::Index>(names.size());
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return {Dataset(Eigen::Map<Eigen::VectorXd>(zs.data(), n), Eigen::Map<Eigen::VectorXd>(ms.data(), n),
                  Eigen::Map<Eigen::VectorXd>(ys.data(), n), std::move(x), std::move(names)),
          dropped};
}

void write_csv(const Dataset& ds, const std::string& path, const ColumnRoles& roles) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  const char d = roles.delimiter;
  out << (roles.exposure.empty() ? "z" : roles.exposure) << d << (roles.mediator.empty() ? "m" : roles.mediator)
      << d << (roles.outcome.empty() ? "y" : roles.outcome);
  for (const auto& name : ds.covariate_names()) out << d << name;
  out << '\n';
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    out << format_decimal(ds.z()[i]) << d << format_decimal(ds.m()[i]) << d << format_decimal(ds.y()[i]);
    for (Eigen::Index j = 0; j < ds.p(); ++j) out << d << format_decimal(ds.x()(i, j));
    out << '\n';
  }
  if (!out) throw DataError("error while writing '" + path + "'");
}

}  // namespace medsens
