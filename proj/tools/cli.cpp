#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "medsens/error.hpp"
#include "medsens/json_support.hpp"
#include "medsens/probit.hpp"
#include "medsens/simgen.hpp"

namespace medsens::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNotConverged = 3;

std::string num(double v) { return std::isfinite(v) ? format_decimal(v) : "NA"; }

json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

fs::path prepare_out(const AnalysisConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec) throw ConfigError("cannot create output directory '" + cfg.out.string() + "': " + ec.message());
  return cfg.out;
}

LoadedData load_data(const AnalysisConfig& cfg, std::ostream& log) {
  if (cfg.data.empty()) throw ConfigError(cfg.source.string() + ": no \"data\" path configured");
  LoadedData loaded = load_csv(cfg.data.string(), cfg.columns);
  if (loaded.dropped_rows > 0) {
    log << "dropped " << loaded.dropped_rows << " incomplete row(s) from " << cfg.data.string() << "\n";
  }
  return loaded;
}

std::vector<EffectType> effect_list(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty array of effect names");
  std::vector<EffectType> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string at = where + "/" + std::to_string(i);
    try {
      out.push_back(parse_effect_type(json_string(j[i], at)));
    } catch (const ConfigError& e) {
      throw ConfigError(at + ": " + e.what());
    }
  }
  return out;
}

ProfileRequest profile_from_json(const json& j, const std::string& where) {
  ProfileRequest req;
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "mean") {
      req.label = "mean";
      return req;
    }
    return parse_profile_flag(s);
  }
  if (!j.is_object()) throw ConfigError(where + ": expected \"mean\", NAME=VALUE text or an object");
  if (j.contains("label")) req.label = json_string(j.at("label"), where + "/label");
  if (j.contains("values")) {
    const auto& v = j.at("values");
    if (!v.is_object()) throw ConfigError(where + "/values: expected an object");
    for (const auto& [name, value] : v.items()) {
      const std::string at = where + "/values/" + name;
      if (value.is_number()) {
        req.values.emplace_back(name, format_decimal(value.get<double>()));
      } else {
        req.values.emplace_back(name, json_string(value, at));
      }
    }
  }
  if (j.contains("mean_sd")) {
    req.values.emplace_back(json_string(j.at("mean_sd"), where + "/mean_sd"), "mean+-sd");
  }
  return req;
}

ColumnRoles roles_from_json(const json& j, const std::string& where) {
  ColumnRoles roles;
  roles.exposure = json_string(require_member(j, "exposure", where), where + "/exposure");
  roles.mediator = json_string(require_member(j, "mediator", where), where + "/mediator");
  roles.outcome = json_string(require_member(j, "outcome", where), where + "/outcome");
  if (j.contains("covariates")) {
    const auto& cs = j.at("covariates");
    if (!cs.is_array()) throw ConfigError(where + "/covariates: expected an array");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      roles.covariates.push_back(json_string(cs[i], where + "/covariates/" + std::to_string(i)));
    }
  }
  if (j.contains("categorical")) {
    const auto& cat = j.at("categorical");
    if (!cat.is_object()) throw ConfigError(where + "/categorical: expected an object");
    for (const auto& [name, spec] : cat.items()) {
      const std::string at = where + "/categorical/" + name;
      CategoricalColumn col;
      const auto& levels = require_member(spec, "levels", at);
      if (!levels.is_array()) throw ConfigError(at + "/levels: expected an array");
      for (std::size_t i = 0; i < levels.size(); ++i) {
        col.levels.push_back(json_string(levels[i], at + "/levels/" + std::to_string(i)));
      }
      col.reference = json_string(require_member(spec, "reference", at), at + "/reference");
      roles.categorical[name] = std::move(col);
    }
  }
  if (j.contains("delimiter")) {
    const std::string d = json_string(j.at("delimiter"), where + "/delimiter");
    if (d.size() != 1) throw ConfigError(where + "/delimiter: expected a single character");
    roles.delimiter = d[0];
  }
  return roles;
}

ScanRequest scan_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  ScanRequest req;
  const auto& kind = require_member(j, "kind", where);
  if (!kind.is_string()) {
    throw ConfigError(where + "/kind: give exactly one confounding kind; the sensitivity analysis evaluates each "
                              "type of unobserved confounding separately, not simultaneously");
  }
  try {
    req.kind = parse_confounding_kind(kind.get<std::string>());
  } catch (const ConfigError& e) {
    throw ConfigError(where + "/kind: " + e.what());
  }
  if (j.contains("effects")) req.effects = effect_list(j.at("effects"), where + "/effects");
  if (j.contains("grid")) req.grid = json_string(j.at("grid"), where + "/grid");
  if (j.contains("profile")) req.profile = profile_from_json(j.at("profile"), where + "/profile");
  if (j.contains("refine")) req.refine = json_bool(j.at("refine"), where + "/refine");
  if (j.contains("resolution")) req.resolution = json_number(j.at("resolution"), where + "/resolution");
  if (j.contains("joint_covariance")) {
    req.joint_covariance = json_bool(j.at("joint_covariance"), where + "/joint_covariance");
  }
  if (!(req.resolution > 0.0)) throw ConfigError(where + "/resolution: must be positive");
  RhoGrid::parse(req.grid);  // validate early
  return req;
}

void check_alpha(double alpha, const std::string& where) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError(where + ": alpha must lie in (0, 1)");
}

int max_threads_from_env() {
  const char* v = std::getenv("MEDSENS_THREADS");
  if (!v || !*v) return 2;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("MEDSENS_THREADS must be a positive integer");
  return static_cast<int>(std::min<long>(n, 2));
}

json coefficient_rows(const ProbitFit& fit) {
  json rows = json::array();
  const Eigen::VectorXd se = fit.std_errors();
  for (Eigen::Index k = 0; k < fit.coefficients.size(); ++k) {
    const double est = fit.coefficients(k);
    const double z = est / se(k);
    rows.push_back({{"term", fit.terms[static_cast<std::size_t>(k)]},
                    {"estimate", jnum(est)},
                    {"std_error", jnum(se(k))},
                    {"z", jnum(z)},
                    {"p_value", jnum(2.0 * norm_cdf(-std::abs(z)))}});
  }
  return rows;
}

std::string coefficient_csv(const ProbitFit& fit) {
  std::ostringstream os;
  os << "term,estimate,std_error,z,p_value\n";
  const Eigen::VectorXd se = fit.std_errors();
  for (Eigen::Index k = 0; k < fit.coefficients.size(); ++k) {
    const double est = fit.coefficients(k);
    const double z = est / se(k);
    os << fit.terms[static_cast<std::size_t>(k)] << "," << num(est) << "," << num(se(k)) << "," << num(z) << ","
       << num(2.0 * norm_cdf(-std::abs(z))) << "\n";
  }
  return os.str();
}

json fit_json(const ProbitFit& fit) {
  return {{"converged", fit.converged},
          {"iterations", fit.iterations},
          {"loglik", jnum(fit.loglik)},
          {"gradient_norm", jnum(fit.gradient_norm)},
          {"coefficients", coefficient_rows(fit)}};
}

std::string effect_file_token(EffectType t) {
  switch (t) {
    case EffectType::NDE_total: return "NDEstar";
    case EffectType::NIE_pure: return "NIEstar";
    default: return std::string(to_string(t));
  }
}

json estimate_json(const EffectEstimate& e) {
  json j = {{"effect", std::string(to_string(e.effect_type))},
            {"scope", e.marginal ? "marginal" : "conditional"},
            {"profile", e.marginal ? "" : e.scope_label},
            {"estimate", jnum(e.estimate)},
            {"std_error", jnum(e.std_error)},
            {"ci_lower", jnum(e.ci_lower)},
            {"ci_upper", jnum(e.ci_upper)},
            {"alpha", jnum(e.alpha)}};
  return j;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

EffectScope scope_for(const std::optional<ProfileRequest>& req, const Dataset& ds) {
  if (!req) return EffectScope::marginal();
  auto profiles = resolve_profiles(*req, ds);
  if (profiles.size() != 1) throw ConfigError("a scan profile must describe a single covariate pattern");
  return EffectScope::conditional(std::move(profiles.front()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

ProfileRequest parse_profile_flag(const std::string& text) {
  ProfileRequest req;
  if (text == "mean") {
    req.label = "mean";
    return req;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size()) {
      throw ConfigError("profile '" + text + "': expected NAME=VALUE[,NAME=VALUE...]");
    }
    req.values.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  if (req.values.empty()) throw ConfigError("profile '" + text + "' is empty");
  return req;
}

std::vector<CovariateProfile> resolve_profiles(const ProfileRequest& request, const Dataset& ds) {
  const Eigen::Index p = ds.p();
  const Eigen::Index n = ds.n();
  Eigen::VectorXd mean = p > 0 ? Eigen::VectorXd(ds.x().colwise().mean().transpose()) : Eigen::VectorXd(0);
  Eigen::VectorXd sd(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double ss = (ds.x().col(j).array() - mean(j)).square().sum();
    sd(j) = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  }

  struct Variant {
    Eigen::VectorXd x;
    std::string label;
  };
  std::vector<Variant> variants{{mean, ""}};
  for (const auto& [name, value] : request.values) {
    Eigen::Index j = 0;
    try {
      j = ds.covariate_index(name);
    } catch (const ConfigError&) {
      throw ConfigError("profile refers to unknown covariate '" + name + "'");
    }
    std::vector<std::pair<double, std::string>> options;
    if (value == "mean") {
      options = {{mean(j), name + "=mean"}};
    } else if (value == "mean-sd") {
      options = {{mean(j) - sd(j), name + "=mean-1sd"}};
    } else if (value == "mean+sd") {
      options = {{mean(j) + sd(j), name + "=mean+1sd"}};
    } else if (value == "mean+-sd") {
      options = {{mean(j) - sd(j), name + "=mean-1sd"}, {mean(j), name + "=mean"}, {mean(j) + sd(j), name + "=mean+1sd"}};
    } else {
      double v = 0.0;
      std::size_t used = 0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != value.size() || !std::isfinite(v)) {
        throw ConfigError("profile value '" + value + "' for '" + name + "' is not a number, mean, mean-sd, mean+sd or mean+-sd");
      }
      options = {{v, name + "=" + value}};
    }
    std::vector<Variant> next;
    for (const auto& base : variants) {
      for (const auto& [v, lbl] : options) {
        Variant var = base;
        var.x(j) = v;
        var.label = var.label.empty() ? lbl : var.label + "," + lbl;
        next.push_back(std::move(var));
      }
    }
    variants = std::move(next);
  }

  std::vector<CovariateProfile> out;
  for (auto& v : variants) {
    std::string label = v.label.empty() ? "mean" : v.label;
    if (!request.label.empty()) label = variants.size() == 1 ? request.label : request.label + " (" + label + ")";
    out.push_back({std::move(v.x), std::move(label)});
  }
  return out;
}

AnalysisConfig load_config(const fs::path& path) {
  const json j = read_json_file(path.string());
  const std::string root = path.string() + ":";
  if (!j.is_object()) throw ConfigError(root + " config must be a JSON object");
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  AnalysisConfig cfg;
  cfg.source = path;
  if (j.contains("theta")) {
    cfg.simulate = SimulateRequest{path, std::nullopt};
    return cfg;
  }
  static const std::vector<std::string> known{"data", "columns", "model", "effects", "scans", "simulate",
                                              "alpha", "out", "seed", "parallel"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(root + " unknown key '" + key + "'");
    }
  }
  if (j.contains("data")) cfg.data = resolve(json_string(j.at("data"), root + "/data"));
  if (j.contains("columns")) {
    cfg.columns = roles_from_json(j.at("columns"), root + "/columns");
  } else {
    cfg.columns.exposure = "z";
    cfg.columns.mediator = "m";
    cfg.columns.outcome = "y";
  }
  if (j.contains("model")) cfg.spec = model_spec_from_json(j.at("model"), root + "/model");
  if (j.contains("effects")) {
    const auto& e = j.at("effects");
    const std::string at = root + "/effects";
    if (!e.is_object()) throw ConfigError(at + ": expected an object");
    if (e.contains("types")) cfg.effects.types = effect_list(e.at("types"), at + "/types");
    if (e.contains("marginal")) cfg.effects.marginal = json_bool(e.at("marginal"), at + "/marginal");
    if (e.contains("profiles")) {
      const auto& ps = e.at("profiles");
      if (!ps.is_array()) throw ConfigError(at + "/profiles: expected an array");
      for (std::size_t i = 0; i < ps.size(); ++i) {
        cfg.effects.profiles.push_back(profile_from_json(ps[i], at + "/profiles/" + std::to_string(i)));
      }
    }
  }
  if (j.contains("scans")) {
    const auto& s = j.at("scans");
    if (!s.is_array()) throw ConfigError(root + "/scans: expected an array");
    for (std::size_t i = 0; i < s.size(); ++i) {
      cfg.scans.push_back(scan_from_json(s[i], root + "/scans/" + std::to_string(i)));
    }
  }
  if (j.contains("simulate")) {
    const auto& s = j.at("simulate");
    const std::string at = root + "/simulate";
    SimulateRequest req;
    req.scenario = resolve(json_string(require_member(s, "scenario", at), at + "/scenario"));
    if (s.contains("n")) {
      if (!s.at("n").is_number_integer() || s.at("n").get<long long>() < 1) {
        throw ConfigError(at + "/n: expected a positive integer");
      }
      req.n = s.at("n").get<long long>();
    }
    cfg.simulate = req;
  }
  if (j.contains("alpha")) cfg.alpha = json_number(j.at("alpha"), root + "/alpha");
  check_alpha(cfg.alpha, root + "/alpha");
  if (j.contains("out")) cfg.out = resolve(json_string(j.at("out"), root + "/out"));
  if (j.contains("seed")) {
    const auto& s = j.at("seed");
    if (!s.is_number_integer() || s.get<long long>() < 0) throw ConfigError(root + "/seed: expected a non-negative integer");
    cfg.seed = s.get<std::uint64_t>();
  }
  if (j.contains("parallel")) cfg.parallel = json_bool(j.at("parallel"), root + "/parallel");
  return cfg;
}

void apply_overrides(AnalysisConfig& cfg, const std::multimap<std::string, std::string>& flags) {
  bool cleared_profiles = false;
  for (const auto& [key, value] : flags) {
    if (key == "out") {
      cfg.out = value;
    } else if (key == "alpha") {
      std::size_t used = 0;
      double a = 0.0;
      try {
        a = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != value.size()) throw ConfigError("--alpha: '" + value + "' is not a number");
      check_alpha(a, "--alpha");
      cfg.alpha = a;
    } else if (key == "grid") {
      RhoGrid::parse(value);
      if (cfg.scans.empty()) cfg.scans.push_back({});
      for (auto& s : cfg.scans) s.grid = value;
    } else if (key == "kind") {
      const ConfoundingKind kind = parse_confounding_kind(value);
      if (cfg.scans.empty()) cfg.scans.push_back({});
      for (auto& s : cfg.scans) s.kind = kind;
    } else if (key == "profile") {
      if (!cleared_profiles) {
        cfg.effects.profiles.clear();
        cleared_profiles = true;
      }
      cfg.effects.profiles.push_back(parse_profile_flag(value));
    } else if (key == "seed") {
      std::size_t used = 0;
      unsigned long long s = 0;
      try {
        s = std::stoull(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != value.size() || value.empty() || value[0] == '-') {
        throw ConfigError("--seed: '" + value + "' is not a non-negative integer");
      }
      cfg.seed = s;
    } else if (key == "parallel") {
      if (value != "on" && value != "off") throw ConfigError("--parallel expects on or off");
      cfg.parallel = value == "on";
    } else if (key == "n") {
      std::size_t used = 0;
      long long n = 0;
      try {
        n = std::stoll(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != value.size() || n < 1) throw ConfigError("--n: expected a positive integer");
      if (!cfg.simulate) throw ConfigError("--n applies to simulate configs only");
      cfg.simulate->n = n;
    } else {
      throw ConfigError("unknown option '" + key + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Commands

int cmd_fit(const AnalysisConfig& cfg, std::ostream& log) {
  const LoadedData loaded = load_data(cfg, log);
  const Dataset& ds = loaded.data;
  cfg.spec.validate();
  ds.validate_for_fitting();
  const fs::path out = prepare_out(cfg);

  struct Model {
    const char* name;
    ProbitFit fit;
  };
  std::vector<Model> models;
  models.push_back({"exposure", fit_probit(build_exposure_design(ds, cfg.spec), ds.z())});
  models.push_back({"mediator", fit_probit(build_mediator_design(ds, cfg.spec), ds.m())});
  models.push_back({"outcome", fit_probit(build_outcome_design(ds, cfg.spec), ds.y())});

  json summary = {{"n", ds.n()}, {"dropped_rows", loaded.dropped_rows}, {"model", model_spec_to_json(cfg.spec)}};
  bool all_converged = true;
  for (const auto& m : models) {
    const fs::path file = out / ("fit_" + std::string(m.name) + ".csv");
    write_text(file, coefficient_csv(m.fit));
    summary["models"][m.name] = fit_json(m.fit);
    log << m.name << " model: " << (m.fit.converged ? "converged" : "NOT converged") << " in " << m.fit.iterations
        << " iterations, loglik " << num(m.fit.loglik) << "\n";
    all_converged = all_converged && m.fit.converged;
  }
  write_text(out / "fit_summary.json", dump_plain(summary) + "\n");
  log << "wrote " << (out / "fit_summary.json").string() << "\n";
  return all_converged ? 0 : kExitNotConverged;
}

int cmd_effects(const AnalysisConfig& cfg, std::ostream& log) {
  const LoadedData loaded = load_data(cfg, log);
  const Dataset& ds = loaded.data;
  cfg.spec.validate();
  ds.validate_for_fitting();

  std::vector<EffectScope> scopes;
  if (cfg.effects.marginal) scopes.push_back(EffectScope::marginal());
  for (const auto& req : cfg.effects.profiles) {
    for (auto& prof : resolve_profiles(req, ds)) scopes.push_back(EffectScope::conditional(std::move(prof)));
  }
  if (scopes.empty()) throw ConfigError("effects: nothing requested (marginal disabled and no profiles)");
  const fs::path out = prepare_out(cfg);

  const ProbitFit mediator = fit_probit(build_mediator_design(ds, cfg.spec), ds.m());
  const ProbitFit outcome = fit_probit(build_outcome_design(ds, cfg.spec), ds.y());
  FitContext ctx;
  ctx.spec = cfg.spec;
  ctx.beta = mediator.coefficients;
  ctx.sigma_beta = mediator.covariance;
  ctx.beta_converged = mediator.converged;
  ctx.theta = outcome.coefficients;
  ctx.sigma_theta = outcome.covariance;
  ctx.theta_converged = outcome.converged;

  std::ostringstream csv;
  csv << "effect,scope,profile,estimate,std_error,ci_lower,ci_upper,alpha\n";
  json rows = json::array();
  for (const auto& scope : scopes) {
    for (EffectType t : cfg.effects.types) {
      const EffectEstimate e = effect_with_ci(t, scope, ctx, ds.x(), cfg.alpha);
      csv << to_string(t) << "," << (e.marginal ? "marginal" : "conditional") << ","
          << csv_field(e.marginal ? "" : e.scope_label) << "," << num(e.estimate) << "," << num(e.std_error) << ","
          << num(e.ci_lower) << "," << num(e.ci_upper) << "," << num(e.alpha) << "\n";
      rows.push_back(estimate_json(e));
    }
  }
  write_text(out / "effects.csv", csv.str());
  json summary = {{"n", ds.n()}, {"dropped_rows", loaded.dropped_rows}, {"alpha", cfg.alpha}, {"effects", rows}};
  write_text(out / "effects.json", dump_plain(summary) + "\n");
  log << "wrote " << rows.size() << " effect rows to " << (out / "effects.csv").string() << "\n";
  return 0;
}

int cmd_sens(const AnalysisConfig& cfg, std::ostream& log) {
  const LoadedData loaded = load_data(cfg, log);
  const Dataset& ds = loaded.data;
  if (cfg.scans.empty()) throw ConfigError("sens: no scans configured (add \"scans\" or pass --kind)");
  cfg.spec.validate();
  ds.validate_for_fitting();
  const int threads = max_threads_from_env();
  const fs::path out = prepare_out(cfg);

  std::ostringstream failures_csv, text;
  failures_csv << "scan,kind,rho,reason\n";
  json scans_json = json::array();
  bool baseline_ok = true;

  for (std::size_t i = 0; i < cfg.scans.size(); ++i) {
    const ScanRequest& req = cfg.scans[i];
    const std::string tag = "scan" + std::to_string(i + 1);
    ScanOptions options;
    options.parallel = cfg.parallel;
    options.max_threads = threads;
    options.joint_covariance = req.joint_covariance;
    const RhoGrid grid = RhoGrid::parse(req.grid);
    const EffectScope scope = scope_for(req.profile, ds);

    auto inputs = prepare_scan_inputs(ds, cfg.spec, options);
    for (const ProbitFit* f : {&inputs->exposure, &inputs->mediator, &inputs->outcome}) {
      baseline_ok = baseline_ok && f->converged;
    }
    const ScanFits fits = fit_scan_grid(req.kind, grid, inputs);
    for (const auto& gf : fits.points) {
      if (!gf.converged) {
        failures_csv << tag << "," << short_code(req.kind) << "," << num(gf.rho) << "," << csv_field(gf.failure)
                     << "\n";
      }
    }

    for (EffectType effect : req.effects) {
      const SensitivityScan scan = evaluate_scan(fits, effect, scope, cfg.alpha);
      const std::string file = tag + "_" + std::string(short_code(req.kind)) + "_" + effect_file_token(effect) + ".csv";
      std::ostringstream csv;
      csv << "rho,estimate,std_error,ci_lower,ci_upper,converged\n";
      for (const auto& pt : scan.per_point) {
        csv << num(pt.rho) << ",";
        if (pt.converged && pt.estimate) {
          csv << num(pt.estimate->estimate) << "," << num(pt.estimate->std_error) << "," << num(pt.estimate->ci_lower)
              << "," << num(pt.estimate->ci_upper) << ",1\n";
        } else {
          csv << "NA,NA,NA,NA,0\n";
        }
      }
      write_text(out / file, csv.str());

      const IntervalResult is = identification_set(scan);
      const IntervalResult ui = uncertainty_interval(scan);
      const SignRanges sr = sign_ranges(scan);
      json ranges = json::array();
      for (const auto& r : sr.ranges) {
        ranges.push_back({{"rho_lower", r.rho_lower},
                          {"rho_upper", r.rho_upper},
                          {"class", std::string(to_string(r.classification))},
                          {"description", describe(r, cfg.alpha)}});
      }
      json brackets = json::array();
      std::vector<BoundaryBracket> refined;
      if (req.refine) refined = refine_boundary(scan, req.resolution);
      for (const auto& b : refined) {
        brackets.push_back({{"lower", b.lower},
                            {"upper", b.upper},
                            {"below", std::string(to_string(b.below))},
                            {"above", std::string(to_string(b.above))},
                            {"refined", b.refined},
                            {"warning", b.warning}});
      }
      std::vector<std::string> warnings = scan.warnings;
      warnings.insert(warnings.end(), sr.warnings.begin(), sr.warnings.end());
      for (const auto& b : refined) {
        if (!b.warning.empty()) warnings.push_back(b.warning);
      }

      scans_json.push_back({{"scan", tag},
                            {"file", file},
                            {"kind", std::string(short_code(req.kind))},
                            {"effect", std::string(to_string(effect))},
                            {"scope", scope.label()},
                            {"grid", req.grid},
                            {"alpha", cfg.alpha},
                            {"points", scan.per_point.size()},
                            {"failed_points", scan.failures().size()},
                            {"identification_set", {is.lower, is.upper}},
                            {"uncertainty_interval", {ui.lower, ui.upper}},
                            {"reference_rho", sr.reference_rho},
                            {"reference_sign", sr.reference_sign},
                            {"sign_ranges", ranges},
                            {"boundaries", brackets},
                            {"warnings", warnings}});

      text << tag << " " << to_string(req.kind) << " " << to_string(effect) << " (" << scope.label() << "), rho grid "
           << req.grid << "\n";
      text << "  identification set: [" << num(is.lower) << ", " << num(is.upper) << "]\n";
      text << "  " << (1.0 - cfg.alpha) * 100.0 << "% uncertainty interval: [" << num(ui.lower) << ", "
           << num(ui.upper) << "]\n";
      for (const auto& r : sr.ranges) text << "  " << describe(r, cfg.alpha) << "\n";
      for (const auto& b : refined) {
        text << "  boundary " << to_string(b.below) << " -> " << to_string(b.above) << " in [" << num(b.lower) << ", "
             << num(b.upper) << "]" << (b.refined ? "" : " (not refined)") << "\n";
      }
      for (const auto& w : warnings) text << "  warning: " << w << "\n";
      log << "wrote " << (out / file).string() << "\n";
    }
  }

  write_text(out / "sens_summary.json", dump_plain({{"n", ds.n()}, {"dropped_rows", loaded.dropped_rows}, {"scans", scans_json}}) + "\n");
  write_text(out / "sens_summary.txt", text.str());
  write_text(out / "sens_failures.csv", failures_csv.str());
  log << text.str();
  return baseline_ok ? 0 : kExitNotConverged;
}

int cmd_simulate(const AnalysisConfig& cfg, std::ostream& log) {
  if (!cfg.simulate) throw ConfigError(cfg.source.string() + ": no \"simulate\" section and not a scenario file");
  const Scenario sc = load_scenario(cfg.simulate->scenario.string());
  Eigen::Index n = 0;
  if (cfg.simulate->n) {
    n = static_cast<Eigen::Index>(*cfg.simulate->n);
  } else if (sc.n) {
    n = *sc.n;
  } else {
    throw ConfigError(cfg.simulate->scenario.string() + ": sample size not given (set \"n\" or pass --n)");
  }
  const std::uint64_t seed = cfg.seed ? *cfg.seed : sc.seed.value_or(1);
  const fs::path out = prepare_out(cfg);

  const Dataset ds = simulate(sc.params, n, seed);
  write_csv(ds, (out / "data.csv").string());

  const TrueParams& tp = sc.params;
  Eigen::VectorXd pop_mean(tp.p());
  for (Eigen::Index j = 0; j < tp.p(); ++j) pop_mean(j) = tp.covariates[static_cast<std::size_t>(j)].mean();
  auto effects_json = [](const EffectMap& m) {
    json j;
    for (const auto& [t, v] : m) j[std::string(to_string(t))] = v;
    return j;
  };
  json covs = json::array();
  for (const auto& c : tp.covariates) {
    static const char* kinds[] = {"constant", "uniform", "normal", "bernoulli"};
    covs.push_back({{"name", c.name}, {"dist", kinds[static_cast<int>(c.kind)]}, {"a", c.a}, {"b", c.b}});
  }
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json truth = {{"seed", seed},
                {"n", n},
                {"model", model_spec_to_json(tp.spec)},
                {"covariates", covs},
                {"alpha", vec(tp.alpha)},
                {"beta", vec(tp.beta)},
                {"theta", vec(tp.theta)},
                {"confounding", tp.confounding ? json{{"kind", std::string(short_code(tp.confounding->kind))},
                                                      {"rho", tp.confounding->rho.value()}}
                                               : json(nullptr)},
                {"true_effects",
                 {{"marginal_sample", effects_json(true_effects(tp, ds.x()))},
                  {"population_mean_profile", effects_json(true_effects(tp, CovariateProfile{pop_mean, "population mean"}))}}}};
  write_text(out / "truth.json", dump_plain(truth) + "\n");
  log << "simulated " << n << " rows (seed " << seed << ") to " << (out / "data.csv").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

std::string dump_plain(const json& j) {
  const std::string raw = j.dump(2);
  std::string out;
  out.reserve(raw.size());
  bool in_string = false;
  for (std::size_t i = 0; i < raw.size();) {
    const char c = raw[i];
    if (in_string) {
      out += c;
      if (c == '\\' && i + 1 < raw.size()) {
        out += raw[i + 1];
        i += 2;
        continue;
      }
      if (c == '"') in_string = false;
      ++i;
      continue;
    }
    if (c == '"') {
      in_string = true;
      out += c;
      ++i;
      continue;
    }
    if (c == '-' || (c >= '0' && c <= '9')) {
      std::size_t end = i + 1;
      while (end < raw.size() && std::string_view("0123456789.eE+-").find(raw[end]) != std::string_view::npos) ++end;
      const std::string token = raw.substr(i, end - i);
      if (token.find_first_of("eE") != std::string::npos) {
        out += format_decimal(std::stod(token));
      } else {
        out += token;
      }
      i = end;
      continue;
    }
    out += c;
    ++i;
  }
  return out;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Causal mediation effects for binary variables with probit sensitivity analysis", "medsens"};
  app.require_subcommand(1);

  struct Flags {
    std::string config;
    std::string out, alpha, grid, kind, seed, parallel, n;
    std::vector<std::string> profiles;
  };
  Flags flags;
  const std::vector<std::pair<std::string, std::string>> descriptions{
      {"fit", "Fit the exposure, mediator and outcome probit models"},
      {"effects", "Estimate natural direct, indirect and total effects"},
      {"sens", "Sensitivity scans over the error correlation"},
      {"simulate", "Draw a synthetic dataset from a scenario"}};
  for (const auto& [name, desc] : descriptions) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("config", flags.config, "Analysis config (JSON) or, for simulate, a scenario file")->required();
    sub->add_option("--out", flags.out, "Output directory");
    sub->add_option("--alpha", flags.alpha, "Significance level for the CIs");
    sub->add_option("--grid", flags.grid, "rho grid LO:HI:STEP");
    sub->add_option("--kind", flags.kind, "Confounding kind: zm, my or zy");
    sub->add_option("--profile", flags.profiles, "Covariate profile NAME=VALUE,... (repeatable)");
    sub->add_option("--seed", flags.seed, "Random seed for simulate");
    sub->add_option("--parallel", flags.parallel, "on or off");
    if (name == "simulate") sub->add_option("--n", flags.n, "Number of rows");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    AnalysisConfig cfg = load_config(flags.config);
    std::multimap<std::string, std::string> overrides;
    auto put = [&](const char* key, const std::string& v) {
      if (!v.empty()) overrides.emplace(key, v);
    };
    put("out", flags.out);
    put("alpha", flags.alpha);
    put("grid", flags.grid);
    put("kind", flags.kind);
    put("seed", flags.seed);
    put("parallel", flags.parallel);
    put("n", flags.n);
    for (const auto& p : flags.profiles) overrides.emplace("profile", p);
    apply_overrides(cfg, overrides);

    if (command == "fit") return cmd_fit(cfg, out);
    if (command == "effects") return cmd_effects(cfg, out);
    if (command == "sens") return cmd_sens(cfg, out);
    return cmd_simulate(cfg, out);
  } catch (const ConfigError& e) {
    err << "medsens " << command << ": configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NotConvergedError& e) {
    err << "medsens " << command << ": " << e.what() << "\n";
    return kExitNotConverged;
  } catch (const Error& e) {
    err << "medsens " << command << ": error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    err << "medsens " << command << ": unexpected failure: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace medsens::cli
