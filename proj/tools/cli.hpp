#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "medsens/datamodel.hpp"
#include "medsens/effects.hpp"
#include "medsens/sensitivity.hpp"

namespace medsens::cli {

/// One requested covariate pattern. Values are numbers or the keywords
/// "mean", "mean-sd", "mean+sd"; "mean+-sd" on one covariate expands the
/// request into three profiles. Unlisted covariates sit at the sample mean.
struct ProfileRequest {
  std::string label;  // optional explicit label
  std::vector<std::pair<std::string, std::string>> values;
};

struct EffectsRequest {
  std::vector<EffectType> types{EffectType::NDE, EffectType::NIE, EffectType::TE};
  bool marginal = true;
  std::vector<ProfileRequest> profiles;
};

struct ScanRequest {
  ConfoundingKind kind = ConfoundingKind::MediatorOutcome;
  std::vector<EffectType> effects{EffectType::NDE, EffectType::NIE};
  std::string grid = "-0.9:0.9:0.01";
  std::optional<ProfileRequest> profile;  // marginal when absent
  bool refine = true;
  double resolution = 0.01;
  bool joint_covariance = false;
};

struct SimulateRequest {
  std::filesystem::path scenario;
  std::optional<long long> n;
};

struct AnalysisConfig {
  std::filesystem::path source;  // config file, for messages
  std::filesystem::path data;
  ColumnRoles columns;
  ModelSpec spec = ModelSpec::main_effects();
  EffectsRequest effects;
  std::vector<ScanRequest> scans;
  std::optional<SimulateRequest> simulate;
  double alpha = 0.05;
  std::filesystem::path out = "medsens_out";
  std::optional<std::uint64_t> seed;  // falls back to the scenario seed, then 1
  bool parallel = false;
};

/// Reads the JSON analysis config; relative paths resolve against the config
/// file's directory. A scenario file (top-level "theta") is accepted as a
/// simulate-only config.
AnalysisConfig load_config(const std::filesystem::path& path);

/// Applies command-line overrides: "out", "alpha", "grid", "kind", "profile"
/// (repeatable), "seed", "parallel", "n".
void apply_overrides(AnalysisConfig& cfg, const std::multimap<std::string, std::string>& flags);

ProfileRequest parse_profile_flag(const std::string& text);
std::vector<CovariateProfile> resolve_profiles(const ProfileRequest& request, const Dataset& ds);

int cmd_fit(const AnalysisConfig& cfg, std::ostream& log);
int cmd_effects(const AnalysisConfig& cfg, std::ostream& log);
int cmd_sens(const AnalysisConfig& cfg, std::ostream& log);
int cmd_simulate(const AnalysisConfig& cfg, std::ostream& log);

/// JSON text in which every number is written in plain decimal form.
std::string dump_plain(const nlohmann::json& j);

/// Entry point; returns the process exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace medsens::cli
