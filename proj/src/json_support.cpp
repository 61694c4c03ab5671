#include "medsens/json_support.hpp"

#include <fstream>
#include <sstream>

#include "medsens/error.hpp"

namespace medsens {

namespace {

std::string line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

void apply_flag(const nlohmann::json& obj, const std::string& key, bool& flag, const std::string& where) {
  if (obj.contains(key)) flag = json_bool(obj.at(key), where + "/" + key);
}

void reject_unknown(const nlohmann::json& obj, std::initializer_list<std::string_view> known,
                    const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

}  // namespace

nlohmann::json parse_json_text(std::string_view text, const std::string& source) {
  try {
    return nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    std::string msg = e.what();
    const auto cut = msg.find("syntax error");
    if (cut != std::string::npos) msg = msg.substr(cut);
    throw ConfigError(source + ":" + line_col(text, byte) + ": " + msg);
  }
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_json_text(buf.str(), path);
}

const nlohmann::json& require_member(const nlohmann::json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(where + ": missing required key '" + key + "'");
  return *it;
}

double json_number(const nlohmann::json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  return j.get<double>();
}

std::string json_string(const nlohmann::json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + ": expected a string");
  return j.get<std::string>();
}

bool json_bool(const nlohmann::json& j, const std::string& where) {
  if (!j.is_boolean()) throw ConfigError(where + ": expected true or false");
  return j.get<bool>();
}

ModelSpec model_spec_from_json(const nlohmann::json& j, const std::string& where) {
  auto preset = [&](const std::string& name, const std::string& at) {
    if (name == "full") return ModelSpec::full();
    if (name == "main_effects") return ModelSpec::main_effects();
    throw ConfigError(at + ": unknown model preset '" + name + "' (expected full or main_effects)");
  };
  if (j.is_string()) return preset(j.get<std::string>(), where);
  if (!j.is_object()) throw ConfigError(where + ": expected a preset name or an object");
  reject_unknown(j, {"preset", "exposure", "mediator", "outcome"}, where);

  ModelSpec spec = j.contains("preset") ? preset(json_string(j.at("preset"), where + "/preset"), where + "/preset")
                                        : ModelSpec::main_effects();
  if (j.contains("exposure")) {
    const auto& e = j.at("exposure");
    const std::string at = where + "/exposure";
    reject_unknown(e, {"covariates"}, at);
    apply_flag(e, "covariates", spec.exposure.covariates, at);
  }
  if (j.contains("mediator")) {
    const auto& m = j.at("mediator");
    const std::string at = where + "/mediator";
    reject_unknown(m, {"covariates", "exposure_covariate"}, at);
    apply_flag(m, "covariates", spec.mediator.covariates, at);
    apply_flag(m, "exposure_covariate", spec.mediator.exposure_covariate, at);
  }
  if (j.contains("outcome")) {
    const auto& o = j.at("outcome");
    const std::string at = where + "/outcome";
    reject_unknown(o,
                   {"exposure_mediator", "covariates", "exposure_covariate", "mediator_covariate",
                    "exposure_mediator_covariate"},
                   at);
    apply_flag(o, "exposure_mediator", spec.outcome.exposure_mediator, at);
    apply_flag(o, "covariates", spec.outcome.covariates, at);
    apply_flag(o, "exposure_covariate", spec.outcome.exposure_covariate, at);
    apply_flag(o, "mediator_covariate", spec.outcome.mediator_covariate, at);
    apply_flag(o, "exposure_mediator_covariate", spec.outcome.exposure_mediator_covariate, at);
  }
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return spec;
}

nlohmann::json model_spec_to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["exposure"] = {{"covariates", spec.exposure.covariates}};
  j["mediator"] = {{"covariates", spec.mediator.covariates},
                   {"exposure_covariate", spec.mediator.exposure_covariate}};
  j["outcome"] = {{"exposure_mediator", spec.outcome.exposure_mediator},
                  {"covariates", spec.outcome.covariates},
                  {"exposure_covariate", spec.outcome.exposure_covariate},
                  {"mediator_covariate", spec.outcome.mediator_covariate},
                  {"exposure_mediator_covariate", spec.outcome.exposure_mediator_covariate}};
  return j;
}

}  // namespace medsens
