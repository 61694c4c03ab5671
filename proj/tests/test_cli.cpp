#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "doctest.h"

#include "cli.hpp"
#include "medsens/error.hpp"
#include "medsens/simgen.hpp"

using namespace medsens;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int code;
  std::string out, err;
};

RunResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "medsens");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = slurp(e.path());
  return files;
}

/// Splits CSV text into rows of cells; double-quoted cells may hold commas.
std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char c = line[i];
      if (c == '"') {
        if (quoted && i + 1 < line.size() && line[i + 1] == '"') {
          cells.back() += '"';
          ++i;
        } else {
          quoted = !quoted;
        }
      } else if (c == ',' && !quoted) {
        cells.emplace_back();
      } else {
        cells.back() += c;
      }
    }
    rows.push_back(cells);
  }
  return rows;
}

// Scratch directory with a simulated dataset (demo scenario, n = 1500) and an
// analysis config pointing at it.
struct Workspace {
  fs::path dir;

  Workspace() {
    dir = fs::temp_directory_path() / ("medsens_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const RunResult sim = run_cli({"simulate", std::string(MEDSENS_SCENARIO_DIR) + "/demo.json", "--out",
                                   (dir / "sim").string(), "--n", "1500", "--seed", "17"});
    REQUIRE(sim.code == 0);
  }
  ~Workspace() { fs::remove_all(dir); }

  fs::path config(const std::string& name, json body) const {
    if (!body.contains("data")) body["data"] = "sim/data.csv";
    if (!body.contains("columns")) {
      body["columns"] = {{"exposure", "z"}, {"mediator", "m"}, {"outcome", "y"}, {"covariates", {"male", "age"}}};
    }
    const fs::path p = dir / name;
    write(p, body.dump(2));
    return p;
  }
};

const Workspace& workspace() {
  static const Workspace ws;
  return ws;
}

const json kEffectsBody = {
    {"model", "main_effects"},
    {"effects",
     {{"types", {"NDE", "NIE", "TE", "NDE*", "NIE*"}},
      {"marginal", true},
      {"profiles", {{{"label", "female"}, {"values", {{"male", 0}}}, {"mean_sd", "age"}}}}}},
    {"scans", {{{"kind", "my"}, {"effects", {"NDE", "NIE"}}, {"grid", "-0.2:0.2:0.1"}}}}};

}  // namespace

TEST_CASE("simulate writes reproducible data and truth") {
  const Workspace& ws = workspace();
  const std::string scen = std::string(MEDSENS_SCENARIO_DIR) + "/demo.json";
  const RunResult again =
      run_cli({"simulate", scen, "--out", (ws.dir / "sim2").string(), "--n", "1500", "--seed", "17"});
  REQUIRE(again.code == 0);
  CHECK(tree(ws.dir / "sim") == tree(ws.dir / "sim2"));
  const RunResult other =
      run_cli({"simulate", scen, "--out", (ws.dir / "sim3").string(), "--n", "1500", "--seed", "18"});
  REQUIRE(other.code == 0);
  CHECK(slurp(ws.dir / "sim" / "data.csv") != slurp(ws.dir / "sim3" / "data.csv"));

  // the file round-trips through the loader
  const Scenario sc = load_scenario(scen);
  ColumnRoles roles{"z", "m", "y", {"male", "age"}, {}, ','};
  const LoadedData loaded = load_csv((ws.dir / "sim" / "data.csv").string(), roles);
  CHECK(loaded.dropped_rows == 0);
  CHECK(loaded.data == simulate(sc.params, 1500, 17));

  const json truth = json::parse(slurp(ws.dir / "sim" / "truth.json"));
  CHECK(truth["seed"] == 17);
  CHECK(truth["n"] == 1500);
  CHECK(truth["confounding"]["kind"] == "my");
  for (const char* scope : {"marginal_sample", "population_mean_profile"}) {
    const json& t = truth["true_effects"][scope];
    CHECK(t["TE"].get<double>() == doctest::Approx(t["NDE"].get<double>() + t["NIE"].get<double>()).epsilon(1e-14));
    CHECK(t["TE"].get<double>() == doctest::Approx(t["NDE*"].get<double>() + t["NIE*"].get<double>()).epsilon(1e-14));
  }
  const double te = truth["true_effects"]["marginal_sample"]["NIE"].get<double>();
  CHECK(te == doctest::Approx(true_effects(sc.params, loaded.data.x()).at(EffectType::NIE)).epsilon(1e-14));

  // scenario errors carry their location
  write(ws.dir / "bad_scenario.json", R"({"alpha": [0], "beta": [0, 1], "theta": [0, 1, 1, 0], "n": -3})");
  const RunResult bad = run_cli({"simulate", (ws.dir / "bad_scenario.json").string()});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("bad_scenario.json") != std::string::npos);
  CHECK(bad.err.find("/n") != std::string::npos);
}

TEST_CASE("fit writes three converged coefficient tables") {
  const Workspace& ws = workspace();
  const fs::path cfg = ws.config("fit.json", {{"out", "fit_out"}});
  const RunResult r = run_cli({"fit", cfg.string()});
  REQUIRE(r.code == 0);
  for (const char* m : {"exposure", "mediator", "outcome"}) {
    const auto rows = csv_rows(slurp(ws.dir / "fit_out" / ("fit_" + std::string(m) + ".csv")));
    CHECK(rows.front() == std::vector<std::string>{"term", "estimate", "std_error", "z", "p_value"});
    CHECK(rows[1][0] == "(Intercept)");
  }
  const json summary = json::parse(slurp(ws.dir / "fit_out" / "fit_summary.json"));
  for (const char* m : {"exposure", "mediator", "outcome"}) CHECK(summary["models"][m]["converged"] == true);
  CHECK(summary["n"] == 1500);

  const auto first = tree(ws.dir / "fit_out");
  REQUIRE(run_cli({"fit", cfg.string()}).code == 0);
  CHECK(tree(ws.dir / "fit_out") == first);
}

TEST_CASE("effects table rows and identities") {
  const Workspace& ws = workspace();
  json body = kEffectsBody;
  body["out"] = "eff_out";
  const RunResult r = run_cli({"effects", ws.config("effects.json", body).string()});
  REQUIRE(r.code == 0);
  const auto rows = csv_rows(slurp(ws.dir / "eff_out" / "effects.csv"));
  REQUIRE(rows.front() ==
          std::vector<std::string>{"effect", "scope", "profile", "estimate", "std_error", "ci_lower", "ci_upper", "alpha"});
  // marginal plus the mean +/- sd expansion into three profiles
  CHECK(rows.size() == 1 + 5 * 4);
  std::map<std::string, std::map<std::string, double>> est;
  for (std::size_t i = 1; i < rows.size(); ++i) est[rows[i][1] + "|" + rows[i][2]][rows[i][0]] = std::stod(rows[i][3]);
  CHECK(est.size() == 4);
  for (const auto& [scope, e] : est) {
    CAPTURE(scope);
    CHECK(std::abs(e.at("TE") - e.at("NDE") - e.at("NIE")) <= 1e-10);
    CHECK(std::abs(e.at("NDE") + e.at("NIE") - e.at("NDE*") - e.at("NIE*")) <= 1e-10);
  }
  CHECK(est.count("conditional|female (male=0,age=mean-1sd)") == 1);
  CHECK(est.count("conditional|female (male=0,age=mean+1sd)") == 1);
  const json ej = json::parse(slurp(ws.dir / "eff_out" / "effects.json"));
  CHECK(ej.dump().find("female (male=0,age=mean)") != std::string::npos);
}

TEST_CASE("sens outputs and the rho = 0 row") {
  const Workspace& ws = workspace();
  json body = kEffectsBody;
  body["out"] = "sens_out";
  const fs::path cfg = ws.config("sens.json", body);
  REQUIRE(run_cli({"effects", cfg.string()}).code == 0);
  const RunResult r = run_cli({"sens", cfg.string()});
  REQUIRE(r.code == 0);
  const fs::path out = ws.dir / "sens_out";
  for (const char* f : {"scan1_my_NDE.csv", "scan1_my_NIE.csv", "sens_summary.json", "sens_summary.txt", "sens_failures.csv"}) {
    CHECK(fs::exists(out / f));
  }
  const auto eff = csv_rows(slurp(out / "effects.csv"));
  const auto scan = csv_rows(slurp(out / "scan1_my_NIE.csv"));
  CHECK(scan.front() == std::vector<std::string>{"rho", "estimate", "std_error", "ci_lower", "ci_upper", "converged"});
  CHECK(scan.size() == 6);
  double marginal_nie = 0.0;
  for (const auto& row : eff) {
    if (row[0] == "NIE" && row[1] == "marginal") marginal_nie = std::stod(row[3]);
  }
  bool found = false;
  for (const auto& row : scan) {
    if (row[0] == "0") {
      found = true;
      CHECK(std::abs(std::stod(row[1]) - marginal_nie) <= 1e-6);
      CHECK(row[5] == "1");
    }
  }
  CHECK(found);
  CHECK(slurp(out / "sens_failures.csv") == "scan,kind,rho,reason\n");

  const json summary = json::parse(slurp(out / "sens_summary.json"));
  const json& s0 = summary["scans"][0];
  CHECK(s0["kind"] == "my");
  CHECK(s0["points"] == 5);
  CHECK(s0["identification_set"][0].get<double>() <= s0["identification_set"][1].get<double>());
  CHECK(s0["uncertainty_interval"][0].get<double>() <= s0["identification_set"][0].get<double>());
  CHECK(slurp(out / "sens_summary.txt").find("identification set: [") != std::string::npos);

  // byte-identical reruns, sequential or parallel
  const auto first = tree(out);
  REQUIRE(run_cli({"effects", cfg.string()}).code == 0);
  REQUIRE(run_cli({"sens", cfg.string()}).code == 0);
  CHECK(tree(out) == first);
  REQUIRE(run_cli({"sens", cfg.string(), "--parallel", "on"}).code == 0);
  CHECK(tree(out) == first);
}

TEST_CASE("every emitted number is plain decimal") {
  const Workspace& ws = workspace();
  json body = kEffectsBody;
  body["out"] = "plain_out";
  const fs::path cfg = ws.config("plain.json", body);
  for (const char* cmd : {"fit", "effects", "sens"}) REQUIRE(run_cli({cmd, cfg.string()}).code == 0);
  const std::regex exponent("[0-9][eE][-+]?[0-9]");
  const std::regex digits("-?[0-9]+\\.[0-9]+");
  for (const auto& [name, text] : tree(ws.dir / "plain_out")) {
    CAPTURE(name);
    CHECK_FALSE(std::regex_search(text, exponent));
  }
  // estimates carry at least ten significant digits
  const auto rows = csv_rows(slurp(ws.dir / "plain_out" / "effects.csv"));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::string d = rows[i][3];
    d.erase(std::remove_if(d.begin(), d.end(), [](char c) { return c == '-' || c == '.'; }), d.end());
    d.erase(0, d.find_first_not_of('0'));
    CHECK(d.size() >= 10);
  }

  CHECK(cli::dump_plain(json{{"a", 1e-20}, {"b", 3.5e21}, {"s", "1e5"}}) ==
        "{\n  \"a\": 0.00000000000000000001,\n  \"b\": 3500000000000000000000,\n  \"s\": \"1e5\"\n}");
}

TEST_CASE("error exit codes") {
  const Workspace& ws = workspace();

  // rank deficiency: a duplicated covariate column
  {
    std::ifstream in(ws.dir / "sim" / "data.csv");
    std::ofstream out(ws.dir / "dup.csv");
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      const std::string last = line.substr(line.rfind(',') + 1);
      out << line << "," << (header ? "age_copy" : last) << "\n";
      header = false;
    }
  }
  json rank = {{"data", "dup.csv"},
               {"columns", {{"exposure", "z"}, {"mediator", "m"}, {"outcome", "y"}, {"covariates", {"male", "age", "age_copy"}}}},
               {"out", "rank_out"}};
  const RunResult r1 = run_cli({"fit", ws.config("rank.json", rank).string()});
  CHECK(r1.code == 1);
  CHECK(r1.err.find("rank deficient") != std::string::npos);
  CHECK(r1.err.find("age_copy") != std::string::npos);

  // unknown profile covariate
  json prof = kEffectsBody;
  prof["out"] = "prof_out";
  const RunResult r2 = run_cli({"effects", ws.config("prof.json", prof).string(), "--profile", "weight=3"});
  CHECK(r2.code == 2);
  CHECK(r2.err.find("unknown covariate 'weight'") != std::string::npos);

  // simultaneous confounding kinds
  json both = {{"scans", {{{"kind", {"my", "zy"}}}}}};
  const RunResult r3 = run_cli({"sens", ws.config("both.json", both).string()});
  CHECK(r3.code == 2);
  CHECK(r3.err.find("separately") != std::string::npos);

  // malformed flags and config keys
  CHECK(run_cli({"effects", ws.config("a.json", kEffectsBody).string(), "--alpha", "1.5"}).code == 2);
  CHECK(run_cli({"sens", ws.config("g.json", kEffectsBody).string(), "--grid", "0.5:0.1"}).code == 2);
  CHECK(run_cli({"fit", ws.config("k.json", {{"colour", 1}}).string()}).code == 2);
  CHECK(run_cli({"fit", (ws.dir / "missing.json").string()}).code == 2);
  CHECK(run_cli({"unknown"}).code != 0);

  // mediator perfectly predicted by the covariate
  {
    std::ofstream sep(ws.dir / "sep.csv");
    sep << "z,m,y,age\n";
    for (int i = 0; i < 200; ++i) {
      const double age = (i % 7) * 0.3;
      sep << (i / 3) % 2 << "," << (age > 0.9 ? 1 : 0) << "," << (i / 5) % 2 << "," << age << "\n";
    }
  }
  json sep = {{"data", "sep.csv"},
              {"columns", {{"exposure", "z"}, {"mediator", "m"}, {"outcome", "y"}, {"covariates", {"age"}}}},
              {"out", "sep_out"}};
  const RunResult r4 = run_cli({"fit", ws.config("sep.json", sep).string()});
  CHECK(r4.code == 1);
  CHECK(r4.err.find("separation") != std::string::npos);
}

TEST_CASE("profile requests") {
  const cli::ProfileRequest req = cli::parse_profile_flag("male=1,age=mean+-sd");
  REQUIRE(req.values.size() == 2);
  CHECK(req.values[0] == std::pair<std::string, std::string>{"male", "1"});

  Eigen::MatrixXd x(4, 2);
  x << 0, 1, 1, 2, 0, 3, 1, 4;
  const Dataset ds(Eigen::Vector4d(0, 1, 0, 1), Eigen::Vector4d(0, 0, 1, 1), Eigen::Vector4d(1, 0, 1, 0), x,
                   {"male", "age"});
  const auto profs = cli::resolve_profiles(req, ds);
  REQUIRE(profs.size() == 3);
  const double sd = std::sqrt(5.0 / 3.0);
  CHECK(profs[0].x(0) == 1.0);
  CHECK(profs[0].x(1) == doctest::Approx(2.5 - sd));
  CHECK(profs[1].x(1) == 2.5);
  CHECK(profs[2].x(1) == doctest::Approx(2.5 + sd));
  CHECK(profs[1].label == "male=1,age=mean");

  const auto at_mean = cli::resolve_profiles(cli::parse_profile_flag("age=mean"), ds);
  REQUIRE(at_mean.size() == 1);
  CHECK(at_mean[0].x(0) == 0.5);

  CHECK_THROWS_AS(cli::parse_profile_flag("male"), ConfigError);
  CHECK_THROWS_AS(cli::resolve_profiles(cli::parse_profile_flag("male=often"), ds), ConfigError);
  CHECK_THROWS_AS(cli::resolve_profiles(cli::parse_profile_flag("height=1"), ds), ConfigError);
}

TEST_CASE("MEDSENS_THREADS is validated") {
  const Workspace& ws = workspace();
  json body = kEffectsBody;
  body["out"] = "thr_out";
  const fs::path cfg = ws.config("thr.json", body);
  ::setenv("MEDSENS_THREADS", "zero", 1);
  CHECK(run_cli({"sens", cfg.string()}).code == 2);
  ::setenv("MEDSENS_THREADS", "1", 1);
  CHECK(run_cli({"sens", cfg.string(), "--parallel", "on"}).code == 0);
  ::unsetenv("MEDSENS_THREADS");
}
