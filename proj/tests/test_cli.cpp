#include <doctest.h>

#include "mclab/cli.hpp"
#include "mclab/error.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mclab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = MCLAB_SCENARIO_DIR;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mclab_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Outcome {
  int code;
  std::string log;
  std::string err;
  fs::path out;

  [[nodiscard]] json report() const {
    std::ifstream in(out / "report.json");
    return json::parse(in);
  }
};

Outcome run_with(const std::string& command, const json& scenario, const std::string& name,
                 std::optional<std::uint64_t> seed = {}) {
  const fs::path dir = scratch(name);
  std::ofstream(dir / "scenario.json") << scenario.dump(2);
  cli::RunConfig cfg{command, dir / "scenario.json", seed, dir / "out", {}};
  std::ostringstream log, err;
  const int code = cli::run(cfg, log, err);
  return {code, log.str(), err.str(), dir / "out"};
}

json load(const std::string& file) {
  std::ifstream in(kScenarios / file);
  return json::parse(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("check-operator: sigma_1 passes, the quartic source term fails with a witness") {
  json ok = load("check_sigma1.json");
  ok["samples"] = 1000;
  const Outcome a = run_with("check-operator", ok, "sigma1");
  CHECK(a.code == cli::kPass);
  const json ra = a.report();
  CHECK(ra["checks"].size() == 2);
  for (const json& c : ra["checks"]) CHECK(c["verdict"] == "pass");

  const Outcome b = run_with("check-operator", load("check_quartic_source.json"), "quartic-source");
  CHECK(b.code == cli::kFinding);
  const json w = b.report()["checks"][0]["witness"];
  CHECK(w["value"].get<double>() <= -20.0);
  CHECK(w["direction"]["Z"].get<std::vector<double>>() != std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("every report carries hash, seed, version and tolerances") {
  json sc = load("check_sigma1.json");
  sc["samples"] = 200;
  const json r = run_with("check-operator", sc, "header", 42).report();
  CHECK(r["seed"] == 42);
  CHECK(r["version"] == MCLAB_VERSION);
  CHECK(r["config_hash"] == cli::config_hash(sc));
  CHECK(r["tolerances"]["pass"] == 1e-9);
  CHECK(r["tool"] == "mclab");
}

TEST_CASE("identical config and seed give byte-identical outputs") {
  json sc = load("field_quartic.json");
  sc["grid"]["n"] = 41;
  const Outcome a = run_with("analyze-field", sc, "det-a", 3);
  const Outcome b = run_with("analyze-field", sc, "det-b", 3);
  CHECK(a.code == b.code);
  for (const char* f : {"report.json", "rank.mclb", "phi.mclb"}) CHECK(slurp(a.out / f) == slurp(b.out / f));

  json check = load("check_quartic_source.json");
  check["samples"] = 300;
  CHECK(slurp(run_with("check-operator", check, "det-c", 5).out / "report.json") ==
        slurp(run_with("check-operator", check, "det-d", 5).out / "report.json"));
}

TEST_CASE("usage errors exit 1") {
  std::ostringstream log, err;
  cli::RunConfig missing{"flow", "/nonexistent/scenario.json", {}, scratch("missing"), {}};
  CHECK(cli::run(missing, log, err) == cli::kUsage);
  CHECK(err.str().find("cannot open") != std::string::npos);

  cli::RunConfig bad_cmd{"plot", kScenarios / "check_sigma1.json", {}, scratch("badcmd"), {}};
  CHECK(cli::run(bad_cmd, log, err) == cli::kUsage);

  const fs::path dir = scratch("malformed");
  std::ofstream(dir / "s.json") << "{\"operator\": ";
  cli::RunConfig malformed{"check-operator", dir / "s.json", {}, dir, {}};
  CHECK(cli::run(malformed, log, err) == cli::kUsage);

  CHECK(run_with("check-operator", {{"operator", "sigma_9x"}, {"n", 3}}, "unknown-op").code == cli::kUsage);
  CHECK(run_with("check-operator", {{"operator", "sigma_1"}, {"n", 3}, {"tolerances", {{"bogus", 1.0}}}}, "bad-tol").code ==
        cli::kUsage);
  CHECK(run_with("analyze-field", {{"grid", {{"rank", 2}, {"n", 3}, {"lo", 0}, {"hi", 1}}}, {"field", "x"}}, "tiny").code ==
        cli::kUsage);
  CHECK(run_with("analyze-field", {{"grid", {{"rank", 2}, {"n", 11}, {"lo", 0}, {"hi", 1}}}, {"field", "r_11"}}, "bad-field")
            .code == cli::kUsage);
}

TEST_CASE("command-line tolerance overrides reach the report") {
  const fs::path dir = scratch("override");
  json sc = load("check_sigma1.json");
  sc["samples"] = 200;
  std::ofstream(dir / "s.json") << sc.dump();
  cli::RunConfig cfg{"check-operator", dir / "s.json", {}, dir / "out", {{"fail", 1e-4}}};
  std::ostringstream log, err;
  CHECK(cli::run(cfg, log, err) == cli::kPass);
  std::ifstream in(dir / "out" / "report.json");
  CHECK(json::parse(in)["tolerances"]["fail"] == 1e-4);
}

TEST_CASE("analyze-field verdicts") {
  SUBCASE("x^2/2: constant rank") {
    json sc = load("field_half_x2.json");
    sc["grid"]["n"] = 41;
    const Outcome o = run_with("analyze-field", sc, "half-x2");
    CHECK(o.code == cli::kPass);
    const json m = o.report()["monitors"];
    CHECK(m["rank"]["min_rank"] == 1);
    CHECK(m["parallelism"]["angle"].get<double>() <= 1e-6);
    CHECK(m["phi"]["max"].get<double>() <= 1e-10);
  }
  SUBCASE("x^4 + y^4: non-constant rank") {
    json sc = load("field_quartic.json");
    sc["grid"]["n"] = 41;
    const Outcome o = run_with("analyze-field", sc, "quartic");
    CHECK(o.code == cli::kFinding);
    const json m = o.report()["monitors"];
    CHECK(m["rank"]["min_rank"] == 0);
    CHECK(m["rank"]["verdict"] == "finding");
    CHECK(m["convexity"]["verdict"] == "pass");
  }
  SUBCASE("|x|^2/2: full rank, vacuous phi") {
    const Outcome o = run_with("analyze-field", load("field_bowl.json"), "bowl");
    CHECK(o.code == cli::kPass);
    const json m = o.report()["monitors"];
    CHECK(m["rank"]["min_rank"] == 2);
    CHECK(m["phi"]["vacuous"] == true);
    CHECK(m["diffineq"]["vacuous"] == true);
  }
  SUBCASE("field read back from a binary file") {
    json sc = load("field_half_x2.json");
    sc["grid"]["n"] = 41;
    const Outcome first = run_with("analyze-field", sc, "from-file-src");
    json again{{"field", {{"file", (first.out / "rank.mclb").string()}}}, {"monitors", {"rank"}}};
    const Outcome o = run_with("analyze-field", again, "from-file");
    // the rank field itself is piecewise constant, hence of rank 0
    CHECK(o.code == cli::kPass);
    CHECK(o.report()["grid"]["dims"] == json::array({41, 41}));
  }
}

TEST_CASE("flow") {
  SUBCASE("heat from x^4 + y^4 on a coarse grid") {
    json sc = load("flow_heat_quartic.json");
    sc["grid"]["n"] = 41;
    const Outcome o = run_with("flow", sc, "heat");
    CHECK(o.code == cli::kPass);
    CHECK(o.report()["monitors"]["rank_monotonicity"]["min_rank"] == json::array({0, 2, 2, 2, 2, 2}));
    CHECK(fs::exists(o.out / "fields" / "field_0005.mclb"));
    const std::string csv = slurp(o.out / "monitors.csv");
    CHECK(csv.rfind("time,min_rank,lambda_min", 0) == 0);
  }
  SUBCASE("curve shortening of a 2:1 ellipse") {
    const Outcome o = run_with("flow", load("flow_csf_ellipse.json"), "csf");
    CHECK(o.code == cli::kPass);
    const json r = o.report();
    CHECK(r["stopped"] == "collapse");
    CHECK(r["monitors"]["area_rate"]["verdict"] == "pass");
    const std::string csv = slurp(o.out / "monitors.csv");
    CHECK(csv.rfind("time,min_kappa", 0) == 0);
  }
  SUBCASE("oversized fixed step") {
    const Outcome o = run_with("flow", load("flow_unstable.json"), "unstable");
    CHECK(o.code == cli::kRuntime);
    const json r = o.report();
    CHECK(r["error"]["type"] == "StabilityViolation");
    CHECK(r["error"]["time"] == 0.0);
  }
}

TEST_CASE("verify-lemmas") {
  json all = load("lemmas_all.json");
  all["sample_scale"] = 0.1;
  const Outcome o = run_with("verify-lemmas", all, "lemmas");
  CHECK(o.code == cli::kPass);
  CHECK(fs::exists(o.out / "lemma_q_derivatives.json"));
  CHECK(o.report()["results"].size() == 7);

  json mutated = load("lemmas_mutation.json");
  mutated["sample_scale"] = 0.1;
  const Outcome m = run_with("verify-lemmas", mutated, "mutation");
  CHECK(m.code == cli::kFinding);
  CHECK(m.report()["results"]["q_derivatives"] == false);

  CHECK(run_with("verify-lemmas", load("lemmas_empty.json"), "empty").code == cli::kUsage);
  CHECK(run_with("verify-lemmas", {{"suite", {"nope"}}}, "unknown").code == cli::kUsage);
}

TEST_CASE("operator factory") {
  CHECK(cli::make_operator("sigma_2", 3).n() == 3);
  CHECK(cli::make_operator("sigma_2/sigma_1", 3).name().find("sigma") != std::string::npos);
  CHECK(cli::make_operator({{"name", "sigma_k"}, {"n", 2}, {"k", 1}}).n() == 2);
  const auto shifted = cli::make_operator({{"name", "shift"}, {"of", "sigma_1"}, {"identity", 1.0}}, 3);
  CHECK(shifted.value(opcheck::Point::zero(3)) == doctest::Approx(3.0));
  const auto comp = cli::make_operator({{"name", "composition"}, {"g", "f_1^2 + f_2"}, {"of", {"sigma_1", "sigma_2"}}}, 3);
  CHECK(comp.n() == 3);
  CHECK_THROWS((void)cli::make_operator("sigma_1"));
  CHECK_THROWS((void)cli::make_operator({{"name", "mystery"}, {"n", 3}}));
}

TEST_CASE("grid and curve specs") {
  const grid::Grid g = cli::make_grid({{"dims", {11, 21}}, {"lo", {0.0, -1.0}}, {"hi", {1.0, 1.0}}});
  CHECK(g.spacing[0] == doctest::Approx(0.1));
  CHECK(g.spacing[1] == doctest::Approx(0.1));
  const grid::Grid p = cli::make_grid({{"rank", 1}, {"n", 16}, {"lo", 0.0}, {"hi", 1.0}, {"periodic", true}});
  CHECK(p.periodic[0]);
  CHECK(cli::make_curve({{"shape", "circle"}, {"r", 1.0}, {"vertices", 32}}).size() == 32);
  CHECK_THROWS_AS((void)cli::make_curve({{"shape", "circle"}, {"r", 1.0}, {"vertices", 8}}), std::invalid_argument);
}
