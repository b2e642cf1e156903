#include "oracles.hpp"

#include "mvfhn/cli.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mvfhn;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = MVFHN_FIXTURE_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "mvfhn_cli_io" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args, const std::vector<std::string>& env = {}) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err, env);
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> read_kv(const fs::path& file) {
  std::map<std::string, std::string> kv;
  std::ifstream in(file);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

// Small fast settings shared by the end-to-end runs.
const std::vector<std::string> kSmall{"MVFHN_GRID_N=33", "MVFHN_SCHEME_M=16", "MVFHN_SCHEME_T_END=0.5",
                                      "MVFHN_CHECK_SAMPLES=20000"};

std::vector<std::string> with(std::vector<std::string> env, const std::vector<std::string>& extra) {
  env.insert(env.end(), extra.begin(), extra.end());
  return env;
}

}  // namespace

TEST_SUITE("cli_io") {

TEST_CASE("law files round-trip byte for byte") {
  const GridPtr g = make_grid(1, 8.0, 17);
  std::mt19937_64 rng(3);
  const EmpiricalLaw law(g, oracle::random_atoms(*g, rng, 4), {0.1, 0.2, 0.3, 0.4});
  const fs::path dir = scratch("law");
  write_law(dir / "a", law);
  const EmpiricalLaw back = read_law(dir / "a", g);
  write_law(dir / "b", back);
  CHECK(slurp(dir / "a" / "atoms.csv") == slurp(dir / "b" / "atoms.csv"));
  CHECK(slurp(dir / "a" / "weights.csv") == slurp(dir / "b" / "weights.csv"));
  for (std::size_t j = 0; j < law.size(); ++j) {
    CHECK(back.weight(j) == law.weight(j));
    CHECK(back.atom(j).u == law.atom(j).u);
    CHECK(back.atom(j).v == law.atom(j).v);
  }

  const GridPtr g9 = make_grid(1, 8.0, 9);
  for (const char* name : {"law_a", "law_b"}) {
    write_law(dir / name, read_law(kFixtures / name, g9));
    CHECK(slurp(dir / name / "atoms.csv") == slurp(kFixtures / name / "atoms.csv"));
    CHECK(slurp(dir / name / "weights.csv") == slurp(kFixtures / name / "weights.csv"));
  }
}

TEST_CASE("field files round-trip byte for byte") {
  const SpatialGrid g(1, 8.0, 33);
  std::mt19937_64 rng(5);
  const FieldPair k = oracle::random_pair(g, rng);
  const fs::path dir = scratch("field");
  write_field(dir / "a.csv", g, k);
  const FieldPair back = read_field(dir / "a.csv", g);
  write_field(dir / "b.csv", g, back);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(back.u == k.u);
  CHECK(back.v == k.v);
  CHECK_THROWS_AS(read_field(dir / "a.csv", SpatialGrid(1, 8.0, 17)), FormatError);
}

TEST_CASE("malformed law files are rejected") {
  const GridPtr g = make_grid(1, 8.0, 9);
  const fs::path dir = scratch("bad_law");
  CHECK_THROWS_AS(read_law(dir / "missing", g), FormatError);
  write_law(dir / "ok", read_law(kFixtures / "law_a", g));
  {
    std::ofstream f(dir / "ok" / "weights.csv");
    f << "index,weight\n0,1\n";
  }
  CHECK_THROWS_AS(read_law(dir / "ok", g), FormatError);
  CHECK_THROWS_AS(read_law(kFixtures / "law_a", make_grid(1, 8.0, 8)), FormatError);
}

TEST_CASE("config text round-trips and rejects unknown keys") {
  RunConfig cfg = RunConfig::from_text("# comment\nmodel.lambda = 2.5\n\ngrid.N = 65   # trailing\n");
  CHECK(cfg.get_double("model.lambda") == 2.5);
  CHECK(cfg.get_int("grid.N") == 65);
  const std::string text = cfg.serialize();
  CHECK(RunConfig::from_text(text).serialize() == text);
  CHECK(RunConfig::from_text(text).hash() == cfg.hash());
  CHECK(cfg.hash().size() == 16);
  CHECK(RunConfig().hash() != cfg.hash());

  CHECK(RunConfig::from_file(kFixtures / "fixture.cfg").get_int("grid.N") == 9);

  try {
    RunConfig::from_text("model.lamda = 1\n");
    FAIL("unknown key accepted");
  } catch (const ConfigError& e) {
    CHECK(e.key == "model.lamda");
  }
  CHECK_THROWS_AS(RunConfig::from_text("just words\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("grid.N = 9.5\n").get_int("grid.N"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("scheme.noise = maybe\n").get_bool("scheme.noise"), ConfigError);
  CHECK(RunConfig().get_list("pullback.depths") == std::vector<double>{5, 10, 20, 40});
}

TEST_CASE("environment overrides") {
  RunConfig cfg;
  cfg.apply_environment({"PATH=/bin", "MVFHN_SCHEME_T_END=3", "MVFHN_PICARD_MAX_ITERS=2", "MVFHN_GRID_N=9"});
  CHECK(cfg.get_double("scheme.t_end") == 3.0);
  CHECK(cfg.get_int("picard.max_iters") == 2);
  CHECK(cfg.get_int("grid.N") == 9);
  CHECK_THROWS_AS(cfg.apply_environment({"MVFHN_MODEL_NOPE=1"}), ConfigError);
}

TEST_CASE("manifest entries keep insertion order and update in place") {
  const fs::path dir = scratch("manifest");
  RunManifest m(dir / "manifest.txt");
  m.set("status", "running");
  m.set("value", 0.1);
  m.set("status", "ok");
  m.write();
  CHECK(slurp(dir / "manifest.txt") == "status = ok\nvalue = 0.10000000000000001\n");
}

TEST_CASE("check command exit codes and reports") {
  const fs::path dir = scratch("check");
  const Run ok = cli({"check", "--out", (dir / "ok").string()}, kSmall);
  CHECK(ok.code == exit_ok);
  CHECK(fs::exists(dir / "ok" / "assumptions.csv"));
  const auto manifest = read_kv(dir / "ok" / "manifest.txt");
  CHECK(manifest.at("status") == "ok");
  CHECK(manifest.at("exit_code") == "0");
  CHECK(manifest.at("config_hash").size() == 16);
  CHECK(manifest.count("omitted_hs_fraction") == 1);
  CHECK(manifest.count("w_boundary_ratio") == 1);
  CHECK(manifest.count("started_utc") == 1);
  CHECK(manifest.count("finished_utc") == 1);
  CHECK(std::stod(manifest.at("dissipativity_margin")) > 0.0);
  const RunConfig defaults;
  for (const auto& [key, value] : defaults.values()) CHECK(manifest.count("config." + key) == 1);

  const Run bad = cli({"check", "--out", (dir / "bad").string()},
                      with(kSmall, {"MVFHN_MODEL_LAMBDA=0.01", "MVFHN_MODEL_AUTO_SCALE=false"}));
  CHECK(bad.code == exit_assumption);
  const auto report = read_kv(dir / "bad" / "check_report.txt");
  CHECK(std::stod(report.at("margin")) < 0.0);
  CHECK(report.at("result") == "fail");

  const fs::path cfg = dir / "typo.cfg";
  std::ofstream(cfg) << "model.lambdaa = 1\n";
  const Run typo = cli({"check", "--config", cfg.string(), "--out", (dir / "typo").string()});
  CHECK(typo.code == exit_usage);
  CHECK(typo.err.find("model.lambdaa") != std::string::npos);

  CHECK(cli({}).code == exit_usage);
  CHECK(cli({"bogus"}).code == exit_usage);
}

TEST_CASE("simulate writes series, estimates and a reproducible manifest") {
  const fs::path dir = scratch("simulate");
  const auto env = with(kSmall, {"MVFHN_SCHEME_T_END=2"});
  const Run a = cli({"simulate", "--seed", "17", "--out", (dir / "a").string()}, env);
  const Run b = cli({"simulate", "--seed", "17", "--threads", "2", "--out", (dir / "b").string()}, env);
  CHECK(a.code == exit_ok);
  CHECK(b.code == exit_ok);
  for (const char* f : {"series.csv", "estimates.csv", "final_field.csv", "tail_profile.csv", "final_law/atoms.csv"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  const std::string estimates = slurp(dir / "a" / "estimates.csv");
  for (const char* name : {"energy", "fourth_moment", "tail", "h1"}) CHECK(estimates.find(name) != std::string::npos);
  CHECK(read_kv(dir / "a" / "manifest.txt").at("seed") == "17");

  const Run c = cli({"simulate", "--seed", "18", "--out", (dir / "c").string()}, env);
  CHECK(slurp(dir / "a" / "series.csv") != slurp(dir / "c" / "series.csv"));
}

TEST_CASE("zero dynamics simulate to a constant series") {
  const fs::path dir = scratch("zero");
  const Run r = cli({"simulate", "--out", dir.string()}, with(kSmall, {"MVFHN_MODEL_KIND=zero", "MVFHN_SCHEME_T_END=1"}));
  CHECK(r.code == exit_ok);
  std::ifstream in(dir / "series.csv");
  std::string line;
  std::getline(in, line);
  std::vector<std::string> energies;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    for (int col = 0; col < 4; ++col) std::getline(ss, cell, ',');
    energies.push_back(cell);
  }
  REQUIRE(energies.size() >= 2);
  for (const auto& e : energies) CHECK(e == energies.front());
}

TEST_CASE("picard command") {
  const fs::path dir = scratch("picard");
  const std::vector<std::string> env = with(kSmall, {"MVFHN_PICARD_M=32", "MVFHN_PICARD_DT=0.01"});
  const Run decoupled = cli({"picard", "--out", (dir / "a").string()}, with(env, {"MVFHN_MODEL_EPS_COUPLE=0"}));
  CHECK(decoupled.code == exit_ok);
  CHECK(decoupled.out.find("iteration 1") != std::string::npos);

  const Run capped = cli({"picard", "--out", (dir / "b").string()}, with(env, {"MVFHN_PICARD_MAX_ITERS=1"}));
  CHECK(capped.code == exit_not_converged);
  CHECK(capped.err.find("not converged") != std::string::npos);
  CHECK(cli({"picard", "--out", (dir / "c").string()}, with(env, {"MVFHN_PICARD_MAX_ITERS=0"})).code == exit_usage);
}

TEST_CASE("pullback command exit codes") {
  const fs::path dir = scratch("pullback");
  const std::vector<std::string> env =
      with(kSmall, {"MVFHN_PULLBACK_MEMBERS=16", "MVFHN_PULLBACK_REPLICATES=2", "MVFHN_PULLBACK_CALIBRATION_TIME=4"});

  CHECK(cli({"pullback", "--out", (dir / "one").string()}, with(env, {"MVFHN_PULLBACK_DEPTHS=5"})).code == exit_usage);

  const Run control = cli({"pullback", "--out", (dir / "auto").string()},
                          with(env, {"MVFHN_MODEL_OMEGA=0", "MVFHN_PULLBACK_DEPTHS=1,2,4"}));
  CHECK(control.code == exit_ok);
  CHECK(fs::exists(dir / "auto" / "pullback.csv"));
  CHECK(fs::exists(dir / "auto" / "tightness.csv"));
  CHECK(read_kv(dir / "auto" / "pullback_report.txt").at("cauchy_ok") == "true");

  const Run violating = cli({"pullback", "--out", (dir / "viol").string()},
                            with(env, {"MVFHN_PULLBACK_FAMILY=violating", "MVFHN_PULLBACK_DEPTHS=1,2,4"}));
  CHECK(violating.code == exit_class_violation);
  CHECK(read_kv(dir / "viol" / "pullback_report.txt").at("class_violation") == "true");
}

TEST_CASE("w2 command") {
  const std::string a = (kFixtures / "law_a").string();
  const std::string b = (kFixtures / "law_b").string();
  const std::vector<std::string> env{"MVFHN_GRID_N=9"};

  const Run self = cli({"w2", a, a}, env);
  CHECK(self.code == exit_ok);
  CHECK(self.out == "metric,value,flag\nw2_exact,0,1\n");

  const double oracle_value = std::stod(slurp(kFixtures / "w2_oracle.txt"));
  const Run pair = cli({"w2", "--config", (kFixtures / "fixture.cfg").string(), a, b});
  REQUIRE(pair.code == exit_ok);
  const auto comma = pair.out.find("w2_exact,");
  REQUIRE(comma != std::string::npos);
  const double value = std::stod(pair.out.substr(comma + 9));
  CHECK(value == doctest::Approx(oracle_value).epsilon(1e-12));
  CHECK(value == doctest::Approx(4.1128294802159422).epsilon(1e-12));

  CHECK(cli({"w2", a, (kFixtures / "nowhere").string()}, env).code == exit_usage);
  CHECK(cli({"w2", a}, env).code == exit_usage);
}

}  // TEST_SUITE
