#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "perfhom/cli.hpp"

using namespace perfhom;
namespace fs = std::filesystem;

namespace {

const char* two_hole_ini = R"(experiment = reflect
eps0 = 0.25
[geometry]
kind = two_hole
a = 0.05
d = 0.5
[vorticity]
shape = disk
center = -1.0,0.5
radius = 0.3
[solver]
depth = 4
h = 0.03125
)";

RunConfig parse(const std::string& text, std::optional<std::uint64_t> seed = std::nullopt) {
  std::istringstream is(text);
  return parse_config(is, seed);
}

std::string invariant_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.invariant();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("perfhom_test_config_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(RunConfig, ParsesBlocks) {
  const auto c = parse(two_hole_ini);
  EXPECT_EQ(c.experiment, "reflect");
  EXPECT_TRUE(c.has_geometry);
  EXPECT_EQ(c.geometry.kind, "two_hole");
  EXPECT_DOUBLE_EQ(c.geometry.a, 0.05);
  EXPECT_DOUBLE_EQ(c.vorticity.center.x, -1.0);
  EXPECT_DOUBLE_EQ(c.vorticity.center.y, 0.5);
  EXPECT_EQ(c.solver.depth, 4);
  EXPECT_DOUBLE_EQ(c.solver.h, 0.03125);
  EXPECT_FALSE(c.solver.domain.has_value());
}

TEST(RunConfig, HashIsStableAndSeedSensitive) {
  EXPECT_EQ(config_hash(parse(two_hole_ini)), config_hash(parse(two_hole_ini)));
  EXPECT_NE(config_hash(parse(two_hole_ini)), config_hash(parse(two_hole_ini, 9)));
  EXPECT_EQ(parse(two_hole_ini, 9).geometry.seed, 9u);
}

TEST(RunConfig, InvariantsAreNamed) {
  std::string bad = two_hole_ini;
  bad.replace(bad.find("eps0 = 0.25"), 11, "eps0 = 0.6");
  EXPECT_EQ(invariant_of(bad), "eps0");
  EXPECT_EQ(invariant_of("experiment = nope\n[vorticity]\nshape = disk\n"), "experiment");
  EXPECT_EQ(invariant_of("experiment = reflect\n[vorticity]\nshape = disk\n"), "block:geometry");
  EXPECT_EQ(invariant_of("experiment = reflect\n[lattice]\nn = 4\nepsilon = 0.3\n"), "a_over_d");
  EXPECT_EQ(invariant_of("experiment = reflect\n[lattice]\nn = 4\n[vorticity]\nradius = -1\n"), "vorticity.radius");
  EXPECT_EQ(invariant_of("experiment = reflect\n[lattice]\nn = 4\n[solver]\nh = abc\n"), "parse:solver.h");
  EXPECT_EQ(invariant_of("experiment = homog\n[k]\nsource = zero\n"), "solver.domain");
  EXPECT_EQ(invariant_of("experiment = homog\n[k]\nsource = zero\n[solver]\ndomain = 0,0,1\n"), "parse:solver.domain");
  EXPECT_EQ(invariant_of("experiment = divcurl\n[lattice]\nn = 4\n[solver]\ndomain = -1,-1,2,2\n"), "analysis.probe");
  EXPECT_EQ(invariant_of("experiment = sweep\n[lattice]\nn = 4\n"), "block:sweep");
  EXPECT_EQ(invariant_of("experiment = sweep\n[lattice]\nn = 4\n[sweep]\nparameter = knorm\nvalues = 1\n"),
            "sweep.parameter");
  EXPECT_EQ(invariant_of("experiment = euler\n[euler]\ndt = 0\n[vorticity]\nshape = pair\n"), "euler.dt");
  EXPECT_EQ(invariant_of("experiment = reflect\n[geometry]\nkind = hexagon\n"), "geometry.kind");
  EXPECT_EQ(invariant_of("experiment = reflect\n[lattice\n"), "syntax");
  EXPECT_EQ(invariant_of(two_hole_ini), "");
}

TEST(RunConfig, CommandMustMatchFile) {
  std::istringstream is(two_hole_ini);
  EXPECT_THROW(parse_config(is, std::nullopt, "homog"), ConfigError);
  std::istringstream ok("[vorticity]\nshape = pair\n");
  EXPECT_EQ(parse_config(ok, std::nullopt, "euler").experiment, "euler");
}

TEST(Commands, TwoHoleContractionIsClosedForm) {
  const auto dir = scratch("two_hole");
  const auto s = run_experiment(parse(two_hole_ini), dir);
  const auto& r = s["results"];
  EXPECT_EQ(s["schema"], "v1");
  EXPECT_NEAR(r["contraction"]["ratio"].get<double>(), 0.01, 1e-10);
  EXPECT_TRUE(r["closed_form"]["matches"].get<bool>());
  EXPECT_TRUE(fs::exists(dir / "dipoles.csv"));
  EXPECT_TRUE(fs::exists(dir / "norms.csv"));
  EXPECT_TRUE(s["tolerances"].contains("solver_tol"));
  fs::remove_all(dir);
}

TEST(Commands, DeterministicOutputs) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  run_experiment(parse(two_hole_ini), a);
  run_experiment(parse(two_hole_ini), b);
  for (const char* f : {"dipoles.csv", "norms.csv", "summary.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Commands, HomogZeroKOneIteration) {
  const auto dir = scratch("homog");
  const auto s = run_experiment(parse("experiment = homog\n[vorticity]\nshape = disk\ncenter = 0,0\nradius = 0.3\n"
                                      "[k]\nsource = zero\n[solver]\nh = 0.0625\ndomain = -1,-1,1,1\n"),
                                dir);
  EXPECT_EQ(s["results"]["runs"][0]["iterations"], 1);
  const auto csv = slurp(dir / "sweep.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "knorm,err_psi0,err_tilde,iterations");
  fs::remove_all(dir);
}

TEST(Commands, PairPeriod) {
  const auto dir = scratch("pair");
  const auto s = run_experiment(parse("experiment = euler\n[vorticity]\nshape = pair\ncenter = 0,0\nradius = 0.5\n"
                                      "amplitude = 1\n[euler]\ndt = 0.1\nT = 19.74\nblob = 0.025\noutput_every = 50\n"),
                                dir);
  const auto& r = s["results"];
  EXPECT_LT(r["period"]["rel_err"].get<double>(), 0.02);
  EXPECT_TRUE(r["weights_conserved"].get<bool>());
  fs::remove_all(dir);
}

TEST(RunConfig, MalformedGeometryValue) {
  EXPECT_EQ(invariant_of("experiment = reflect\n[lattice]\nn = four\n"), "parse:geometry");
  EXPECT_EQ(invariant_of("experiment = reflect\neps0 = x\n[lattice]\nn = 4\n"), "parse:geometry");
}
