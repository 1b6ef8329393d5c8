#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "freebound/pipeline.hpp"

using namespace freebound;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

const char* kSmall = R"(name: small
problem:
  diffusion: {family: gbm, drift: 0.0, sigma: 0.3}
  gain: {family: straddle, K: 1.0}
  rate: 0.05
  horizon: 1.0
grid: {x_min: 0.2, x_max: 3.4, nx: 81, nt: 40}
mc: {n_paths: 400, dt: 0.01, seed: 7}
verify: {x0: 1.0, exit: [0.5, 2.0], positivity_levels: 5, random_triples: 2}
)";

int error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ValidationError& e) {
    return e.line();
  }
  return -1;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("freebound_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, PresetsParse) {
  for (const char* name : {"straddle.yaml", "cancellable-straddle.yaml", "put.yaml"}) {
    const auto c = parse_config(slurp(fs::path(FREEBOUND_CONFIG_DIR) / name));
    EXPECT_FALSE(c.name.empty()) << name;
    EXPECT_EQ(c.grid.nx, 401u) << name;
    EXPECT_NO_THROW(build_problem(c)) << name;
  }
  const auto put = parse_config(slurp(fs::path(FREEBOUND_CONFIG_DIR) / "put.yaml"));
  ASSERT_TRUE(put.gain.d.has_value());
  EXPECT_DOUBLE_EQ(*put.gain.d, 0.5);
}

TEST(Config, UnknownKeysCarryLineNumbers) {
  std::string text = kSmall;
  text.replace(text.find("horizon: 1.0"), 12, "horizn: 1.0");
  EXPECT_EQ(error_line(text), 6);
  EXPECT_EQ(error_line(std::string(kSmall) + "extra: 1\n"), 10);
}

TEST(Config, RejectsInvalidValues) {
  auto swap = [](std::string from, std::string to) {
    std::string t = kSmall;
    t.replace(t.find(from), from.size(), to);
    return t;
  };
  EXPECT_GT(error_line(swap("horizon: 1.0", "horizon: 0.0")), 0);
  EXPECT_EQ(error_line(swap("nx: 81", "nx: 8")), 7);
  EXPECT_GT(error_line(swap("rate: 0.05", "rate: -0.05")), 0);
  EXPECT_GT(error_line(swap("family: straddle", "family: butterfly")), 0);
  EXPECT_GT(error_line(swap("sigma: 0.3", "sigma: 0.0")), 0);
  EXPECT_GT(error_line(swap("exit: [0.5, 2.0]", "exit: [2.0, 0.5]")), 0);
  EXPECT_NE(error_line("problem: [1, 2\n"), -1);
}

TEST(Config, AtomOutsideWindowRejected) {
  std::string t = kSmall;
  t.replace(t.find("K: 1.0"), 6, "K: 5.0");
  EXPECT_THROW(build_problem(parse_config(t)), ValidationError);
}

TEST(Config, TabulatedRate) {
  std::string t = kSmall;
  t.replace(t.find("rate: 0.05"), 10, "rate: {x: [0.0, 2.0], values: [0.02, 0.06]}");
  const auto c = parse_config(t);
  const auto r = c.rate.function();
  EXPECT_DOUBLE_EQ(r(1.0), 0.04);
  EXPECT_DOUBLE_EQ(r(5.0), 0.06);
}

TEST(Pipeline, DryRunWritesNothing) {
  auto c = parse_config(kSmall);
  const auto dir = scratch("dry");
  RunOptions o;
  o.dry_run = true;
  o.out = dir.string();
  std::ostringstream log;
  EXPECT_EQ(run(c, o, log), kExitPass);
  EXPECT_FALSE(fs::exists(dir));
  EXPECT_NE(log.str().find("atom node 20"), std::string::npos) << log.str();
}

TEST(Pipeline, RerunsAreByteIdentical) {
  const auto c = parse_config(kSmall);
  const auto a = scratch("a"), b = scratch("b");
  RunOptions o;
  std::ostringstream log;
  o.out = a.string();
  run(c, o, log);
  o.out = b.string();
  run(c, o, log);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
  }
  EXPECT_GE(files, 6u);
}

TEST(Pipeline, OnlyRunsOneCheck) {
  auto c = parse_config(slurp(fs::path(FREEBOUND_CONFIG_DIR) / "put.yaml"));
  c.mc.n_paths = 2000;
  const auto dir = scratch("only");
  RunOptions o;
  o.command = Subcommand::verify;
  o.only = "lagrange";
  o.out = dir.string();
  std::ostringstream log;
  EXPECT_EQ(run(c, o, log), kExitPass) << log.str();
  const auto csv = slurp(dir / "verification.csv");
  EXPECT_NE(csv.find("lagrange"), std::string::npos);
  EXPECT_EQ(csv.find("positivity"), std::string::npos);
  o.only = "nonsense";
  EXPECT_THROW(run(c, o, log), ValidationError);
}

TEST(Pipeline, ExitCodes) {
  EXPECT_EQ(exit_code_for(ValidationError("x", 3)), kExitValidation);
  EXPECT_EQ(exit_code_for(SolverError("x", 1, 0.1)), kExitSolver);
  EXPECT_EQ(parse_subcommand("geometry"), Subcommand::geometry);
  EXPECT_THROW(parse_subcommand("plot"), ValidationError);
}
