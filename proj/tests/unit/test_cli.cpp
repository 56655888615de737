#include "ivmqr/cli.hpp"
#include "ivmqr/io.hpp"

#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ivmqr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
  const fs::path p = fs::temp_directory_path() / ("ivmqr_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_config(const fs::path& dir, const std::string& text)
{
  const fs::path p = dir / "config.json";
  std::ofstream(p) << text;
  return p.string();
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& sub, const std::string& config, const fs::path& out)
{
  cli::RunOptions o;
  o.config_path = config;
  o.out_dir = out.string();
  return cli::run(sub, o);
}

} // namespace

TEST_CASE("simulate twice gives byte-identical output")
{
  const fs::path dir = scratch("simulate");
  const std::string cfg = write_config(dir, R"({"schema_version": 1, "n": 5000, "seed": 12})");
  REQUIRE(run("simulate", cfg, dir / "a") == cli::exit_pass);
  cli::RunOptions o{ cfg, (dir / "b").string(), std::nullopt, 3 };
  REQUIRE(cli::run("simulate", o) == cli::exit_pass);
  CHECK(slurp(dir / "a" / "sample.csv") == slurp(dir / "b" / "sample.csv"));
  CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "b" / "report.json"));
  CHECK_FALSE(slurp(dir / "a" / "sample.csv").empty());
}

TEST_CASE("the embedded config reproduces the report")
{
  const fs::path dir = scratch("embedded");
  const std::string cfg = write_config(dir, R"({"schema_version": 1, "n": 2000})");
  REQUIRE(run("simulate", cfg, dir / "a") == cli::exit_pass);
  const auto report = io::read_json((dir / "a" / "report.json").string());
  const fs::path again = dir / "again.json";
  std::ofstream(again) << report.at("config").dump(2);
  REQUIRE(run("simulate", again.string(), dir / "b") == cli::exit_pass);
  CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "b" / "report.json"));
}

TEST_CASE("check-identification at compliance 0.7 exits 2 with margin -21.08")
{
  const fs::path dir = scratch("violation");
  const std::string cfg = write_config(dir, R"({
  "schema_version": 1,
  "model": {"kind": "example1", "compliance": 0.7, "A0": [[1, 0], [0, 1]], "A1": [[1, 0], [0, 1]]},
  "lambda": {"lower": 0.5, "upper": 2.0},
  "grid": {"pair_resolution": 20, "resolution": 20},
  "check_identification": {"form_points": 10}
})");
  CHECK(run("check-identification", cfg, dir) == cli::exit_condition_fail);
  const auto report = io::read_json((dir / "report.json").string());
  CHECK(report.at("exit_code") == 2);
  CHECK(report.at("results").at("correlation_condition").at("margin").get<double>() == doctest::Approx(-21.08));
  CHECK(fs::exists(dir / "field_d0_z0.csv"));
}

TEST_CASE("verify-implication on the lower-left quadrant")
{
  const fs::path dir = scratch("implication");
  const std::string cfg = write_config(dir, R"({
  "schema_version": 1,
  "verify_implication": {"sets": [{"lower": [0, 0], "upper": [0.5, 0.5]}]}
})");
  CHECK(run("verify-implication", cfg, dir) == cli::exit_pass);
  const auto report = io::read_json((dir / "report.json").string());
  CHECK(report.at("results").at("max_deviation").get<double>() <= 0.0041);
}

TEST_CASE("malformed config exits 1")
{
  const fs::path dir = scratch("malformed");
  const std::string cfg = write_config(dir, "{\n  \"schema_version\": 1,\n  \"lamda\": {}\n}\n");
  CHECK(run("fit", cfg, dir) == cli::exit_error);
  CHECK_FALSE(fs::exists(dir / "report.json"));
  CHECK(run("simulate", (dir / "missing.json").string(), dir) == cli::exit_error);
  CHECK(run("no-such-subcommand", cfg, dir) == cli::exit_error);
}

TEST_CASE("IVMQR_OUT overrides --out")
{
  const fs::path dir = scratch("env");
  const std::string cfg = write_config(dir, R"({"schema_version": 1, "n": 100})");
  setenv("IVMQR_OUT", (dir / "env").string().c_str(), 1);
  const int code = run("simulate", cfg, dir / "flag");
  unsetenv("IVMQR_OUT");
  CHECK(code == cli::exit_pass);
  CHECK(fs::exists(dir / "env" / "report.json"));
  CHECK_FALSE(fs::exists(dir / "flag"));
}

TEST_CASE("rank similarity demo exits 2 on a violation")
{
  const fs::path dir = scratch("rank");
  const std::string bad = write_config(dir, R"({"schema_version": 1, "n": 20000, "model": {"kind": "rank-violation"}})");
  CHECK(run("demo-rank-violation", bad, dir / "bad") == cli::exit_condition_fail);
  const std::string good = write_config(dir, R"({"schema_version": 1, "n": 20000,
    "model": {"kind": "rank-violation", "q1": "identity"}})");
  CHECK(run("demo-rank-violation", good, dir / "good") == cli::exit_pass);
}
