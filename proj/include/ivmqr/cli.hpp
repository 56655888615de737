#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ivmqr::cli {

enum ExitCode
{
  exit_pass = 0,
  exit_error = 1,
  exit_condition_fail = 2
};

struct RunOptions
{
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

const std::vector<std::string>& subcommands();

// Runs one subcommand, writing report.json and CSV files into the output
// directory (IVMQR_OUT overrides options.out_dir). Errors are reported on
// stderr and map to exit_error.
int run(const std::string& subcommand, const RunOptions& options);

} // namespace ivmqr::cli
