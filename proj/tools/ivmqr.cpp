#include "ivmqr/cli.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv)
{
  CLI::App app{ "IV multivariate quantile regression toolkit" };
  app.require_subcommand(1);

  ivmqr::cli::RunOptions opts;
  std::uint64_t seed = 0;
  int threads = 0;
  for (const auto& name : ivmqr::cli::subcommands()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", opts.config_path, "JSON config file")->required();
    sub->add_option("--out", opts.out_dir, "output directory (IVMQR_OUT overrides)");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--threads", threads, "cap on worker threads")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ivmqr::cli::exit_error;
  }

  CLI::App* chosen = app.get_subcommands().front();
  if (chosen->count("--seed"))
    opts.seed = seed;
  if (chosen->count("--threads"))
    opts.threads = threads;
  return ivmqr::cli::run(chosen->get_name(), opts);
}
