// perfhom: run one experiment from an INI run file.
//
//   perfhom <divcurl|reflect|homog|euler|sweep|run> --config run.ini [--out dir] [--seed n] [--threads n]
//
// `run` takes the experiment from the file. Exit codes: 0 ok, 1 numeric or
// runtime failure, 2 invalid run file. Errors are printed as JSON on stdout.

#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"

#include "perfhom/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Perforated-domain vortex experiments"};
  app.require_subcommand(1);
  std::string config, out;
  std::uint64_t seed = 0;
  int threads = 0;
  for (const char* name : {"divcurl", "reflect", "homog", "euler", "sweep", "run"}) {
    auto* sub = app.add_subcommand(name, std::string(name) == "run" ? "experiment named in the run file"
                                                                     : std::string("run the ") + name + " experiment");
    sub->add_option("--config", config, "run file")->required();
    sub->add_option("--out", out, "output directory (default $PERFHOM_OUT or ./out)");
    sub->add_option("--seed", seed, "override the run file's seed");
    sub->add_option("--threads", threads, "OpenMP threads");
  }
  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  const bool seed_given = app.get_subcommands().front()->count("--seed") > 0;
  if (out.empty()) {
    const char* env = std::getenv("PERFHOM_OUT");
    out = env ? env : "out";
  }
  try {
    const auto cfg = perfhom::load_config(config, seed_given ? std::optional<std::uint64_t>(seed) : std::nullopt,
                                          command == "run" ? "" : command);
    const auto summary = perfhom::run_experiment(cfg, out, threads);
    std::cout << summary.dump(2) << '\n';
    return 0;
  } catch (const perfhom::ConfigError& e) {
    std::cout << perfhom::error_json("config", e.what(), e.invariant()).dump(2) << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cout << perfhom::error_json("runtime", e.what()).dump(2) << '\n';
    return 1;
  }
}
