#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "runner.hpp"
#include "ttech/parallel.hpp"

using namespace ttech;

int main(int argc, char** argv) {
  CLI::App app{"TRUST-TECH experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  for (const std::string& name : cli::commands()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("-o,--out", out_dir, "run directory");
    sub->add_option("-s,--seed", seed, "master seed (required for stochastic runs)");
    sub->add_option("--set", sets, "override, key.path=value")->take_all();
    sub->add_option("-j,--threads", threads, "worker threads (results do not depend on it)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << cli::json{{"error", "usage"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    if (threads > 0) parallel::set_threads(threads);
    std::string text = "{}";
    if (!config_path.empty()) {
      std::ifstream in(config_path, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    }
    cli::json cfg = cli::parse_config(text, config_path.empty() ? "config" : config_path);
    if (!cfg.is_object()) throw cli::FieldError("config must be a JSON object", "", 1);
    for (const auto& s : sets) cli::apply_override(cfg, s);
    if (seed) cfg["seed"] = *seed;
    if (!out_dir.empty()) cfg["out"] = out_dir;
    const std::string dir = cfg.value("out", "run-" + command);
    const cli::RunOutput out = cli::run(command, cfg, text);
    cli::write_output(dir, out);
    std::cout << dir << "\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << cli::error_json(e) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << cli::error_json(e) << "\n";
    return 1;
  }
}
