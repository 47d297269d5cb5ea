#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "expertdg/harness/commands.hpp"
#include "expertdg/harness/config.hpp"

using namespace expertdg::harness;

int main(int argc, char** argv) {
  CLI::App app{"Expert-ensemble domain generalization experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<long long> repeats;
  std::optional<std::string> out_dir;
  std::optional<std::string> format;
  std::optional<unsigned> threads;
  std::vector<std::string> overrides;

  app.add_option("--config", config_path, "config file of 'key = value' lines")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "root seed");
  app.add_option("--repeats", repeats, "repeats (toy), seeds (dg, ablate) or random architectures (gradcheck)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--format", format, "csv|jsonl")->check(CLI::IsMember({"csv", "jsonl"}));
  app.add_option("--threads", threads, "worker threads");
  app.add_option("--set", overrides, "extra 'key=value' settings, applied after the config file");
  app.add_flag_function(
      "--list-keys",
      [](std::int64_t) {
        for (const auto& k : config_keys()) std::cout << k.name << (k.help.empty() ? "" : "  # " + k.help) << '\n';
        std::exit(0);
      },
      "print every config key and exit");

  const char* help[] = {"toy regression: universal model vs aggregated experts",
                        "leave-one-out benchmark: ensemble vs universal prompt and solo experts",
                        "ablation grid over expert weighting and step data",
                        "generalization bound report (key=value)",
                        "gradient checks on random networks and the joint fine-tuning objective"};
  for (std::size_t i = 0; i < command_names().size(); ++i)
    app.add_subcommand(command_names()[i], help[i])->fallthrough();

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  ExperimentConfig cfg;
  try {
    if (!config_path.empty()) load_config_file(cfg, config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (repeats) set_config_value(cfg, "repeats", std::to_string(*repeats));
    if (out_dir) cfg.out = *out_dir;
    if (format) cfg.format = parse_format(*format);
    if (threads) cfg.threads = *threads;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const CommandOutput output = run_command(command, cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto files = write_command_output(command, cfg, output, started, secs);
    std::cout << output.text;
    for (const auto& f : files) std::cerr << "wrote " << f.string() << '\n';
    return output.ok ? 0 : 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
