#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "expertdg/harness/config.hpp"
#include "expertdg/harness/report.hpp"

namespace expertdg::harness {

struct CommandOutput {
  std::vector<Table> tables;
  std::vector<std::pair<std::string, std::string>> notes;
  std::vector<std::uint64_t> seeds;
  std::string text;   // human-readable summary for stdout
  bool ok = true;     // false when a check inside the command failed (gradcheck)
};

const std::vector<std::string>& command_names();

/// Runs one subcommand. Throws std::invalid_argument on configuration errors.
CommandOutput run_command(const std::string& command, const ExperimentConfig& cfg);

/// Writes every table plus its manifest under cfg.out.
std::vector<std::filesystem::path> write_command_output(const std::string& command, const ExperimentConfig& cfg,
                                                        const CommandOutput& output, const std::string& started_utc,
                                                        double wall_clock_seconds);

Table toy_table(const ToyResult& result);

}  // namespace expertdg::harness
