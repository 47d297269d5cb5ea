#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "expertdg/bounds/bounds.hpp"
#include "expertdg/harness/dg.hpp"
#include "expertdg/harness/gradcheck.hpp"
#include "expertdg/harness/report.hpp"
#include "expertdg/harness/toy.hpp"

namespace expertdg::harness {

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::optional<Index> repeats;  // per-command default when unset
  std::string out = "results";
  Format format = Format::csv;
  unsigned threads = 1;

  ToyExperimentConfig toy;
  DgConfig dg;
  bounds::BoundConfig bounds;  // defaults: toy h1 = 60 ensemble setting
  GradcheckConfig gradcheck;

  ExperimentConfig();

  /// toy 40, dg 20, ablate 20, gradcheck 20, bounds 1.
  Index repeats_for(const std::string& command) const;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

/// Every accepted key, in manifest order.
const std::vector<ConfigKey>& config_keys();

/// Throws std::invalid_argument for an unknown key or a malformed value.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// "key = value" lines; '#' starts a comment. Errors name the source and line.
void apply_config_text(ExperimentConfig& cfg, std::istream& in, const std::string& source = "config");
void load_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);

/// (key, value) for every key, values in the same syntax the parser accepts.
std::vector<std::pair<std::string, std::string>> config_entries(const ExperimentConfig& cfg);

}  // namespace expertdg::harness
