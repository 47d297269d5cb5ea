#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace expertdg::harness {

enum class Format { csv, jsonl };

std::string to_string(Format f);
Format parse_format(std::string_view s);
std::string file_extension(Format f);

using Cell = std::variant<long long, double, std::string>;

/// One output file: a header and typed rows.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

/// Integers verbatim, reals with 6 significant digits, strings verbatim.
std::string format_cell(const Cell& c);

/// Integer if the token is an integer literal, real if it parses completely
/// as a number, string otherwise.
Cell parse_cell(const std::string& token);

/// Comma-separated, header first. Strings must not contain ',' or newlines.
void write_csv(std::ostream& out, const Table& t);
Table read_csv(std::istream& in, std::string name = {});

/// One JSON object per row, keys in column order. Reals are rounded to 6
/// significant digits before serialisation.
void write_jsonl(std::ostream& out, const Table& t);

std::string render(const Table& t, Format f);

struct Manifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;  // every config key
  std::vector<std::uint64_t> seeds;
  std::vector<std::pair<std::string, std::string>> notes;
  double wall_clock_seconds = 0.0;
  std::string started_utc;
};

std::string version_string();

/// UTC timestamp, ISO 8601 to the second.
std::string utc_now();

/// Writes each table as <out>/<name>.<ext> plus <out>/<name>.manifest.json and
/// returns the data file paths. Throws std::runtime_error when the directory
/// cannot be created or a file cannot be written.
std::vector<std::filesystem::path> emit_report(const std::vector<Table>& tables, Format format,
                                               const std::filesystem::path& out_dir, const Manifest& manifest);

std::string manifest_json(const Manifest& manifest, const std::string& artifact, Format format);

}  // namespace expertdg::harness
