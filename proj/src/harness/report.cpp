#include "expertdg/harness/report.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace expertdg::harness {

namespace {

std::string fmt6(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("report: non-finite value");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void check_text(const std::string& s) {
  if (s.find_first_of(",\n\r") != std::string::npos) throw std::invalid_argument("report: field contains a separator");
}

}  // namespace

std::string to_string(Format f) { return f == Format::csv ? "csv" : "jsonl"; }

Format parse_format(std::string_view s) {
  if (s == "csv") return Format::csv;
  if (s == "jsonl") return Format::jsonl;
  throw std::invalid_argument("unknown format '" + std::string(s) + "' (expected csv|jsonl)");
}

std::string file_extension(Format f) { return f == Format::csv ? ".csv" : ".jsonl"; }

std::string format_cell(const Cell& c) {
  if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&c)) return fmt6(*d);
  return std::get<std::string>(c);
}

Cell parse_cell(const std::string& token) {
  const char* first = token.data();
  const char* last = first + token.size();
  long long i = 0;
  auto ri = std::from_chars(first, last, i);
  if (!token.empty() && ri.ec == std::errc() && ri.ptr == last) return i;
  double d = 0;
  auto rd = std::from_chars(first, last, d);
  if (!token.empty() && rd.ec == std::errc() && rd.ptr == last) return d;
  return token;
}

void write_csv(std::ostream& out, const Table& t) {
  for (std::size_t j = 0; j < t.columns.size(); ++j) {
    check_text(t.columns[j]);
    out << (j ? "," : "") << t.columns[j];
  }
  out << '\n';
  for (const auto& row : t.rows) {
    if (row.size() != t.columns.size()) throw std::invalid_argument("report: row width differs from header");
    for (std::size_t j = 0; j < row.size(); ++j) {
      const std::string s = format_cell(row[j]);
      check_text(s);
      out << (j ? "," : "") << s;
    }
    out << '\n';
  }
}

Table read_csv(std::istream& in, std::string name) {
  Table t;
  t.name = std::move(name);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("report: missing header");
  t.columns = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != t.columns.size()) throw std::invalid_argument("report: row width differs from header");
    std::vector<Cell> row;
    for (const auto& f : fields) row.push_back(parse_cell(f));
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_jsonl(std::ostream& out, const Table& t) {
  for (const auto& row : t.rows) {
    if (row.size() != t.columns.size()) throw std::invalid_argument("report: row width differs from header");
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (std::size_t j = 0; j < row.size(); ++j) {
      const Cell& c = row[j];
      if (const auto* i = std::get_if<long long>(&c))
        obj[t.columns[j]] = *i;
      else if (const auto* d = std::get_if<double>(&c))
        obj[t.columns[j]] = std::stod(fmt6(*d));
      else
        obj[t.columns[j]] = std::get<std::string>(c);
    }
    out << obj.dump() << '\n';
  }
}

std::string render(const Table& t, Format f) {
  std::ostringstream s;
  if (f == Format::csv)
    write_csv(s, t);
  else
    write_jsonl(s, t);
  return s.str();
}

std::string version_string() { return "expertdg 0.1.0"; }

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string manifest_json(const Manifest& m, const std::string& artifact, Format format) {
  nlohmann::ordered_json j;
  j["artifact"] = artifact;
  j["format"] = to_string(format);
  j["command"] = m.command;
  j["version"] = version_string();
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.config) cfg[k] = v;
  j["config"] = cfg;
  j["seeds"] = m.seeds;
  nlohmann::ordered_json notes = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.notes) notes[k] = v;
  j["notes"] = notes;
  j["started_utc"] = m.started_utc;
  j["wall_clock_seconds"] = m.wall_clock_seconds;
  return j.dump(2) + "\n";
}

std::vector<std::filesystem::path> emit_report(const std::vector<Table>& tables, Format format,
                                               const std::filesystem::path& out_dir, const Manifest& manifest) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir))
    throw std::runtime_error("cannot create output directory " + out_dir.string());
  std::vector<std::filesystem::path> written;
  for (const auto& t : tables) {
    const auto data_path = out_dir / (t.name + file_extension(format));
    const auto manifest_path = out_dir / (t.name + ".manifest.json");
    const std::string body = render(t, format);
    for (const auto& [path, text] : {std::pair{data_path, body},
                                     std::pair{manifest_path, manifest_json(manifest, data_path.filename().string(), format)}}) {
      std::ofstream f(path, std::ios::binary);
      if (!f) throw std::runtime_error("cannot write " + path.string());
      f << text;
      if (!f) throw std::runtime_error("cannot write " + path.string());
    }
    written.push_back(data_path);
  }
  return written;
}

}  // namespace expertdg::harness
