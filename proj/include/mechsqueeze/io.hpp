#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mechsqueeze/errors.hpp"
#include "mechsqueeze/model.hpp"

namespace mechsqueeze {

inline constexpr std::string_view kVersion = "0.1.0";

/// Shortest round-trip decimal representation; locale independent.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline nlohmann::json params_to_json(const SystemParams& p) {
  return {{"gamma", p.gamma}, {"chi", p.chi},     {"delta", p.delta}, {"theta", p.theta},
          {"mu", p.mu},       {"eta", p.eta},     {"n", p.n_thermal}};
}

/// JSON number, or null for NaN/inf (JSON has no encoding for them).
inline nlohmann::json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string params_comment(const SystemParams& p) {
  return "gamma=" + format_number(p.gamma) + " chi=" + format_number(p.chi) +
         " delta=" + format_number(p.delta) + " theta=" + format_number(p.theta) +
         " mu=" + format_number(p.mu) + " eta=" + format_number(p.eta) +
         " n=" + format_number(p.n_thermal);
}

/// Plain CSV table with '#'-prefixed provenance lines before the header row.
struct CsvTable {
  std::vector<std::string> comments;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void write(std::ostream& os) const {
    for (const auto& c : comments) os << "# " << c << '\n';
    for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
    os << '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_number(row[i]);
      os << '\n';
    }
  }
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  os << content;
  if (!os) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

}  // namespace mechsqueeze
