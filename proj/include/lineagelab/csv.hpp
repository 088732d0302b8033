#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "lineagelab/error.hpp"

namespace lineagelab {

inline constexpr std::string_view kVersion = "1.0.0";

/// 17 significant digits; identical runs give identical bytes.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using CsvCell = std::variant<double, std::int64_t, std::string>;
using CsvHeader = std::vector<std::pair<std::string, CsvCell>>;

inline std::string format_cell(const CsvCell& c) {
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  return std::get<std::string>(c);
}

/// CSV file with a `# key=value` preamble followed by a column header line.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const CsvHeader& header, const std::vector<std::string>& columns)
      : out_(path, std::ios::binary), columns_(columns.size()) {
    if (!out_) throw Error(ErrorKind::InvalidConfig, "cannot write " + path.string());
    for (const auto& [k, v] : header) out_ << "# " << k << '=' << format_cell(v) << '\n';
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << '\n';
  }

  void row(const std::vector<CsvCell>& cells) {
    if (cells.size() != columns_) throw std::logic_error("CSV row width does not match the header");
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << format_cell(cells[i]);
    out_ << '\n';
  }

 private:
  std::ofstream out_;
  std::size_t columns_;
};

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct RunManifest {
  std::string config_path;
  std::string config_hash;
  std::string subcommand;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
  std::vector<std::string> outputs;
  double wall_time = 0.0;
  std::string version{kVersion};

  nlohmann::json to_json() const {
    return {{"config", config_path},  {"config_hash", config_hash}, {"subcommand", subcommand},
            {"seed", seed},           {"overrides", overrides},     {"outputs", outputs},
            {"wall_time_s", wall_time}, {"version", version}};
  }
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::InvalidConfig, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace lineagelab
