#pragma once

// Stage-file helpers shared by the serializers: schema-tagged headers,
// atomic writes and 17-digit JSON numbers.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "gazetail/common.hpp"

namespace gazetail::io {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Writes `content` to `path` through a temporary file and a rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// JSON number text with 17 significant digits. Non-finite values become null.
inline std::string num(double v) {
  if (!std::isfinite(v)) return "null";
  return format_double(v);
}

inline double as_double(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

inline std::string quote(std::string_view s) { return json(std::string(s)).dump(); }

/// One-line header object: {"schema": ..., "version": 1, "config": {...}}.
inline std::string header_line(std::string_view schema, const json& config) {
  json h;
  h["schema"] = std::string(schema);
  h["version"] = kSchemaVersion;
  h["config"] = config;
  return h.dump();
}

/// Validates a parsed header object and returns its config.
inline json check_header(const json& h, std::string_view schema, const std::string& source) {
  if (!h.is_object() || !h.contains("schema") || !h.contains("version"))
    throw Error(source + ": missing schema header");
  if (h["schema"] != std::string(schema))
    throw Error(source + ": expected schema '" + std::string(schema) + "', found " +
                h["schema"].dump());
  if (h["version"] != kSchemaVersion)
    throw Error(source + ": schema version " + h["version"].dump() + " is not supported (expected " +
                std::to_string(kSchemaVersion) + ")");
  return h.value("config", json::object());
}

}  // namespace gazetail::io
