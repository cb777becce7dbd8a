#pragma once

// Normalized trace store: JSON Lines, a schema header followed by one
// segmented trace per line.

#include <sstream>
#include <string>
#include <vector>

#include "gazetail/ingest.hpp"
#include "gazetail/io.hpp"

namespace gazetail {

inline constexpr std::string_view kTraceStoreSchema = "gazetail.traces";

inline std::string trace_to_json(const EyeTrace& t) {
  std::string s = "{\"observer_id\":" + io::quote(t.observer_id) +
                  ",\"image_id\":" + io::quote(t.image_id) +
                  ",\"screen_w\":" + io::num(t.screen_w) + ",\"screen_h\":" + io::num(t.screen_h) +
                  ",\"out_of_range\":" + std::to_string(t.out_of_range);
  auto column = [&](const char* name, auto get) {
    s += ",\"" + std::string(name) + "\":[";
    for (std::size_t i = 0; i < t.samples.size(); ++i) s += (i ? "," : "") + get(t.samples[i]);
    s += "]";
  };
  column("t_ms", [](const EyeSample& e) { return io::num(e.t_ms); });
  column("x", [](const EyeSample& e) { return io::num(e.x); });
  column("y", [](const EyeSample& e) { return io::num(e.y); });
  column("fixation", [](const EyeSample& e) -> std::string {
    return e.fixation ? (*e.fixation ? "1" : "0") : "null";
  });
  return s + "}";
}

inline EyeTrace trace_from_json(const io::json& j) {
  EyeTrace t;
  t.observer_id = j.at("observer_id").get<std::string>();
  t.image_id = j.at("image_id").get<std::string>();
  t.screen_w = j.at("screen_w").get<double>();
  t.screen_h = j.at("screen_h").get<double>();
  t.out_of_range = j.at("out_of_range").get<std::size_t>();
  const auto &ts = j.at("t_ms"), &xs = j.at("x"), &ys = j.at("y"), &fs = j.at("fixation");
  if (xs.size() != ts.size() || ys.size() != ts.size() || fs.size() != ts.size())
    throw Error("trace store: ragged sample columns");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    EyeSample e{ts[i].get<double>(), xs[i].get<double>(), ys[i].get<double>(), std::nullopt};
    if (!fs[i].is_null()) e.fixation = fs[i].get<int>() != 0;
    t.samples.push_back(e);
  }
  return t;
}

inline std::string traces_to_jsonl(const std::vector<EyeTrace>& traces, const io::json& config) {
  std::string s = io::header_line(kTraceStoreSchema, config) + "\n";
  for (const auto& t : traces) s += trace_to_json(t) + "\n";
  return s;
}

struct TraceStore {
  io::json config;
  std::vector<EyeTrace> traces;
};

inline TraceStore traces_from_jsonl(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  TraceStore store;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    io::json j;
    try {
      j = io::json::parse(line);
    } catch (const io::json::exception& e) {
      throw ParseError(source, lineno, e.what());
    }
    if (!header) {
      store.config = io::check_header(j, kTraceStoreSchema, source);
      header = true;
      continue;
    }
    try {
      store.traces.push_back(trace_from_json(j));
    } catch (const io::json::exception& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  if (!header) throw Error(source + ": missing schema header");
  return store;
}

}  // namespace gazetail
