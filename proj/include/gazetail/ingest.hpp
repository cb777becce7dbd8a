#pragma once

// Eye-tracker trace parsing and fixation/saccade segmentation.
//
// Trace CSV layout:
//   # screen <w> <h>                      (optional, overrides the sidecar)
//   observer,image,t_ms,x_px,y_px,fixation  (header, optional)
//   obs1,img1,0,512.0,384.0,1
// fixation is "", "0" or "1".

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gazetail/common.hpp"

namespace gazetail {

struct EyeSample {
  double t_ms = 0.0;
  double x = 0.0;
  double y = 0.0;
  std::optional<bool> fixation;  // true = fixation

  friend bool operator==(const EyeSample&, const EyeSample&) = default;
};

struct EyeTrace {
  std::string observer_id;
  std::string image_id;
  double screen_w = 0.0;
  double screen_h = 0.0;
  std::vector<EyeSample> samples;
  /// Samples lying outside [0, screen_w] x [0, screen_h]. They are kept.
  std::size_t out_of_range = 0;

  bool fully_labeled() const {
    return std::all_of(samples.begin(), samples.end(),
                       [](const EyeSample& s) { return s.fixation.has_value(); });
  }
  std::size_t fixation_count() const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(),
                      [](const EyeSample& s) { return s.fixation.value_or(false); }));
  }
};

struct ScreenSize {
  double w = 0.0;
  double h = 0.0;
};

struct IngestConfig {
  /// Fallback screen size (e.g. from a sidecar file). A `# screen w h`
  /// comment inside the trace file takes precedence.
  std::optional<ScreenSize> screen;
};

/// Reads a key=value sidecar holding `screen_w` and `screen_h`.
inline ScreenSize read_screen_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open screen config: " + path);
  std::optional<double> w, h;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto v = detail::trim(line);
    if (v.empty() || v.front() == '#') continue;
    auto eq = v.find('=');
    if (eq == std::string_view::npos) throw ParseError(path, lineno, "expected key=value");
    auto key = detail::trim(v.substr(0, eq));
    auto val = detail::parse_number(v.substr(eq + 1));
    if (!val) throw ParseError(path, lineno, "bad number");
    if (key == "screen_w") w = *val;
    if (key == "screen_h") h = *val;
  }
  if (!w || !h || *w <= 0 || *h <= 0)
    throw Error(path + ": screen_w and screen_h must both be set and positive");
  return {*w, *h};
}

/// Parses trace CSV text. One EyeTrace per (observer, image) group, in order
/// of first appearance.
inline std::vector<EyeTrace> parse_traces(std::istream& in, const IngestConfig& config,
                                          const std::string& source = "<input>") {
  std::optional<ScreenSize> screen = config.screen;
  std::vector<EyeTrace> traces;
  std::map<std::pair<std::string, std::string>, std::size_t> groups;
  std::string line;
  std::size_t lineno = 0;
  bool seen_data = false;

  while (std::getline(in, line)) {
    ++lineno;
    auto v = detail::trim(line);
    if (v.empty()) continue;
    if (v.front() == '#') {
      auto body = detail::trim(v.substr(1));
      if (body.rfind("screen", 0) == 0) {
        std::istringstream ss{std::string(body.substr(6))};
        double w = 0, h = 0;
        if (!(ss >> w >> h) || w <= 0 || h <= 0)
          throw ParseError(source, lineno, "malformed '# screen <w> <h>' comment");
        if (seen_data)
          throw ParseError(source, lineno, "'# screen' comment must precede data rows");
        screen = ScreenSize{w, h};
      }
      continue;
    }
    auto fields = detail::split(v, ',');
    if (!seen_data && !fields.empty() && detail::trim(fields[0]) == "observer") continue;
    if (fields.size() != 5 && fields.size() != 6)
      throw ParseError(source, lineno,
                       "expected 6 fields, got " + std::to_string(fields.size()));
    auto obs = detail::trim(fields[0]);
    auto img = detail::trim(fields[1]);
    if (obs.empty() || img.empty()) throw ParseError(source, lineno, "empty observer or image id");
    auto t = detail::parse_number(fields[2]);
    auto x = detail::parse_number(fields[3]);
    auto y = detail::parse_number(fields[4]);
    if (!t || !x || !y) throw ParseError(source, lineno, "malformed number");
    if (!std::isfinite(*t) || *t < 0)
      throw ParseError(source, lineno, "timestamp must be finite and non-negative");
    if (!std::isfinite(*x) || !std::isfinite(*y))
      throw ParseError(source, lineno, "coordinates must be finite");
    EyeSample s{*t, *x, *y, std::nullopt};
    if (fields.size() == 6) {
      auto f = detail::trim(fields[5]);
      if (f == "1")
        s.fixation = true;
      else if (f == "0")
        s.fixation = false;
      else if (!f.empty())
        throw ParseError(source, lineno, "fixation must be empty, 0 or 1");
    }
    if (!screen)
      throw ParseError(source, lineno,
                       "screen size unknown: add '# screen <w> <h>' or a sidecar config");
    seen_data = true;

    auto key = std::make_pair(std::string(obs), std::string(img));
    auto it = groups.find(key);
    if (it == groups.end()) {
      it = groups.emplace(key, traces.size()).first;
      EyeTrace tr;
      tr.observer_id = key.first;
      tr.image_id = key.second;
      tr.screen_w = screen->w;
      tr.screen_h = screen->h;
      traces.push_back(std::move(tr));
    }
    EyeTrace& tr = traces[it->second];
    if (!tr.samples.empty() && !(s.t_ms > tr.samples.back().t_ms))
      throw ParseError(source, lineno,
                       "non-monotonic timestamp in group (" + tr.observer_id + ", " +
                           tr.image_id + ")");
    if (s.x < 0 || s.x > tr.screen_w || s.y < 0 || s.y > tr.screen_h) ++tr.out_of_range;
    tr.samples.push_back(s);
  }
  if (traces.empty()) throw Error(source + ": no trace samples (empty file)");
  return traces;
}

inline std::vector<EyeTrace> parse_trace_file(const std::string& path,
                                              const IngestConfig& config) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace file: " + path);
  return parse_traces(in, config, path);
}

/// Writes traces in the CSV layout read by parse_traces. All traces must
/// share one screen size since the file carries a single `# screen` line.
inline void write_traces_csv(std::ostream& out, const std::vector<EyeTrace>& traces) {
  if (traces.empty()) throw Error("write_traces_csv: no traces");
  const double w = traces.front().screen_w;
  const double h = traces.front().screen_h;
  for (const auto& tr : traces) {
    if (tr.screen_w != w || tr.screen_h != h)
      throw Error("write_traces_csv: traces with different screen sizes");
    if (tr.observer_id.find(',') != std::string::npos ||
        tr.image_id.find(',') != std::string::npos)
      throw Error("write_traces_csv: ids must not contain commas");
  }
  out << "# screen " << format_double(w) << ' ' << format_double(h) << '\n';
  out << "observer,image,t_ms,x_px,y_px,fixation\n";
  for (const auto& tr : traces) {
    for (const auto& s : tr.samples) {
      out << tr.observer_id << ',' << tr.image_id << ',' << format_double(s.t_ms) << ','
          << format_double(s.x) << ',' << format_double(s.y) << ',';
      if (s.fixation) out << (*s.fixation ? '1' : '0');
      out << '\n';
    }
  }
}

struct SegmentationParams {
  double dispersion_threshold_px = 35.0;  // bounding-box width + height
  double min_duration_ms = 100.0;
  bool respect_labels = true;
};

/// Dispersion-threshold (I-DT) fixation identification. When every sample
/// already has a label and respect_labels is set, the trace is returned as is.
inline EyeTrace segment_fixations(EyeTrace trace, const SegmentationParams& params) {
  auto& s = trace.samples;
  if (s.size() < 2)
    throw Error("segment_fixations: trace (" + trace.observer_id + ", " + trace.image_id +
                ") has fewer than 2 samples");
  if (params.respect_labels && trace.fully_labeled()) return trace;

  const std::size_t n = s.size();
  std::vector<bool> fix(n, false);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && s[j].t_ms - s[i].t_ms < params.min_duration_ms) ++j;
    if (j == n) break;
    double xmin = s[i].x, xmax = s[i].x, ymin = s[i].y, ymax = s[i].y;
    for (std::size_t m = i + 1; m <= j; ++m) {
      xmin = std::min(xmin, s[m].x);
      xmax = std::max(xmax, s[m].x);
      ymin = std::min(ymin, s[m].y);
      ymax = std::max(ymax, s[m].y);
    }
    if ((xmax - xmin) + (ymax - ymin) > params.dispersion_threshold_px) {
      ++i;
      continue;
    }
    while (j + 1 < n) {
      const auto& nx = s[j + 1];
      const double w = std::max(xmax, nx.x) - std::min(xmin, nx.x);
      const double h = std::max(ymax, nx.y) - std::min(ymin, nx.y);
      if (w + h > params.dispersion_threshold_px) break;
      xmin = std::min(xmin, nx.x);
      xmax = std::max(xmax, nx.x);
      ymin = std::min(ymin, nx.y);
      ymax = std::max(ymax, nx.y);
      ++j;
    }
    for (std::size_t m = i; m <= j; ++m) fix[m] = true;
    i = j + 1;
  }
  for (std::size_t m = 0; m < n; ++m) s[m].fixation = fix[m];
  return trace;
}

/// Consecutive sample pairs whose endpoints are both non-fixation.
inline std::vector<std::pair<EyeSample, EyeSample>> nonfixation_pairs(const EyeTrace& trace) {
  std::vector<std::pair<EyeSample, EyeSample>> out;
  const auto& s = trace.samples;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s[i].fixation)
      throw Error("nonfixation_pairs: unlabeled sample " + std::to_string(i) + " in (" +
                  trace.observer_id + ", " + trace.image_id + ")");
  }
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (!*s[i].fixation && !*s[i + 1].fixation) out.emplace_back(s[i], s[i + 1]);
  }
  return out;
}

}  // namespace gazetail
