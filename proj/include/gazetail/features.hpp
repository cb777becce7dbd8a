#pragma once

// Hellinger embedding of fitted GPDs: square roots of pdf samples on a
// common 200-point grid, and selection of the highest-variance positions.

#include <algorithm>
#include <array>
#include <optional>
#include <cmath>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gazetail/common.hpp"
#include "gazetail/gpd.hpp"
#include "gazetail/io.hpp"

namespace gazetail {

inline constexpr std::size_t kGridSize = 200;
inline constexpr std::size_t kWindowSamples = 100;
inline constexpr double kWindowLo = 0.05;
inline constexpr double kWindowHi = 0.95;

struct Grid {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> points;

  double spacing() const { return (hi - lo) / static_cast<double>(kGridSize - 1); }
};

inline Grid make_grid(double lo, double hi) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
    throw Error("grid: need finite lo < hi");
  Grid g{lo, hi, std::vector<double>(kGridSize)};
  const double h = g.spacing();
  for (std::size_t i = 0; i < kGridSize; ++i) g.points[i] = lo + h * static_cast<double>(i);
  g.points.back() = hi;
  return g;
}

/// Spans the lowest 5th and the highest 95th percentile of the set.
inline Grid common_grid(std::span<const GpdParams> params) {
  if (params.empty()) throw Error("common_grid: empty parameter set");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& p : params) {
    require_valid(p, "common_grid");
    lo = std::min(lo, quantile(kWindowLo, p));
    hi = std::max(hi, quantile(kWindowHi, p));
  }
  return make_grid(lo, hi);
}

struct FeatureSource {
  std::size_t trial_index = 0;
  std::string observer_id;
};

struct FeatureVector {
  std::vector<double> values;  // sqrt(pdf) at the grid points
  double grid_lo = 0.0;
  double grid_hi = 0.0;
  FeatureSource source;
};

/// Samples the pdf at 100 points across its own [q05, q95] window, linearly
/// interpolates onto the grid (zero outside the window), takes square roots.
inline FeatureVector embed_pdf(const GpdParams& p, const Grid& grid, FeatureSource source = {}) {
  require_valid(p, "embed_pdf");
  const double a = quantile(kWindowLo, p);
  const double b = quantile(kWindowHi, p);
  std::array<double, kWindowSamples> win{};
  const double step = (b - a) / static_cast<double>(kWindowSamples - 1);
  for (std::size_t i = 0; i < kWindowSamples; ++i)
    win[i] = pdf(i + 1 == kWindowSamples ? b : a + step * static_cast<double>(i), p);

  FeatureVector fv;
  fv.grid_lo = grid.lo;
  fv.grid_hi = grid.hi;
  fv.source = std::move(source);
  fv.values.assign(grid.points.size(), 0.0);
  for (std::size_t g = 0; g < grid.points.size(); ++g) {
    const double x = grid.points[g];
    if (x < a || x > b) continue;
    const double pos = (x - a) / step;
    auto i = static_cast<std::size_t>(std::floor(pos));
    if (i >= kWindowSamples - 1) i = kWindowSamples - 2;
    const double t = std::clamp(pos - static_cast<double>(i), 0.0, 1.0);
    const double v = (1.0 - t) * win[i] + t * win[i + 1];
    fv.values[g] = std::sqrt(std::max(v, 0.0));
  }
  return fv;
}

struct FeatureSelection {
  std::vector<std::size_t> indices;  // descending variance
};

/// Per-position unbiased variance across the vectors.
inline std::vector<double> positional_variance(std::span<const FeatureVector> vectors) {
  if (vectors.size() < 2) throw Error("positional_variance: need at least 2 vectors");
  const std::size_t d = vectors.front().values.size();
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (const auto& v : vectors) {
    if (v.values.size() != d) throw Error("positional_variance: ragged vectors");
    for (std::size_t i = 0; i < d; ++i) mean[i] += v.values[i];
  }
  const double n = static_cast<double>(vectors.size());
  for (auto& m : mean) m /= n;
  for (const auto& v : vectors)
    for (std::size_t i = 0; i < d; ++i) var[i] += (v.values[i] - mean[i]) * (v.values[i] - mean[i]);
  for (auto& x : var) x /= n - 1.0;
  return var;
}

/// Indices of the K highest-variance positions; ties go to the lower index.
inline FeatureSelection select_top_variance(std::span<const FeatureVector> vectors, std::size_t K) {
  const auto var = positional_variance(vectors);
  if (K < 1 || K > var.size())
    throw Error("select_top_variance: K must lie in [1, " + std::to_string(var.size()) + "]");
  std::vector<std::size_t> ix(var.size());
  std::iota(ix.begin(), ix.end(), 0);
  std::stable_sort(ix.begin(), ix.end(), [&](std::size_t a, std::size_t b) { return var[a] > var[b]; });
  ix.resize(K);
  return {ix};
}

inline std::vector<double> project(const FeatureVector& v, const FeatureSelection& sel) {
  std::vector<double> out;
  out.reserve(sel.indices.size());
  for (auto i : sel.indices) {
    if (i >= v.values.size()) throw Error("project: index out of range");
    out.push_back(v.values[i]);
  }
  return out;
}

// --- feature matrix CSV ----------------------------------------------------

inline constexpr std::string_view kFeaturesSchema = "gazetail.features";

struct FeatureMatrix {
  io::json config;
  Grid grid;
  std::vector<FeatureVector> rows;
};

inline std::string features_to_csv(const FeatureMatrix& fm) {
  std::string s = "# " + io::header_line(kFeaturesSchema, fm.config) + "\n";
  s += "# grid_lo=" + format_double(fm.grid.lo) + "\n";
  s += "# grid_hi=" + format_double(fm.grid.hi) + "\n";
  s += "trial_index,observer";
  for (std::size_t i = 0; i < kGridSize; ++i) s += ",v" + std::to_string(i);
  s += "\n";
  for (const auto& r : fm.rows) {
    s += std::to_string(r.source.trial_index) + "," + r.source.observer_id;
    for (double v : r.values) s += "," + format_double(v);
    s += "\n";
  }
  return s;
}

inline FeatureMatrix features_from_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  FeatureMatrix fm;
  std::size_t lineno = 0;
  bool header = false;
  std::optional<double> lo, hi;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto body = std::string_view(line).substr(1);
      body = detail::trim(body);
      if (!header) {
        fm.config = io::check_header(io::json::parse(body), kFeaturesSchema, source);
        header = true;
      } else if (body.rfind("grid_lo=", 0) == 0) {
        lo = detail::parse_number(body.substr(8));
      } else if (body.rfind("grid_hi=", 0) == 0) {
        hi = detail::parse_number(body.substr(8));
      }
      continue;
    }
    if (!header) throw Error(source + ": missing schema header");
    if (line.rfind("trial_index", 0) == 0) continue;
    auto f = detail::split(line, ',');
    if (f.size() != kGridSize + 2)
      throw ParseError(source, lineno, "expected " + std::to_string(kGridSize + 2) + " columns");
    FeatureVector v;
    auto t = detail::parse_number(f[0]);
    if (!t) throw ParseError(source, lineno, "bad trial index");
    v.source = {static_cast<std::size_t>(*t), std::string(f[1])};
    v.values.reserve(kGridSize);
    for (std::size_t i = 2; i < f.size(); ++i) {
      auto x = detail::parse_number(f[i]);
      if (!x) throw ParseError(source, lineno, "bad value");
      v.values.push_back(*x);
    }
    fm.rows.push_back(std::move(v));
  }
  if (!header) throw Error(source + ": missing schema header");
  if (!lo || !hi) throw Error(source + ": missing grid metadata");
  fm.grid = make_grid(*lo, *hi);
  for (auto& r : fm.rows) {
    r.grid_lo = *lo;
    r.grid_hi = *hi;
  }
  return fm;
}

}  // namespace gazetail
