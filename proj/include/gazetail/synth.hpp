#pragma once

// Two-regime saccade-and-fixate random walk used as ground truth by the
// tests: Gaussian-jittered fixation clusters alternate with saccadic runs
// whose step lengths are GPD draws in uniformly random directions.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "gazetail/common.hpp"
#include "gazetail/gpd.hpp"
#include "gazetail/ingest.hpp"

namespace gazetail {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct ObserverProfile {
  std::string observer_id;
  GpdParams saccade_gpd{0.5, 0.2, 20.0};
  double fixation_jitter_sigma = 2.0;    // pixels
  Range fixation_duration_ms{150.0, 400.0};
  Range saccade_length{4.0, 12.0};       // samples per saccadic run
};

struct SynthConfig {
  double screen_w = 1280.0;
  double screen_h = 1024.0;
  double sample_interval_ms = 4.0;
  double trace_duration_ms = 3000.0;
};

enum class Regime { fixation, saccade };

struct RegimeRun {
  Regime regime;
  std::size_t first_sample;
  std::size_t count;
};

/// Ground truth for one generated trace.
struct SynthTruth {
  std::vector<RegimeRun> runs;
  /// GPD draws between consecutive saccadic samples, in nonfixation_pairs order.
  std::vector<double> step_lengths;
  /// Whether that step was folded by a border reflection.
  std::vector<bool> reflected;
};

struct SynthOutput {
  std::vector<EyeTrace> traces;
  std::vector<SynthTruth> truth;
};

/// Folds x into [0, w] by mirror reflection at both borders.
inline double reflect_into(double x, double w) {
  const double period = 2.0 * w;
  double y = std::fmod(x, period);
  if (y < 0) y += period;
  return y > w ? period - y : y;
}

inline std::string synth_image_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img%04zu", i);
  return buf;
}

/// Traces for every (image, profile) pair, image-major. Deterministic per seed.
inline SynthOutput generate_traces_detailed(const std::vector<ObserverProfile>& profiles,
                                            std::size_t n_images, std::uint64_t seed,
                                            const SynthConfig& cfg = {}) {
  if (profiles.empty()) throw Error("generate_traces: no observer profiles");
  for (const auto& p : profiles) {
    require_valid(p.saccade_gpd, "generate_traces");
    if (p.fixation_jitter_sigma < 0 || p.fixation_duration_ms.lo <= 0 ||
        p.fixation_duration_ms.hi < p.fixation_duration_ms.lo || p.saccade_length.lo < 1 ||
        p.saccade_length.hi < p.saccade_length.lo)
      throw Error("generate_traces: invalid profile '" + p.observer_id + "'");
  }
  const auto n_samples = static_cast<std::size_t>(cfg.trace_duration_ms / cfg.sample_interval_ms);
  SynthOutput out;
  for (std::size_t img = 0; img < n_images; ++img) {
    for (std::size_t pi = 0; pi < profiles.size(); ++pi) {
      const auto& prof = profiles[pi];
      Rng rng(derive_seed(seed, {img, pi}));
      EyeTrace tr;
      tr.observer_id = prof.observer_id;
      tr.image_id = synth_image_id(img);
      tr.screen_w = cfg.screen_w;
      tr.screen_h = cfg.screen_h;
      SynthTruth truth;

      double cx = rng.uniform(0.0, cfg.screen_w);
      double cy = rng.uniform(0.0, cfg.screen_h);
      Regime regime = Regime::fixation;
      auto push = [&](double x, double y, bool fix) {
        const double t = static_cast<double>(tr.samples.size()) * cfg.sample_interval_ms;
        tr.samples.push_back({t, x, y, fix});
      };
      while (tr.samples.size() < n_samples) {
        const std::size_t first = tr.samples.size();
        if (regime == Regime::fixation) {
          const double dur = rng.uniform(prof.fixation_duration_ms.lo, prof.fixation_duration_ms.hi);
          const auto count = std::max<std::size_t>(
              1, static_cast<std::size_t>(std::llround(dur / cfg.sample_interval_ms)));
          for (std::size_t i = 0; i < count && tr.samples.size() < n_samples; ++i) {
            const double jx = prof.fixation_jitter_sigma * rng.normal();
            const double jy = prof.fixation_jitter_sigma * rng.normal();
            push(reflect_into(cx + jx, cfg.screen_w), reflect_into(cy + jy, cfg.screen_h), true);
          }
        } else {
          const auto lo = static_cast<std::uint64_t>(prof.saccade_length.lo);
          const auto hi = static_cast<std::uint64_t>(prof.saccade_length.hi);
          const std::size_t count = lo + rng.index(hi - lo + 1);
          for (std::size_t i = 0; i < count && tr.samples.size() < n_samples; ++i) {
            const double len = quantile(rng.uniform(), prof.saccade_gpd);
            const double ang = 2.0 * M_PI * rng.uniform();
            const double rx = cx + len * std::cos(ang);
            const double ry = cy + len * std::sin(ang);
            const double nx = reflect_into(rx, cfg.screen_w);
            const double ny = reflect_into(ry, cfg.screen_h);
            if (i > 0) {
              truth.step_lengths.push_back(len);
              truth.reflected.push_back(nx != rx || ny != ry);
            }
            cx = nx;
            cy = ny;
            push(cx, cy, false);
          }
        }
        truth.runs.push_back({regime, first, tr.samples.size() - first});
        regime = regime == Regime::fixation ? Regime::saccade : Regime::fixation;
      }
      out.traces.push_back(std::move(tr));
      out.truth.push_back(std::move(truth));
    }
  }
  return out;
}

inline std::vector<EyeTrace> generate_traces(const std::vector<ObserverProfile>& profiles,
                                             std::size_t n_images, std::uint64_t seed,
                                             const SynthConfig& cfg = {}) {
  return generate_traces_detailed(profiles, n_images, seed, cfg).traces;
}

/// Profiles on a convex arc in (k, sigma): k evenly spaced over [-0.2, 1.0]
/// and sigma = 10 + 40 (k - 0.4)^2 pixels, so every observer is linearly
/// separable from the rest.
inline std::vector<ObserverProfile> default_profiles(std::size_t n) {
  std::vector<ObserverProfile> out;
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "obs%02zu", i);
    const double k = n == 1 ? 0.4 : -0.2 + 1.2 * static_cast<double>(i) / static_cast<double>(n - 1);
    ObserverProfile p;
    p.observer_id = id;
    p.saccade_gpd = {0.5, nudge_shape(k), 10.0 + 40.0 * (k - 0.4) * (k - 0.4)};
    out.push_back(p);
  }
  return out;
}

}  // namespace gazetail
