#pragma once

// Bootstrap trial engine: draw random image subsets, pool each observer's
// non-fixation step lengths over the subset, fit a GPD per observer.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gazetail/common.hpp"
#include "gazetail/geometry.hpp"
#include "gazetail/gpd.hpp"
#include "gazetail/ingest.hpp"
#include "gazetail/io.hpp"

namespace gazetail {

struct TrialRecord {
  std::size_t trial_index = 0;
  std::string observer_id;
  Metric metric = Metric::euclidean;
  std::size_t images_per_trial = 0;
  GpdParams params;
  /// Summary only: qq_points are not kept per trial.
  GofStats gof;
  std::size_t n_steps = 0;
  bool ok = false;
  std::string error;
};

struct TrialPlan {
  std::size_t n_trials = 1;
  std::size_t images_per_trial = 1;
  Metric metric = Metric::euclidean;
  std::uint64_t seed = 0;
};

struct TrialOptions {
  unsigned threads = 0;  // 0 = hardware concurrency
  double disc_margin = kDefaultDiscMargin;
  MleOptions mle;
};

/// Step lengths of one trace's non-fixation pairs, in temporal order.
inline std::vector<double> trace_step_lengths(const EyeTrace& trace, Metric metric,
                                              double disc_margin = kDefaultDiscMargin) {
  std::vector<double> out;
  for (const auto& [a, b] : nonfixation_pairs(trace)) {
    if (metric == Metric::euclidean) {
      out.push_back(euclidean_distance(a, b).value);
    } else {
      out.push_back(hyperbolic_distance(to_disc(a, trace.screen_w, trace.screen_h, disc_margin),
                                        to_disc(b, trace.screen_w, trace.screen_h, disc_margin))
                        .value);
    }
  }
  return out;
}

/// Concatenated step lengths over `image_subset` (subset order, then time).
inline std::vector<double> pool_step_lengths(std::span<const EyeTrace> traces,
                                             const std::string& observer,
                                             std::span<const std::string> image_subset,
                                             Metric metric,
                                             double disc_margin = kDefaultDiscMargin) {
  if (image_subset.empty()) throw Error("pool_step_lengths: empty image subset");
  std::vector<double> out;
  bool found = false;
  for (const auto& img : image_subset) {
    for (const auto& tr : traces) {
      if (tr.observer_id != observer || tr.image_id != img) continue;
      found = true;
      auto steps = trace_step_lengths(tr, metric, disc_margin);
      out.insert(out.end(), steps.begin(), steps.end());
    }
  }
  if (!found) throw Error("pool_step_lengths: observer '" + observer + "' has no trace in subset");
  return out;
}

/// Precomputed per-(observer, image) step lengths for repeated pooling.
class StepTable {
 public:
  StepTable(std::span<const EyeTrace> traces, Metric metric,
            double disc_margin = kDefaultDiscMargin) {
    std::map<std::string, std::size_t> obs_ix, img_ix;
    for (const auto& tr : traces) {
      obs_ix.emplace(tr.observer_id, 0);
      img_ix.emplace(tr.image_id, 0);
    }
    for (auto& [name, ix] : obs_ix) {
      ix = observers_.size();
      observers_.push_back(name);
    }
    for (auto& [name, ix] : img_ix) {
      ix = images_.size();
      images_.push_back(name);
    }
    cells_.resize(observers_.size() * images_.size());
    for (const auto& tr : traces) {
      auto& cell = cells_[obs_ix[tr.observer_id] * images_.size() + img_ix[tr.image_id]];
      auto steps = trace_step_lengths(tr, metric, disc_margin);
      if (!cell) cell.emplace();
      cell->insert(cell->end(), steps.begin(), steps.end());
    }
  }

  /// Sorted unique ids.
  const std::vector<std::string>& observers() const { return observers_; }
  const std::vector<std::string>& images() const { return images_; }

  const std::optional<std::vector<double>>& cell(std::size_t observer, std::size_t image) const {
    return cells_[observer * images_.size() + image];
  }

  /// Pools by image index; throws when the observer has no trace in the subset.
  std::vector<double> pool(std::size_t observer, std::span<const std::size_t> subset) const {
    std::vector<double> out;
    bool found = false;
    for (auto img : subset) {
      const auto& c = cell(observer, img);
      if (!c) continue;
      found = true;
      out.insert(out.end(), c->begin(), c->end());
    }
    if (!found)
      throw Error("pool_step_lengths: observer '" + observers_[observer] +
                  "' has no trace in subset");
    return out;
  }

 private:
  std::vector<std::string> observers_;
  std::vector<std::string> images_;
  std::vector<std::optional<std::vector<double>>> cells_;
};

/// Image indices of one trial: `count` of `n_images` without replacement,
/// seeded by (seed, trial_index), returned in ascending order.
inline std::vector<std::size_t> draw_image_subset(std::size_t n_images, std::size_t count,
                                                  std::uint64_t seed, std::size_t trial_index) {
  if (count == 0 || count > n_images)
    throw Error("draw_image_subset: images_per_trial must lie in [1, " +
                std::to_string(n_images) + "]");
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(trial_index)}));
  std::vector<std::size_t> ix(n_images);
  for (std::size_t i = 0; i < n_images; ++i) ix[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.index(n_images - i));
    std::swap(ix[i], ix[j]);
  }
  ix.resize(count);
  std::sort(ix.begin(), ix.end());
  return ix;
}

inline void validate_plan(const TrialPlan& plan, std::size_t n_images) {
  if (plan.n_trials < 1) throw Error("trial plan: n_trials must be >= 1");
  if (plan.images_per_trial < 1 || plan.images_per_trial > n_images)
    throw Error("trial plan: images_per_trial must lie in [1, " + std::to_string(n_images) +
                "], got " + std::to_string(plan.images_per_trial));
}

inline TrialRecord fit_trial(const StepTable& table, std::size_t observer,
                             std::span<const std::size_t> subset, std::size_t trial_index,
                             const TrialPlan& plan, const MleOptions& mle) {
  TrialRecord rec;
  rec.trial_index = trial_index;
  rec.observer_id = table.observers()[observer];
  rec.metric = plan.metric;
  rec.images_per_trial = plan.images_per_trial;
  try {
    auto steps = table.pool(observer, subset);
    rec.n_steps = steps.size();
    auto fit = fit_three_param(steps, mle);
    rec.params = fit.params;
    rec.gof.r_squared_adj = fit.gof.r_squared_adj;
    rec.gof.n = fit.gof.n;
    rec.ok = true;
  } catch (const Error& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

/// Runs the plan over the table. One subset per trial is shared by all
/// observers. Output order is (trial, observer) regardless of threading.
inline std::vector<TrialRecord> run_trials(const StepTable& table, const TrialPlan& plan,
                                           const TrialOptions& opt = {}) {
  validate_plan(plan, table.images().size());
  const std::size_t n_obs = table.observers().size();
  std::vector<TrialRecord> out(plan.n_trials * n_obs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= plan.n_trials) return;
      const auto subset = draw_image_subset(table.images().size(), plan.images_per_trial,
                                            plan.seed, t);
      for (std::size_t o = 0; o < n_obs; ++o)
        out[t * n_obs + o] = fit_trial(table, o, subset, t, plan, opt.mle);
    }
  };
  unsigned threads = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, plan.n_trials));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  return out;
}

inline std::vector<TrialRecord> run_trials(std::span<const EyeTrace> traces,
                                           const TrialPlan& plan, const TrialOptions& opt = {}) {
  StepTable table(traces, plan.metric, opt.disc_margin);
  return run_trials(table, plan, opt);
}

/// Sorted adjusted R^2 values of an observer's successful records with
/// cumulative fractions i/n.
inline std::vector<std::pair<double, double>> ecdf_of_r2(std::span<const TrialRecord> records,
                                                         const std::string& observer) {
  std::vector<double> r2;
  for (const auto& r : records)
    if (r.ok && r.observer_id == observer) r2.push_back(r.gof.r_squared_adj);
  if (r2.empty()) throw Error("ecdf_of_r2: no successful records for '" + observer + "'");
  std::sort(r2.begin(), r2.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(r2.size());
  const double n = static_cast<double>(r2.size());
  for (std::size_t i = 0; i < r2.size(); ++i)
    out.emplace_back(r2[i], static_cast<double>(i + 1) / n);
  return out;
}

// --- parameter database (JSON Lines) ---------------------------------------

inline constexpr std::string_view kTrialsSchema = "gazetail.trials";

inline std::string to_jsonl(const TrialRecord& r) {
  std::string s = "{\"trial_index\":" + std::to_string(r.trial_index) +
                  ",\"observer_id\":" + io::quote(r.observer_id) + ",\"metric_tag\":\"" +
                  to_string(r.metric) + "\",\"images_per_trial\":" +
                  std::to_string(r.images_per_trial);
  if (r.ok) {
    s += ",\"params\":{\"theta\":" + io::num(r.params.theta) + ",\"k\":" + io::num(r.params.k) +
         ",\"sigma\":" + io::num(r.params.sigma) + "}";
    s += ",\"gof\":{\"r_squared_adj\":" + io::num(r.gof.r_squared_adj) +
         ",\"n\":" + std::to_string(r.gof.n) + "}";
  } else {
    s += ",\"params\":null,\"gof\":null";
  }
  s += ",\"n_steps\":" + std::to_string(r.n_steps) + ",\"ok\":" + (r.ok ? "true" : "false");
  if (!r.ok) s += ",\"error\":" + io::quote(r.error);
  s += "}";
  return s;
}

inline TrialRecord trial_record_from_json(const io::json& j) {
  TrialRecord r;
  r.trial_index = j.at("trial_index").get<std::size_t>();
  r.observer_id = j.at("observer_id").get<std::string>();
  r.metric = parse_metric(j.at("metric_tag").get<std::string>());
  r.images_per_trial = j.at("images_per_trial").get<std::size_t>();
  r.n_steps = j.at("n_steps").get<std::size_t>();
  r.ok = j.at("ok").get<bool>();
  if (r.ok) {
    const auto& p = j.at("params");
    r.params = {io::as_double(p.at("theta")), io::as_double(p.at("k")),
                io::as_double(p.at("sigma"))};
    r.gof.r_squared_adj = io::as_double(j.at("gof").at("r_squared_adj"));
    r.gof.n = j.at("gof").at("n").get<std::size_t>();
  } else {
    r.error = j.value("error", std::string());
  }
  return r;
}

inline std::string trials_to_jsonl(std::span<const TrialRecord> records, const io::json& config) {
  std::string s = io::header_line(kTrialsSchema, config) + "\n";
  for (const auto& r : records) s += to_jsonl(r) + "\n";
  return s;
}

struct TrialDatabase {
  io::json config;
  std::vector<TrialRecord> records;
};

inline TrialDatabase trials_from_jsonl(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  TrialDatabase db;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    io::json j;
    try {
      j = io::json::parse(line);
    } catch (const std::exception& e) {
      throw ParseError(source, lineno, e.what());
    }
    if (!header) {
      db.config = io::check_header(j, kTrialsSchema, source);
      header = true;
      continue;
    }
    try {
      db.records.push_back(trial_record_from_json(j));
    } catch (const std::exception& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  if (!header) throw Error(source + ": empty trial database");
  return db;
}

}  // namespace gazetail
