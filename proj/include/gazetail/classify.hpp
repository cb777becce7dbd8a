#pragma once

// One-vs-rest linear SVM on selected pdf features and the recognition-rate
// protocol: train on M trials x all observers, classify N vectors drawn from
// the remaining trials, repeat.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gazetail/common.hpp"
#include "gazetail/features.hpp"
#include "gazetail/geometry.hpp"
#include "gazetail/io.hpp"
#include "gazetail/trials.hpp"

namespace gazetail {

struct LabeledVector {
  std::vector<double> x;
  std::string observer;
};

struct SvmModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::string positive_label;
  double lambda = 0.0;

  double decision(std::span<const double> x) const {
    double s = bias;
    for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * x[i];
    return s;
  }
  bool predict(std::span<const double> x) const { return decision(x) > 0.0; }
};

struct SvmOptions {
  std::size_t iterations = 100000;
  bool class_weighted = true;
};

namespace detail {

struct BinaryProblem {
  std::vector<const std::vector<double>*> x;
  std::vector<double> y;  // +1 target, -1 rest
  std::vector<double> cost;
};

inline BinaryProblem binary_problem(std::span<const LabeledVector> data, const std::string& target,
                                    bool class_weighted) {
  BinaryProblem p;
  std::size_t pos = 0;
  for (const auto& d : data) {
    p.x.push_back(&d.x);
    const bool is_pos = d.observer == target;
    p.y.push_back(is_pos ? 1.0 : -1.0);
    pos += is_pos;
  }
  const std::size_t n = data.size(), neg = n - pos;
  if (pos == 0 || neg == 0)
    throw Error("train_ovr: need at least one positive and one negative example for '" + target +
                "'");
  const double wp = class_weighted ? static_cast<double>(n) / (2.0 * static_cast<double>(pos)) : 1.0;
  const double wn = class_weighted ? static_cast<double>(n) / (2.0 * static_cast<double>(neg)) : 1.0;
  for (double y : p.y) p.cost.push_back(y > 0 ? wp : wn);
  return p;
}

}  // namespace detail

/// lambda/2 |w|^2 + (1/n) sum_i c_i max(0, 1 - y_i (w.x_i + b)), with
/// c_i = n / (2 n_class) when class weighting is on.
inline double svm_objective(const SvmModel& m, std::span<const LabeledVector> data,
                            bool class_weighted = true) {
  const auto p = detail::binary_problem(data, m.positive_label, class_weighted);
  double loss = 0.0;
  for (std::size_t i = 0; i < p.x.size(); ++i)
    loss += p.cost[i] * std::max(0.0, 1.0 - p.y[i] * m.decision(*p.x[i]));
  double w2 = 0.0;
  for (double w : m.weights) w2 += w * w;
  return 0.5 * m.lambda * w2 + loss / static_cast<double>(p.x.size());
}

/// Pegasos subgradient descent with step 1/(lambda t) and suffix averaging
/// over the second half of the run. The unregularized bias moves with step
/// R^2/(lambda t), R^2 the mean squared feature norm, which makes training
/// equivariant under x -> c x, lambda -> c^2 lambda.
inline SvmModel train_ovr(std::span<const LabeledVector> data, const std::string& target,
                          double lambda, std::uint64_t seed, const SvmOptions& opt = {}) {
  if (!(lambda > 0.0)) throw Error("train_ovr: lambda must be positive");
  if (data.empty()) throw Error("train_ovr: no training data");
  const auto prob = detail::binary_problem(data, target, opt.class_weighted);
  const std::size_t n = prob.x.size();
  const std::size_t d = prob.x.front()->size();
  for (const auto* x : prob.x)
    if (x->size() != d) throw Error("train_ovr: ragged feature vectors");

  double r2 = 0.0;
  for (const auto* x : prob.x)
    for (double v : *x) r2 += v * v;
  r2 /= static_cast<double>(n);
  if (!(r2 > 0.0)) r2 = 1.0;

  Rng rng(seed);
  std::vector<double> w(d, 0.0), wavg(d, 0.0);
  double b = 0.0, bavg = 0.0;
  const std::size_t T = std::max<std::size_t>(opt.iterations, 2);
  const std::size_t avg_from = T / 2 + 1;
  for (std::size_t t = 1; t <= T; ++t) {
    const auto i = static_cast<std::size_t>(rng.index(n));
    const auto& x = *prob.x[i];
    const double eta = 1.0 / (lambda * static_cast<double>(t));
    double f = b;
    for (std::size_t j = 0; j < d; ++j) f += w[j] * x[j];
    const double shrink = 1.0 - 1.0 / static_cast<double>(t);
    for (auto& wj : w) wj *= shrink;
    if (prob.y[i] * f < 1.0) {
      const double g = eta * prob.cost[i] * prob.y[i];
      for (std::size_t j = 0; j < d; ++j) w[j] += g * x[j];
      b += g * r2;
    }
    if (t >= avg_from) {
      for (std::size_t j = 0; j < d; ++j) wavg[j] += w[j];
      bavg += b;
    }
  }
  const double cnt = static_cast<double>(T - avg_from + 1);
  for (auto& v : wavg) v /= cnt;
  return {wavg, bavg / cnt, target, lambda};
}

// --- evaluation protocol ---------------------------------------------------

/// Centring and scaling of the selected features, fitted on the training
/// set: none, one pooled deviation for all features, or per-feature z-scores.
enum class FeatureScaling { none, global, per_feature };

struct EvalConfig {
  std::size_t M = 50;         // training trials
  std::size_t K = 20;         // selected pdf samples
  std::size_t N = 5000;       // evaluation vectors per repeat
  std::size_t repeats = 100;
  std::optional<double> lambda;  // default 1 / (M * observers)
  std::uint64_t seed = 0;
  SvmOptions svm;
  FeatureScaling scaling = FeatureScaling::global;
  // Echoed provenance of the feature set.
  std::string metric = "euclidean";
  std::size_t images_per_trial = 0;
};

struct EvalReport {
  std::string observer_id;
  double mean_recognition_rate = 0.0;
  std::vector<double> per_repeat_rates;
  double mean_true_positive_rate = 0.0;  // NaN if no positives were drawn
  double mean_true_negative_rate = 0.0;
  EvalConfig config;
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
}

}  // namespace detail

/// Per-observer recognition rates. Training uses M randomly chosen trials in
/// which every observer has a vector; each repeat draws N vectors uniformly
/// (with replacement) from the other trials and scores binary accuracy.
inline std::vector<EvalReport> evaluate(std::span<const FeatureVector> features,
                                        const FeatureSelection& sel, const EvalConfig& cfg) {
  if (cfg.M < 1 || cfg.N < 1 || cfg.repeats < 1) throw Error("evaluate: M, N, repeats must be >= 1");
  std::set<std::string> obs_set;
  std::map<std::size_t, std::size_t> per_trial;
  for (const auto& f : features) {
    obs_set.insert(f.source.observer_id);
    ++per_trial[f.source.trial_index];
  }
  const std::vector<std::string> observers(obs_set.begin(), obs_set.end());
  if (observers.size() < 2) throw Error("evaluate: need at least two observers");
  std::vector<std::size_t> complete;
  for (const auto& [t, c] : per_trial)
    if (c == observers.size()) complete.push_back(t);
  if (complete.size() < cfg.M + 1)
    throw Error("evaluate: " + std::to_string(complete.size()) +
                " complete trials, need M=" + std::to_string(cfg.M) +
                " for training plus at least one disjoint evaluation trial");

  Rng pick(derive_seed(cfg.seed, {0x7261696eULL}));
  for (std::size_t i = 0; i < cfg.M; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(pick.index(complete.size() - i));
    std::swap(complete[i], complete[j]);
  }
  const std::set<std::size_t> train_trials(complete.begin(), complete.begin() + cfg.M);

  std::vector<LabeledVector> train, pool;
  for (const auto& f : features) {
    LabeledVector lv{project(f, sel), f.source.observer_id};
    (train_trials.count(f.source.trial_index) ? train : pool).push_back(std::move(lv));
  }
  if (pool.empty()) throw Error("evaluate: no evaluation vectors outside the training trials");
  if (cfg.scaling != FeatureScaling::none) {
    const std::size_t d = sel.indices.size();
    const double nt = static_cast<double>(train.size());
    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    for (const auto& lv : train)
      for (std::size_t j = 0; j < d; ++j) mu[j] += lv.x[j] / nt;
    for (const auto& lv : train)
      for (std::size_t j = 0; j < d; ++j) sd[j] += (lv.x[j] - mu[j]) * (lv.x[j] - mu[j]) / nt;
    if (cfg.scaling == FeatureScaling::global) {
      double pooled = 0.0;
      for (double v : sd) pooled += v / static_cast<double>(d);
      std::fill(sd.begin(), sd.end(), pooled);
    }
    for (auto& s : sd) {
      s = std::sqrt(s);
      if (!(s > 0.0)) s = 1.0;
    }
    for (auto* set : {&train, &pool})
      for (auto& lv : *set)
        for (std::size_t j = 0; j < d; ++j) lv.x[j] = (lv.x[j] - mu[j]) / sd[j];
  }

  const double lambda =
      cfg.lambda.value_or(1.0 / static_cast<double>(cfg.M * observers.size()));
  std::vector<EvalReport> reports;
  for (std::size_t o = 0; o < observers.size(); ++o) {
    const auto& target = observers[o];
    const SvmModel model = train_ovr(train, target, lambda, derive_seed(cfg.seed, {1, o}), cfg.svm);
    std::vector<bool> predicted(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) predicted[i] = model.predict(pool[i].x);

    EvalReport rep;
    rep.observer_id = target;
    rep.config = cfg;
    rep.config.lambda = lambda;
    std::vector<double> tprs, tnrs;
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
      Rng rng(derive_seed(cfg.seed, {2, o, r}));
      std::size_t correct = 0, tp = 0, pos = 0, tn = 0, neg = 0;
      for (std::size_t k = 0; k < cfg.N; ++k) {
        const auto i = static_cast<std::size_t>(rng.index(pool.size()));
        const bool truth = pool[i].observer == target;
        const bool ok = predicted[i] == truth;
        correct += ok;
        if (truth) {
          ++pos;
          tp += ok;
        } else {
          ++neg;
          tn += ok;
        }
      }
      rep.per_repeat_rates.push_back(static_cast<double>(correct) / static_cast<double>(cfg.N));
      if (pos) tprs.push_back(static_cast<double>(tp) / static_cast<double>(pos));
      if (neg) tnrs.push_back(static_cast<double>(tn) / static_cast<double>(neg));
    }
    rep.mean_recognition_rate = detail::mean_of(rep.per_repeat_rates);
    rep.mean_true_positive_rate = detail::mean_of(tprs);
    rep.mean_true_negative_rate = detail::mean_of(tnrs);
    reports.push_back(std::move(rep));
  }
  return reports;
}

/// Embeds every successful record on the common grid of the whole set.
inline std::vector<FeatureVector> embed_records(std::span<const TrialRecord> records, Grid* grid_out = nullptr) {
  std::vector<GpdParams> params;
  for (const auto& r : records)
    if (r.ok) params.push_back(r.params);
  const Grid grid = common_grid(params);
  std::vector<FeatureVector> out;
  out.reserve(params.size());
  for (const auto& r : records)
    if (r.ok) out.push_back(embed_pdf(r.params, grid, {r.trial_index, r.observer_id}));
  if (grid_out) *grid_out = grid;
  return out;
}

/// Feature selection with cfg.K followed by evaluate().
inline std::vector<EvalReport> evaluate_features(std::span<const FeatureVector> features,
                                                 const EvalConfig& cfg) {
  const auto sel = select_top_variance(features, cfg.K);
  return evaluate(features, sel, cfg);
}

struct SweepCase {
  EvalConfig config;
  std::span<const FeatureVector> features;
};

struct SweepResult {
  std::vector<std::vector<EvalReport>> reports;  // one list per case
  std::vector<std::string> errors;               // empty string = success
};

/// Runs every case; a failing case records its error and the sweep goes on.
inline SweepResult sweep(std::span<const SweepCase> cases) {
  SweepResult out;
  for (const auto& c : cases) {
    try {
      out.reports.push_back(evaluate_features(c.features, c.config));
      out.errors.emplace_back();
    } catch (const Error& e) {
      out.reports.emplace_back();
      out.errors.emplace_back(e.what());
    }
  }
  return out;
}

// --- serialization ---------------------------------------------------------

inline constexpr std::string_view kClassifySchema = "gazetail.classify";

inline std::string config_fields_csv(const EvalConfig& c) {
  return std::to_string(c.M) + "," + std::to_string(c.K) + "," + std::to_string(c.N) + "," +
         std::to_string(c.repeats) + "," + c.metric + "," + std::to_string(c.images_per_trial);
}

inline std::string sweep_to_csv(const SweepResult& r) {
  std::string s = "M,K,N,repeats,metric,images_per_trial,observer,mean_rate,repeat_index,rate\n";
  for (const auto& reports : r.reports)
    for (const auto& rep : reports)
      for (std::size_t i = 0; i < rep.per_repeat_rates.size(); ++i)
        s += config_fields_csv(rep.config) + "," + rep.observer_id + "," +
             format_double(rep.mean_recognition_rate) + "," + std::to_string(i) + "," +
             format_double(rep.per_repeat_rates[i]) + "\n";
  return s;
}

inline std::string report_to_json(const EvalReport& r) {
  const auto& c = r.config;
  std::string s = "{\"observer_id\":" + io::quote(r.observer_id) +
                  ",\"mean_recognition_rate\":" + io::num(r.mean_recognition_rate) +
                  ",\"mean_true_positive_rate\":" + io::num(r.mean_true_positive_rate) +
                  ",\"mean_true_negative_rate\":" + io::num(r.mean_true_negative_rate) +
                  ",\"per_repeat_rates\":[";
  for (std::size_t i = 0; i < r.per_repeat_rates.size(); ++i)
    s += (i ? "," : "") + io::num(r.per_repeat_rates[i]);
  s += "],\"config\":{\"M\":" + std::to_string(c.M) + ",\"K\":" + std::to_string(c.K) +
       ",\"N\":" + std::to_string(c.N) + ",\"repeats\":" + std::to_string(c.repeats) +
       ",\"lambda\":" + io::num(c.lambda.value_or(std::nan(""))) +
       ",\"metric_tag\":" + io::quote(c.metric) +
       ",\"images_per_trial\":" + std::to_string(c.images_per_trial) + "}}";
  return s;
}

inline EvalReport report_from_json(const io::json& j) {
  EvalReport r;
  r.observer_id = j.at("observer_id").get<std::string>();
  r.mean_recognition_rate = io::as_double(j.at("mean_recognition_rate"));
  r.mean_true_positive_rate = io::as_double(j.at("mean_true_positive_rate"));
  r.mean_true_negative_rate = io::as_double(j.at("mean_true_negative_rate"));
  for (const auto& v : j.at("per_repeat_rates")) r.per_repeat_rates.push_back(v.get<double>());
  const auto& c = j.at("config");
  r.config.M = c.at("M").get<std::size_t>();
  r.config.K = c.at("K").get<std::size_t>();
  r.config.N = c.at("N").get<std::size_t>();
  r.config.repeats = c.at("repeats").get<std::size_t>();
  r.config.lambda = io::as_double(c.at("lambda"));
  r.config.metric = c.at("metric_tag").get<std::string>();
  r.config.images_per_trial = c.at("images_per_trial").get<std::size_t>();
  return r;
}

}  // namespace gazetail
