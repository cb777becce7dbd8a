#pragma once

// Full-covariance Gaussian mixtures over 2-D (k, sigma) parameter points.

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gazetail/common.hpp"
#include "gazetail/io.hpp"
#include "gazetail/trials.hpp"

namespace gazetail {

using Vec2 = std::array<double, 2>;

/// Symmetric 2x2 matrix [[xx, xy], [xy, yy]].
struct Sym2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  double det() const { return xx * yy - xy * xy; }
  /// Eigenvalues in descending order.
  std::array<double, 2> eigenvalues() const {
    const double m = 0.5 * (xx + yy);
    const double r = std::hypot(0.5 * (xx - yy), xy);
    return {m + r, m - r};
  }
};

struct GmmModel {
  std::size_t n_components = 0;
  std::vector<double> weights;
  std::vector<Vec2> means;
  std::vector<Sym2> covariances;
  double log_likelihood = 0.0;
};

struct GmmConfig {
  std::size_t max_iterations = 500;
  double tolerance = 1e-7;  // absolute improvement of the total log-likelihood
  double covariance_floor = 1e-8;
  std::size_t restarts = 5;
};

/// Per-iteration log-likelihood of every restart, for monotonicity checks.
struct GmmTrace {
  std::vector<std::vector<double>> restarts;
  std::size_t best_restart = 0;
};

namespace detail {

inline double log_gauss(const Vec2& x, const Vec2& mu, const Sym2& c) {
  const double det = c.det();
  const double dx = x[0] - mu[0], dy = x[1] - mu[1];
  const double q = (c.yy * dx * dx - 2.0 * c.xy * dx * dy + c.xx * dy * dy) / det;
  return -0.5 * q - 0.5 * std::log(det) - std::log(2.0 * M_PI);
}

inline double logsumexp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// Fills log(w_c) + log N(x | c) for each component; returns log p(x).
inline double component_log_terms(const GmmModel& m, const Vec2& x, std::span<double> out) {
  for (std::size_t c = 0; c < m.n_components; ++c)
    out[c] = (m.weights[c] > 0 ? std::log(m.weights[c])
                               : -std::numeric_limits<double>::infinity()) +
             log_gauss(x, m.means[c], m.covariances[c]);
  return logsumexp(out);
}

inline Sym2 scatter(std::span<const Vec2> pts, std::span<const double> w, const Vec2& mu,
                    double wsum) {
  Sym2 s;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double dx = pts[i][0] - mu[0], dy = pts[i][1] - mu[1];
    s.xx += w[i] * dx * dx;
    s.xy += w[i] * dx * dy;
    s.yy += w[i] * dy * dy;
  }
  s.xx /= wsum;
  s.xy /= wsum;
  s.yy /= wsum;
  return s;
}

/// M-step from a responsibility matrix (row-major n x K).
inline void m_step(GmmModel& m, std::span<const Vec2> pts, const std::vector<double>& resp,
                   double floor) {
  const std::size_t n = pts.size(), K = m.n_components;
  std::vector<double> w(n);
  for (std::size_t c = 0; c < K; ++c) {
    double nk = 0.0;
    Vec2 mu{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = resp[i * K + c];
      nk += w[i];
      mu[0] += w[i] * pts[i][0];
      mu[1] += w[i] * pts[i][1];
    }
    m.weights[c] = nk / static_cast<double>(n);
    if (nk < 1e-12) continue;  // starved component keeps its shape, weight ~ 0
    mu[0] /= nk;
    mu[1] /= nk;
    Sym2 cov = scatter(pts, w, mu, nk);
    cov.xx += floor;
    cov.yy += floor;
    m.means[c] = mu;
    m.covariances[c] = cov;
  }
}

/// E-step; returns the total log-likelihood.
inline double e_step(const GmmModel& m, std::span<const Vec2> pts, std::vector<double>& resp) {
  const std::size_t K = m.n_components;
  std::vector<double> terms(K);
  double ll = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double lp = component_log_terms(m, pts[i], terms);
    ll += lp;
    for (std::size_t c = 0; c < K; ++c) resp[i * K + c] = std::exp(terms[c] - lp);
  }
  return ll;
}

/// k-means++ seeding followed by a hard-assignment M-step.
inline GmmModel kmeanspp_init(std::span<const Vec2> pts, std::size_t K, Rng& rng,
                              double floor) {
  const std::size_t n = pts.size();
  std::vector<Vec2> centers;
  centers.push_back(pts[rng.index(n)]);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (centers.size() < K) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = centers.back();
      d2[i] = std::min(d2[i], (pts[i][0] - c[0]) * (pts[i][0] - c[0]) +
                                  (pts[i][1] - c[1]) * (pts[i][1] - c[1]));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (pick = 0; pick + 1 < n; ++pick) {
        acc += d2[pick];
        if (acc >= target && d2[pick] > 0.0) break;
      }
    } else {
      pick = rng.index(n);
    }
    centers.push_back(pts[pick]);
  }
  std::vector<double> resp(n * K, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < K; ++c) {
      const double d = (pts[i][0] - centers[c][0]) * (pts[i][0] - centers[c][0]) +
                       (pts[i][1] - centers[c][1]) * (pts[i][1] - centers[c][1]);
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    resp[i * K + best] = 1.0;
  }
  GmmModel m;
  m.n_components = K;
  m.weights.assign(K, 0.0);
  m.means = centers;
  // Global covariance for components that own fewer than two points.
  std::vector<double> ones(n, 1.0);
  Vec2 gmu{0.0, 0.0};
  for (const auto& p : pts) {
    gmu[0] += p[0] / static_cast<double>(n);
    gmu[1] += p[1] / static_cast<double>(n);
  }
  Sym2 global = scatter(pts, ones, gmu, static_cast<double>(n));
  global.xx += floor;
  global.yy += floor;
  m.covariances.assign(K, global);
  m_step(m, pts, resp, floor);
  for (std::size_t c = 0; c < K; ++c) {
    if (m.weights[c] * static_cast<double>(n) < 2.0) {
      m.covariances[c] = global;
      m.weights[c] = std::max(m.weights[c], 1.0 / static_cast<double>(n));
    }
  }
  double ws = 0.0;
  for (double w : m.weights) ws += w;
  for (double& w : m.weights) w /= ws;
  return m;
}

}  // namespace detail

/// EM fit with k-means++ restarts; the restart with the highest final
/// log-likelihood wins. Deterministic for a fixed seed and input order.
inline GmmModel fit_gmm(std::span<const Vec2> points, std::size_t n_components,
                        std::uint64_t seed, const GmmConfig& cfg = {}, GmmTrace* trace = nullptr) {
  const std::size_t n = points.size(), K = n_components;
  if (K < 1) throw Error("fit_gmm: n_components must be >= 1");
  if (n < 10 * K)
    throw Error("fit_gmm: need at least " + std::to_string(10 * K) + " points, got " +
                std::to_string(n));
  for (const auto& p : points)
    if (!std::isfinite(p[0]) || !std::isfinite(p[1])) throw Error("fit_gmm: non-finite point");
  const bool all_same = std::all_of(points.begin(), points.end(),
                                    [&](const Vec2& p) { return p == points.front(); });
  if (all_same) throw Error("fit_gmm: all points are identical");

  GmmModel best;
  best.log_likelihood = -std::numeric_limits<double>::infinity();
  if (trace) trace->restarts.clear();
  std::vector<double> resp(n * K);
  const std::size_t restarts = std::max<std::size_t>(1, cfg.restarts);
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, {r}));
    GmmModel m = detail::kmeanspp_init(points, K, rng, cfg.covariance_floor);
    std::vector<double> lls;
    double ll = detail::e_step(m, points, resp);
    lls.push_back(ll);
    for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
      detail::m_step(m, points, resp, cfg.covariance_floor);
      const double next = detail::e_step(m, points, resp);
      lls.push_back(next);
      assert(next >= ll - 1e-9 * (1.0 + std::abs(ll)) && "EM log-likelihood decreased");
      const bool done = next - ll < cfg.tolerance;
      ll = next;
      if (done) break;
    }
    m.log_likelihood = ll;
    if (trace) trace->restarts.push_back(std::move(lls));
    if (ll > best.log_likelihood) {
      best = m;
      if (trace) trace->best_restart = r;
    }
  }
  return best;
}

/// Posterior component probabilities of one point.
inline std::vector<double> responsibilities(const GmmModel& m, const Vec2& x) {
  std::vector<double> terms(m.n_components);
  const double lp = detail::component_log_terms(m, x, terms);
  for (double& t : terms) t = std::exp(t - lp);
  return terms;
}

inline std::size_t hard_assign(const GmmModel& m, const Vec2& x) {
  const auto r = responsibilities(m, x);
  return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
}

inline double log_density(const GmmModel& m, const Vec2& x) {
  std::vector<double> terms(m.n_components);
  return detail::component_log_terms(m, x, terms);
}

inline Vec2 shape_scale_point(const TrialRecord& r) { return {r.params.k, r.params.sigma}; }

struct ObserverClusterMap {
  std::map<std::string, std::size_t> component_of;
  /// Fraction of records whose hard component is dominated by one observer:
  /// (1/N) sum_c max_o count(c, o).
  double purity = 0.0;
};

/// Observer -> component maximizing the summed responsibilities of the
/// observer's successful records.
inline ObserverClusterMap cluster_observer_map(const GmmModel& m,
                                               std::span<const TrialRecord> records) {
  std::map<std::string, std::vector<double>> sums;
  std::map<std::size_t, std::map<std::string, std::size_t>> counts;
  std::size_t total = 0;
  for (const auto& r : records) {
    if (!r.ok) continue;
    const auto resp = responsibilities(m, shape_scale_point(r));
    auto& s = sums[r.observer_id];
    if (s.empty()) s.assign(m.n_components, 0.0);
    for (std::size_t c = 0; c < m.n_components; ++c) s[c] += resp[c];
    const auto hard =
        static_cast<std::size_t>(std::max_element(resp.begin(), resp.end()) - resp.begin());
    ++counts[hard][r.observer_id];
    ++total;
  }
  ObserverClusterMap out;
  for (const auto& [obs, s] : sums)
    out.component_of[obs] =
        static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
  std::size_t dominated = 0;
  for (const auto& [c, per_obs] : counts) {
    std::size_t mx = 0;
    for (const auto& [o, n] : per_obs) mx = std::max(mx, n);
    dominated += mx;
  }
  out.purity = total ? static_cast<double>(dominated) / static_cast<double>(total) : 0.0;
  return out;
}

/// `n_points` points of the Mahalanobis-radius `level` ellipse of component c.
inline std::vector<Vec2> ellipse(const GmmModel& m, std::size_t c, double level,
                                 std::size_t n_points = 100) {
  const Sym2& s = m.covariances.at(c);
  const auto ev = s.eigenvalues();
  // Eigenvector of the larger eigenvalue.
  double vx = s.xy, vy = ev[0] - s.xx;
  if (std::hypot(vx, vy) < 1e-300) {
    vx = s.xx >= s.yy ? 1.0 : 0.0;
    vy = s.xx >= s.yy ? 0.0 : 1.0;
  }
  const double norm = std::hypot(vx, vy);
  vx /= norm;
  vy /= norm;
  const double a = level * std::sqrt(std::max(ev[0], 0.0));
  const double b = level * std::sqrt(std::max(ev[1], 0.0));
  std::vector<Vec2> out;
  out.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double t = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n_points);
    const double p = a * std::cos(t), q = b * std::sin(t);
    out.push_back({m.means[c][0] + p * vx - q * vy, m.means[c][1] + p * vy + q * vx});
  }
  return out;
}

// --- serialization ---------------------------------------------------------

inline constexpr std::string_view kGmmSchema = "gazetail.gmm";

inline std::string gmm_to_json(const GmmModel& m, const ObserverClusterMap* map,
                               const io::json& config) {
  std::string s = "{\"schema\":" + io::quote(kGmmSchema) +
                  ",\"version\":" + std::to_string(io::kSchemaVersion) +
                  ",\"config\":" + config.dump() +
                  ",\"n_components\":" + std::to_string(m.n_components) +
                  ",\"log_likelihood\":" + io::num(m.log_likelihood) + ",\"weights\":[";
  for (std::size_t c = 0; c < m.n_components; ++c)
    s += (c ? "," : "") + io::num(m.weights[c]);
  s += "],\"means\":[";
  for (std::size_t c = 0; c < m.n_components; ++c)
    s += std::string(c ? "," : "") + "[" + io::num(m.means[c][0]) + "," + io::num(m.means[c][1]) +
         "]";
  s += "],\"covariances\":[";
  for (std::size_t c = 0; c < m.n_components; ++c) {
    const auto& v = m.covariances[c];
    s += std::string(c ? "," : "") + "[" + io::num(v.xx) + "," + io::num(v.xy) + "," +
         io::num(v.xy) + "," + io::num(v.yy) + "]";
  }
  s += "]";
  if (map) {
    s += ",\"observer_components\":{";
    bool first = true;
    for (const auto& [obs, c] : map->component_of) {
      s += (first ? "" : ",") + io::quote(obs) + ":" + std::to_string(c);
      first = false;
    }
    s += "},\"purity\":" + io::num(map->purity);
  }
  s += "}\n";
  return s;
}

inline GmmModel gmm_from_json(const io::json& j, const std::string& source) {
  io::check_header(j, kGmmSchema, source);
  GmmModel m;
  m.n_components = j.at("n_components").get<std::size_t>();
  m.log_likelihood = io::as_double(j.at("log_likelihood"));
  for (const auto& w : j.at("weights")) m.weights.push_back(w.get<double>());
  for (const auto& mu : j.at("means")) m.means.push_back({mu[0].get<double>(), mu[1].get<double>()});
  for (const auto& c : j.at("covariances"))
    m.covariances.push_back({c[0].get<double>(), c[1].get<double>(), c[3].get<double>()});
  if (m.weights.size() != m.n_components || m.means.size() != m.n_components ||
      m.covariances.size() != m.n_components)
    throw Error(source + ": inconsistent component counts");
  return m;
}

}  // namespace gazetail
