#pragma once

// Generalized Pareto distribution (shape k, scale sigma, location theta):
//
//   p(x) = (1/sigma) (1 + k (x - theta) / sigma)^(-1/k - 1)
//
// on theta < x (k > 0) or theta < x < theta - sigma/k (k < 0). k = 0 is not
// represented; shapes with |k| < 1e-8 are nudged to +-1e-8.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gazetail/common.hpp"

namespace gazetail {

inline constexpr double kMinAbsShape = 1e-8;

inline double nudge_shape(double k) {
  if (std::abs(k) >= kMinAbsShape) return k;
  return k < 0 ? -kMinAbsShape : kMinAbsShape;
}

struct GpdParams {
  double theta = 0.0;
  double k = 0.1;
  double sigma = 1.0;

  bool valid() const {
    return std::isfinite(theta) && std::isfinite(k) && k != 0.0 && std::isfinite(sigma) &&
           sigma > 0.0;
  }
  /// Upper end of the support (infinity for k > 0).
  double upper() const {
    return k < 0 ? theta - sigma / k : std::numeric_limits<double>::infinity();
  }
};

inline void require_valid(const GpdParams& p, const char* who) {
  if (!p.valid())
    throw Error(std::string(who) + ": invalid GPD parameters (k=" + format_double(p.k) +
                ", sigma=" + format_double(p.sigma) + ", theta=" + format_double(p.theta) + ")");
}

struct GofStats {
  double r_squared_adj = 0.0;
  std::size_t n = 0;
  /// (empirical quantile, model quantile), at most 500 points.
  std::vector<std::pair<double, double>> qq_points;
};

inline double pdf(double x, const GpdParams& p) {
  if (!(x >= p.theta) || x >= p.upper()) return 0.0;
  const double z = (x - p.theta) / p.sigma;
  const double base = 1.0 + p.k * z;
  if (!(base > 0.0)) return 0.0;
  return std::exp((-1.0 / p.k - 1.0) * std::log1p(p.k * z)) / p.sigma;
}

inline double cdf(double x, const GpdParams& p) {
  if (!(x > p.theta)) return 0.0;
  if (x >= p.upper()) return 1.0;
  const double z = (x - p.theta) / p.sigma;
  const double base = 1.0 + p.k * z;
  if (!(base > 0.0)) return 1.0;
  const double c = -std::expm1((-1.0 / p.k) * std::log1p(p.k * z));
  return std::clamp(c, 0.0, 1.0);
}

inline double quantile(double q, const GpdParams& p) {
  if (!(q > 0.0 && q < 1.0)) throw Error("quantile: q must lie in (0, 1)");
  // (sigma/k) * ((1-q)^(-k) - 1)
  return p.theta + (p.sigma / p.k) * std::expm1(-p.k * std::log1p(-q));
}

/// Inverse-transform sampling, deterministic for a fixed seed.
inline std::vector<double> sample(const GpdParams& p, std::size_t n, std::uint64_t seed) {
  require_valid(p, "sample");
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& v : out) v = quantile(rng.uniform(), p);
  return out;
}

/// Log-likelihood of the two-parameter (theta = 0) model. Returns -infinity
/// outside the feasible region sigma > 0, k > -1, 1 + k x / sigma > 0.
inline double log_likelihood(std::span<const double> x, double k, double sigma) {
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  if (!(sigma > 0.0) || !(k > -1.0) || !std::isfinite(k)) return ninf;
  k = nudge_shape(k);
  double s = 0.0;
  for (double xi : x) {
    const double u = k * xi / sigma;
    if (!(u > -1.0)) return ninf;
    s += std::log1p(u);
  }
  return -static_cast<double>(x.size()) * std::log(sigma) - (1.0 / k + 1.0) * s;
}

class GpdFitError : public Error {
 public:
  GpdFitError(const std::string& what, double k, double sigma, std::size_t iterations)
      : Error(what), best_k(k), best_sigma(sigma), iterations(iterations) {}
  double best_k;
  double best_sigma;
  std::size_t iterations;
};

struct MleOptions {
  std::size_t max_iterations = 4000;
  double ftol = 1e-13;  // relative spread of the simplex values
  double xtol = 1e-10;  // simplex diameter in (k, log sigma)
  bool polish = true;   // Newton refinement after the simplex search
};

struct ShapeScale {
  double k = 0.0;
  double sigma = 0.0;
};

namespace detail {

/// Method-of-moments start for theta = 0: mean = s/(1-k),
/// var = s^2 / ((1-k)^2 (1-2k)). Falls back to (0.1, mean) when infeasible.
inline ShapeScale moment_start(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= std::max(1.0, n - 1.0);
  ShapeScale fallback{0.1, mean};
  if (!(var > 0.0) || !(mean > 0.0)) return fallback;
  const double ratio = mean * mean / var;
  ShapeScale start{nudge_shape(0.5 * (1.0 - ratio)), 0.5 * mean * (ratio + 1.0)};
  if (!std::isfinite(log_likelihood(x, start.k, start.sigma))) return fallback;
  return start;
}

/// Gradient and Hessian of the theta = 0 log-likelihood in (k, sigma).
struct Derivatives {
  std::array<double, 2> g{};
  std::array<double, 3> h{};  // hkk, hks, hss
};

inline Derivatives ll_derivatives(std::span<const double> x, double k, double s) {
  const double n = static_cast<double>(x.size());
  double S = 0.0, A = 0.0, A2 = 0.0, AB = 0.0;
  for (double xi : x) {
    const double b = 1.0 / (s + k * xi);
    const double a = xi * b;
    S += std::log1p(k * xi / s);
    A += a;
    A2 += a * a;
    AB += a * b;
  }
  const double c = 1.0 / k + 1.0;
  Derivatives d;
  d.g[0] = S / (k * k) - c * A;
  d.g[1] = -n / s + (1.0 + k) / s * A;
  d.h[0] = -2.0 * S / (k * k * k) + 2.0 * A / (k * k) + c * A2;
  d.h[1] = -A / (k * s) + c * AB;
  d.h[2] = n / (s * s) - (1.0 + k) / (s * s) * A - (1.0 + k) / s * AB;
  return d;
}

/// Newton iterations with step halving. A step is taken when it raises the
/// likelihood, or, once the likelihood is flat to rounding, when it shrinks
/// the scale-free gradient (dk, sigma * ds). Skipped near k = 0 where the
/// closed-form derivatives cancel badly.
inline ShapeScale newton_polish(std::span<const double> x, ShapeScale p) {
  double ll = log_likelihood(x, p.k, p.sigma);
  auto gnorm = [&](const Derivatives& d, double s) { return std::hypot(d.g[0], s * d.g[1]); };
  for (int it = 0; it < 50; ++it) {
    if (std::abs(p.k) < 1e-3) break;
    const auto d = ll_derivatives(x, p.k, p.sigma);
    const double det = d.h[0] * d.h[2] - d.h[1] * d.h[1];
    if (!(d.h[0] < 0.0) || !(det > 0.0)) break;
    // step = -H^{-1} g
    const double dk = -(d.h[2] * d.g[0] - d.h[1] * d.g[1]) / det;
    const double ds = -(-d.h[1] * d.g[0] + d.h[0] * d.g[1]) / det;
    if (std::abs(dk) <= 1e-15 * (1.0 + std::abs(p.k)) && std::abs(ds) <= 1e-15 * p.sigma) break;
    const double g0 = gnorm(d, p.sigma);
    const double flat = 1e-12 * std::abs(ll);
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls, alpha *= 0.5) {
      const double nk = p.k + alpha * dk;
      const double ns = p.sigma + alpha * ds;
      const double nll = log_likelihood(x, nk, ns);
      if (!std::isfinite(nll) || nll < ll - flat) continue;
      if (nll <= ll && !(gnorm(ll_derivatives(x, nk, ns), ns) < g0)) continue;
      p = {nk, ns};
      ll = std::max(ll, nll);
      accepted = true;
      break;
    }
    if (!accepted) break;
  }
  return p;
}

}  // namespace detail

/// Two-parameter MLE (theta = 0) by Nelder-Mead on (k, log sigma), started
/// at the method-of-moments estimate and refined with Newton steps.
inline ShapeScale fit_two_param_mle(std::span<const double> x, const MleOptions& opt = {}) {
  if (x.empty()) throw Error("fit_two_param_mle: empty data");
  for (double v : x)
    if (!(v > 0.0) || !std::isfinite(v))
      throw Error("fit_two_param_mle: all values must be finite and positive");

  const ShapeScale start = detail::moment_start(x);
  auto objective = [&](const std::array<double, 2>& q) {
    const double ll = log_likelihood(x, q[0], std::exp(q[1]));
    return std::isfinite(ll) ? -ll : std::numeric_limits<double>::infinity();
  };

  std::array<std::array<double, 2>, 3> pts{{{start.k, std::log(start.sigma)},
                                            {start.k + 0.1, std::log(start.sigma)},
                                            {start.k, std::log(start.sigma) + 0.1}}};
  std::array<double, 3> f{};
  for (int i = 0; i < 3; ++i) f[i] = objective(pts[i]);
  if (!std::isfinite(f[0]))
    throw GpdFitError("fit_two_param_mle: infeasible starting point", start.k, start.sigma, 0);

  std::size_t iter = 0;
  bool converged = false;
  std::array<int, 3> idx{0, 1, 2};
  for (; iter < opt.max_iterations; ++iter) {
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return f[a] < f[b]; });
    const int best = idx[0], mid = idx[1], worst = idx[2];
    double diam = 0.0;
    for (int i : {mid, worst})
      diam = std::max({diam, std::abs(pts[i][0] - pts[best][0]),
                       std::abs(pts[i][1] - pts[best][1])});
    const double spread = std::abs(f[worst] - f[best]);
    if (std::isfinite(f[worst]) && spread <= opt.ftol * (std::abs(f[best]) + 1e-300) &&
        diam <= opt.xtol) {
      converged = true;
      break;
    }
    if (diam <= 1e-14) {  // simplex collapsed
      converged = std::isfinite(f[worst]);
      break;
    }
    std::array<double, 2> c{0.5 * (pts[best][0] + pts[mid][0]),
                            0.5 * (pts[best][1] + pts[mid][1])};
    auto along = [&](double t) {
      return std::array<double, 2>{c[0] + t * (pts[worst][0] - c[0]),
                                   c[1] + t * (pts[worst][1] - c[1])};
    };
    const auto xr = along(-1.0);
    const double fr = objective(xr);
    if (fr < f[best]) {
      const auto xe = along(-2.0);
      const double fe = objective(xe);
      if (fe < fr) {
        pts[worst] = xe;
        f[worst] = fe;
      } else {
        pts[worst] = xr;
        f[worst] = fr;
      }
      continue;
    }
    if (fr < f[mid]) {
      pts[worst] = xr;
      f[worst] = fr;
      continue;
    }
    const bool outside = fr < f[worst];
    const auto xc = along(outside ? -0.5 : 0.5);
    const double fc = objective(xc);
    if (fc < (outside ? fr : f[worst])) {
      pts[worst] = xc;
      f[worst] = fc;
      continue;
    }
    for (int i : {mid, worst}) {
      for (int d = 0; d < 2; ++d) pts[i][d] = pts[best][d] + 0.5 * (pts[i][d] - pts[best][d]);
      f[i] = objective(pts[i]);
    }
  }
  const int best = static_cast<int>(std::min_element(f.begin(), f.end()) - f.begin());
  ShapeScale result{nudge_shape(pts[best][0]), std::exp(pts[best][1])};
  if (!converged)
    throw GpdFitError("fit_two_param_mle: no convergence after " + std::to_string(iter) +
                          " iterations (best k=" + format_double(result.k) +
                          ", sigma=" + format_double(result.sigma) + ")",
                      result.k, result.sigma, iter);
  if (opt.polish) result = detail::newton_polish(x, result);
  result.k = nudge_shape(result.k);
  return result;
}

inline constexpr std::size_t kMaxQqPoints = 500;

/// Adjusted R^2 between the model CDF and the empirical CDF at Hazen
/// plotting positions (i - 0.5)/n, with p = 2 fitted parameters.
inline GofStats gof_adjusted_r2(std::span<const double> data, const GpdParams& p) {
  const std::size_t n = data.size();
  if (n < 10) throw Error("gof_adjusted_r2: need at least 10 values");
  require_valid(p, "gof_adjusted_r2");
  std::vector<double> x(data.begin(), data.end());
  std::sort(x.begin(), x.end());
  const double nd = static_cast<double>(n);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double fe = (static_cast<double>(i) + 0.5) / nd;
    const double fm = cdf(x[i], p);
    ss_res += (fm - fe) * (fm - fe);
    ss_tot += (fe - 0.5) * (fe - 0.5);
  }
  const double r2 = 1.0 - ss_res / ss_tot;
  constexpr double params = 2.0;
  GofStats g;
  g.n = n;
  g.r_squared_adj = 1.0 - (1.0 - r2) * (nd - 1.0) / (nd - params - 1.0);
  const std::size_t m = std::min(n, kMaxQqPoints);
  g.qq_points.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t i = m == 1 ? 0 : (j * (n - 1)) / (m - 1);
    const double fe = (static_cast<double>(i) + 0.5) / nd;
    g.qq_points.emplace_back(x[i], quantile(fe, p));
  }
  return g;
}

inline constexpr std::size_t kMinFitValues = 50;

struct GpdFit {
  GpdParams params;
  GofStats gof;
};

/// Shift-then-fit: theta = min(data); the two-parameter MLE is fitted to the
/// shifted values that are strictly positive.
inline GpdFit fit_three_param(std::span<const double> data, const MleOptions& opt = {}) {
  if (data.empty()) throw Error("fit_three_param: empty data");
  for (double v : data)
    if (!std::isfinite(v)) throw Error("fit_three_param: non-finite value");
  const double theta = *std::min_element(data.begin(), data.end());
  std::vector<double> shifted;
  shifted.reserve(data.size());
  for (double v : data) {
    const double s = v - theta;
    if (s != 0.0) shifted.push_back(s);
  }
  if (shifted.size() < kMinFitValues)
    throw Error("fit_three_param: " + std::to_string(shifted.size()) +
                " values above the minimum, need at least " + std::to_string(kMinFitValues));
  const ShapeScale ks = fit_two_param_mle(shifted, opt);
  GpdFit fit;
  fit.params = {theta, ks.k, ks.sigma};
  fit.gof = gof_adjusted_r2(data, fit.params);
  return fit;
}

}  // namespace gazetail
