#include <gtest/gtest.h>

#include <algorithm>

#include "gazetail/gpd.hpp"

using namespace gazetail;

namespace {

/// Composite 5-point Gauss-Legendre quadrature.
template <class F>
double integrate(F f, double lo, double hi, int panels = 2000) {
  static const double xg[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                               0.5384693101056831, 0.9061798459386640};
  static const double wg[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                               0.4786286704993665, 0.2369268850561891};
  double s = 0.0;
  const double h = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    const double m = lo + (p + 0.5) * h;
    for (int i = 0; i < 5; ++i) s += 0.5 * h * wg[i] * f(m + 0.5 * h * xg[i]);
  }
  return s;
}

GpdParams random_params(Rng& rng) {
  return {rng.uniform(-5, 5), nudge_shape(rng.uniform(-0.45, 0.8)), rng.uniform(0.2, 5)};
}

double ks_statistic(std::vector<double> x, const GpdParams& p) {
  std::sort(x.begin(), x.end());
  const double n = double(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i], p);
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST(GpdPdf, ValueAtLocationAndBelowSupport) {
  const GpdParams p{1.5, 0.3, 2.0};
  EXPECT_DOUBLE_EQ(pdf(1.5, p), 0.5);
  EXPECT_EQ(pdf(1.4, p), 0.0);
  const GpdParams neg{0.0, -0.5, 1.0};
  EXPECT_EQ(pdf(2.0, neg), 0.0);
  EXPECT_EQ(pdf(3.0, neg), 0.0);
}

TEST(GpdPdf, MatchesDifferentiatedCdf) {
  const GpdParams p{0.0, 0.3, 2.0};
  const double h = 1e-5;
  const double fd = (cdf(1.0 + h, p) - cdf(1.0 - h, p)) / (2 * h);
  EXPECT_NEAR(pdf(1.0, p), fd, 1e-8);
}

TEST(GpdCdf, KnownValues) {
  const GpdParams p{0.0, 1.0, 1.0};
  EXPECT_EQ(cdf(0.0, p), 0.0);
  EXPECT_NEAR(cdf(1.0, p), 0.5, 1e-15);
  EXPECT_EQ(cdf(-3.0, p), 0.0);
  const GpdParams neg{0.0, -0.5, 1.0};
  EXPECT_EQ(cdf(2.5, neg), 1.0);
}

TEST(GpdCdf, MatchesQuadratureOfPdf) {
  Rng rng(10);
  for (int i = 0; i < 50; ++i) {
    const auto p = random_params(rng);
    const double x = quantile(rng.uniform(0.05, 0.97), p);
    const double q = integrate([&](double t) { return pdf(t, p); }, p.theta, x);
    EXPECT_NEAR(q, cdf(x, p), 1e-8) << p.k << " " << p.sigma;
  }
}

TEST(GpdQuantile, KnownValuesAndErrors) {
  const GpdParams p{0.0, 1.0, 1.0};
  EXPECT_NEAR(quantile(0.5, p), 1.0, 1e-15);
  const GpdParams q{3.0, 0.4, 2.0};
  EXPECT_NEAR(quantile(1e-12, q), 3.0, 1e-9);
  EXPECT_THROW(quantile(0.0, p), Error);
  EXPECT_THROW(quantile(1.0, p), Error);
  EXPECT_THROW(quantile(-0.1, p), Error);
}

TEST(GpdQuantile, InvertsCdf) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const auto p = random_params(rng);
    const double q = rng.uniform(0.001, 0.999);
    EXPECT_NEAR(cdf(quantile(q, p), p), q, 1e-12);
  }
  const GpdParams p{0.0, 0.25, 1.0};
  for (int i = 1; i <= 999; ++i) EXPECT_NEAR(cdf(quantile(i / 1000.0, p), p), i / 1000.0, 1e-12);
}

TEST(GpdDensity, NormalizedNonNegativeMonotone) {
  Rng rng(12);
  for (int i = 0; i < 30; ++i) {
    const auto p = random_params(rng);
    const double hi = p.k > 0 ? quantile(1 - 1e-9, p) : p.upper();
    // Panels split at decade quantiles so the heavy tail does not starve the body.
    double mass = 0.0, lo = p.theta;
    for (int j = 1; j <= 9; ++j) {
      const double next = j == 9 ? hi : quantile(1.0 - std::pow(10.0, -j), p);
      mass += integrate([&](double t) { return pdf(t, p); }, lo, next);
      lo = next;
    }
    EXPECT_GE(mass, 1 - 1e-6) << p.k;
    EXPECT_LE(mass, 1 + 1e-9) << p.k;
    double prev = 0.0;
    for (int j = 0; j <= 200; ++j) {
      const double x = p.theta - 1 + (hi - p.theta + 2) * j / 200.0;
      EXPECT_GE(pdf(x, p), 0.0);
      EXPECT_GE(cdf(x, p), prev);
      prev = cdf(x, p);
    }
  }
}

TEST(GpdSample, DeterministicAndDistributed) {
  const GpdParams p{0.0, 0.3, 1.0};
  EXPECT_EQ(sample(p, 1, 77), sample(p, 1, 77));
  EXPECT_NE(sample(p, 1, 77), sample(p, 1, 78));
  EXPECT_LT(ks_statistic(sample(p, 100000, 5), p), 0.01);
  const GpdParams neg{0.0, -0.5, 1.0};
  for (double v : sample(neg, 10000, 6)) EXPECT_LT(v, 2.0);
}

TEST(GpdFit, RecoversPositiveShape) {
  const auto data = sample({5.0, 0.3, 2.0}, 20000, 1);
  const auto fit = fit_three_param(data);
  EXPECT_GE(fit.params.theta, 5.0);
  EXPECT_LE(fit.params.theta, 5.01);
  EXPECT_NEAR(fit.params.k, 0.3, 0.05);
  EXPECT_NEAR(fit.params.sigma, 2.0, 0.1);
  EXPECT_EQ(fit.gof.n, data.size());
}

TEST(GpdFit, RecoversNegativeShape) {
  const auto fit = fit_three_param(sample({5.0, -0.2, 2.0}, 20000, 2));
  EXPECT_LT(fit.params.k, 0.0);
  EXPECT_NEAR(fit.params.k, -0.2, 0.05);
}

TEST(GpdFit, RejectsDataWithoutSpread) {
  EXPECT_THROW(fit_three_param(std::vector<double>(500, 3.0)), Error);
  std::vector<double> few(49, 1.0);
  for (int i = 0; i < 49; ++i) few[i] = 1.0 + i;
  few.push_back(1.0);
  EXPECT_THROW(fit_three_param(few), Error);  // 49 values above the minimum
}

TEST(GpdMle, DegenerateInputStaysFinite) {
  std::vector<double> x;
  for (int i = 0; i < 200; ++i) x.push_back(1.0 + (i % 2 ? 1e-9 : -1e-9));
  const auto ks = fit_two_param_mle(x);
  EXPECT_TRUE(std::isfinite(ks.k));
  EXPECT_TRUE(std::isfinite(ks.sigma));
  EXPECT_LT(ks.k, 0.0);
  EXPECT_GT(ks.k, -1.0);
  EXPECT_NEAR(ks.sigma, 1.0, 1e-3);
}

TEST(GpdMle, NearExponentialShape) {
  const auto ks = fit_two_param_mle(sample({0.0, 0.05, 1.0}, 20000, 3));
  EXPECT_GE(ks.k, -0.05);
  EXPECT_LE(ks.k, 0.15);
}

TEST(GpdMle, BeatsGridSearchAndMomentStart) {
  for (std::uint64_t seed : {4u, 5u, 6u}) {
    const auto x = sample({0.0, seed == 5 ? -0.3 : 0.35, 1.7}, 2000, seed);
    const auto ks = fit_two_param_mle(x);
    const double best = log_likelihood(x, ks.k, ks.sigma);
    double mean = 0.0;
    for (double v : x) mean += v / x.size();
    double grid_best = -INFINITY;
    for (int i = 0; i < 200; ++i)
      for (int j = 0; j < 200; ++j) {
        const double k = -1.0 + 2.0 * (i + 0.5) / 200;
        const double s = 0.1 + (10 * mean - 0.1) * j / 199.0;
        grid_best = std::max(grid_best, log_likelihood(x, k, s));
      }
    EXPECT_GE(best, grid_best - 1e-6);
    // Method-of-moments start, recomputed independently.
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean) / (x.size() - 1);
    const double k0 = 0.5 * (1 - mean * mean / var);
    const double s0 = 0.5 * mean * (mean * mean / var + 1);
    EXPECT_GE(best, log_likelihood(x, k0, s0));
  }
}

TEST(GpdMle, AnalyticDerivativesMatchFiniteDifferences) {
  const auto x = sample({0.0, 0.2, 1.5}, 500, 7);
  const double k = 0.25, s = 1.4, h = 1e-6;
  const auto d = detail::ll_derivatives(x, k, s);
  EXPECT_NEAR(d.g[0], (log_likelihood(x, k + h, s) - log_likelihood(x, k - h, s)) / (2 * h), 1e-4);
  EXPECT_NEAR(d.g[1], (log_likelihood(x, k, s + h) - log_likelihood(x, k, s - h)) / (2 * h), 1e-4);
  const auto dk = detail::ll_derivatives(x, k + h, s), dkm = detail::ll_derivatives(x, k - h, s);
  const auto ds = detail::ll_derivatives(x, k, s + h), dsm = detail::ll_derivatives(x, k, s - h);
  EXPECT_NEAR(d.h[0], (dk.g[0] - dkm.g[0]) / (2 * h), 1e-3);
  EXPECT_NEAR(d.h[1], (ds.g[0] - dsm.g[0]) / (2 * h), 1e-3);
  EXPECT_NEAR(d.h[2], (ds.g[1] - dsm.g[1]) / (2 * h), 1e-3);
}

TEST(GpdMle, NonConvergenceCarriesBestParameters) {
  const auto x = sample({0.0, 0.2, 1.5}, 500, 8);
  MleOptions opt;
  opt.max_iterations = 3;
  try {
    fit_two_param_mle(x, opt);
    FAIL();
  } catch (const GpdFitError& e) {
    EXPECT_TRUE(std::isfinite(e.best_k));
    EXPECT_GT(e.best_sigma, 0.0);
    EXPECT_EQ(e.iterations, 3u);
  }
  EXPECT_THROW(fit_two_param_mle(std::vector<double>{1.0, 0.0, 2.0}), Error);
}

TEST(GpdMle, ErrorShrinksWithSampleSize) {
  std::vector<double> small, large;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const GpdParams p{0.0, 0.3, 2.0};
    const auto a = fit_two_param_mle(sample(p, 1000, 100 + s));
    const auto b = fit_two_param_mle(sample(p, 100000, 200 + s));
    small.push_back(std::hypot(a.k - 0.3, a.sigma - 2.0));
    large.push_back(std::hypot(b.k - 0.3, b.sigma - 2.0));
  }
  EXPECT_LT(median(large), median(small));
}

TEST(GpdFit, ShiftEquivariance) {
  const auto x = sample({0.0, 0.3, 2.0}, 5000, 9);
  const auto base = fit_three_param(x);
  for (double c : {0.5, 10.0, -3.0}) {
    std::vector<double> y(x);
    for (auto& v : y) v += c;
    const auto f = fit_three_param(y);
    EXPECT_NEAR(f.params.theta, base.params.theta + c, 1e-9);
    EXPECT_NEAR(f.params.k, base.params.k, 1e-9);
    EXPECT_NEAR(f.params.sigma, base.params.sigma, 1e-9);
  }
}

TEST(GpdFit, ScaleEquivariance) {
  const auto x = sample({0.0, -0.15, 1.0}, 5000, 10);
  const auto base = fit_two_param_mle(x);
  for (double c : {0.25, 3.0, 40.0}) {
    std::vector<double> y(x);
    for (auto& v : y) v *= c;
    const auto f = fit_two_param_mle(y);
    EXPECT_NEAR(f.k, base.k, 1e-9);
    EXPECT_NEAR(f.sigma / (c * base.sigma), 1.0, 1e-9);
  }
}

TEST(GpdGof, PerfectFitConstruction) {
  const GpdParams p{1.0, 0.3, 2.0};
  std::vector<double> x;
  const int n = 2000;
  for (int i = 1; i <= n; ++i) x.push_back(quantile((i - 0.5) / n, p));
  const auto g = gof_adjusted_r2(x, p);
  EXPECT_GE(g.r_squared_adj, 0.9999);
  EXPECT_LE(g.qq_points.size(), kMaxQqPoints);
  for (std::size_t i = 1; i < g.qq_points.size(); ++i) {
    EXPECT_LE(g.qq_points[i - 1].first, g.qq_points[i].first);
    EXPECT_LE(g.qq_points[i - 1].second, g.qq_points[i].second);
  }
  for (const auto& [e, m] : g.qq_points) EXPECT_NEAR(e, m, 1e-9 * (1 + std::abs(e)));
}

TEST(GpdGof, SelfSampledFitIsHigh) {
  const auto fit = fit_three_param(sample({0.0, 0.3, 2.0}, 20000, 11));
  EXPECT_GE(fit.gof.r_squared_adj, 0.99);
}

TEST(GpdGof, MismatchedDistributionScoresLower) {
  const auto matched = fit_three_param(sample({0.0, 0.3, 2.0}, 5000, 12));
  Rng rng(13);
  std::vector<double> uni(5000);
  for (auto& v : uni) v = rng.uniform();
  // Uniform data is GPD with k = -1; an exponential-tailed model misses it.
  const auto g = gof_adjusted_r2(uni, {0.0, 0.3, 0.4});
  EXPECT_LT(g.r_squared_adj, matched.gof.r_squared_adj);
  const auto fitted = fit_three_param(uni);
  EXPECT_LE(fitted.gof.r_squared_adj, 1.0);
}

TEST(GpdGof, RejectsTinySamples) {
  EXPECT_THROW(gof_adjusted_r2(std::vector<double>(9, 1.0), {0, 0.2, 1}), Error);
}

TEST(GpdParams, ShapeNudging) {
  EXPECT_EQ(nudge_shape(0.0), 1e-8);
  EXPECT_EQ(nudge_shape(-1e-12), -1e-8);
  EXPECT_EQ(nudge_shape(0.2), 0.2);
  EXPECT_FALSE((GpdParams{0, 0.0, 1}).valid());
  EXPECT_FALSE((GpdParams{0, 0.1, 0}).valid());
}
