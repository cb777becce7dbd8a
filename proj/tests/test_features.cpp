#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "gazetail/features.hpp"

using namespace gazetail;

namespace {

GpdParams random_params(Rng& rng) {
  return {rng.uniform(0.0, 1.0), nudge_shape(rng.uniform(-0.3, 0.5)), rng.uniform(1.0, 3.0)};
}

FeatureVector with_values(std::vector<double> v) {
  FeatureVector f;
  f.values = std::move(v);
  return f;
}

// Hellinger distance between the two pdfs restricted to their own
// [q05, q95] windows, by composite Simpson quadrature over [lo, hi].
double windowed_hellinger(const GpdParams& f, const GpdParams& g, double lo, double hi) {
  auto windowed = [](const GpdParams& p, double x) {
    return (x < quantile(0.05, p) || x > quantile(0.95, p)) ? 0.0 : pdf(x, p);
  };
  const int n = 200000;
  const double h = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + h * i;
    const double d = std::sqrt(windowed(f, x)) - std::sqrt(windowed(g, x));
    s += (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2)) * d * d;
  }
  return std::sqrt(0.5 * s * h / 3.0);
}

}  // namespace

TEST(CommonGrid, SinglePdfSpansItsWindow) {
  const GpdParams p{1.0, 0.2, 2.0};
  GpdParams ps[] = {p};
  const auto g = common_grid(ps);
  EXPECT_EQ(g.lo, quantile(0.05, p));
  EXPECT_EQ(g.hi, quantile(0.95, p));
  EXPECT_EQ(g.points.front(), g.lo);
  EXPECT_EQ(g.points.back(), g.hi);
}

TEST(CommonGrid, DisjointPdfs) {
  const GpdParams a{0.0, -0.5, 1.0}, b{50.0, 0.1, 1.0};
  GpdParams ps[] = {b, a};
  const auto g = common_grid(ps);
  EXPECT_EQ(g.lo, quantile(0.05, a));
  EXPECT_EQ(g.hi, quantile(0.95, b));
}

TEST(CommonGrid, EqualSpacingAndErrors) {
  GpdParams ps[] = {{0.0, 0.3, 2.0}, {1.0, -0.1, 5.0}};
  const auto g = common_grid(ps);
  ASSERT_EQ(g.points.size(), 200u);
  const double h = (g.hi - g.lo) / 199.0;
  for (std::size_t i = 1; i < g.points.size(); ++i)
    EXPECT_NEAR(g.points[i] - g.points[i - 1], h, 1e-12);
  EXPECT_THROW(common_grid(std::span<const GpdParams>{}), Error);
}

TEST(Embed, OwnWindowMatchesPdf) {
  const GpdParams p{0.5, 0.25, 3.0};
  GpdParams ps[] = {p};
  const auto g = common_grid(ps);
  const auto v = embed_pdf(p, g);
  for (std::size_t i = 1; i + 1 < g.points.size(); ++i) {
    const double direct = pdf(g.points[i], p);
    EXPECT_NEAR(v.values[i] * v.values[i], direct, 0.01 * direct) << i;
  }
}

TEST(Embed, ZeroOutsideWindow) {
  const GpdParams p{10.0, 0.1, 1.0};
  const auto g = make_grid(0.0, 40.0);
  const auto v = embed_pdf(p, g);
  for (std::size_t i = 0; i < g.points.size(); ++i) {
    if (g.points[i] < quantile(0.05, p) || g.points[i] > quantile(0.95, p))
      EXPECT_EQ(v.values[i], 0.0);
    EXPECT_GE(v.values[i], 0.0);
    EXPECT_TRUE(std::isfinite(v.values[i]));
  }
  EXPECT_EQ(v.values[0], 0.0);
}

TEST(Embed, RiemannMassNearNinetyPercent) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto p = random_params(rng);
    GpdParams ps[] = {p};
    const auto g = common_grid(ps);
    const auto v = embed_pdf(p, g);
    double mass = 0.0;
    for (double x : v.values) mass += x * x * g.spacing();
    EXPECT_GE(mass, 0.88);
    EXPECT_LE(mass, 0.92);
  }
}

TEST(Embed, HellingerConsistency) {
  Rng rng(2);
  for (int i = 0; i < 30; ++i) {
    const auto f = random_params(rng), h = random_params(rng);
    GpdParams ps[] = {f, h};
    const auto g = common_grid(ps);
    const auto vf = embed_pdf(f, g), vh = embed_pdf(h, g);
    double d2 = 0.0;
    for (std::size_t j = 0; j < g.points.size(); ++j)
      d2 += (vf.values[j] - vh.values[j]) * (vf.values[j] - vh.values[j]);
    const double embedded = std::sqrt(d2 * g.spacing() / 2.0);
    const double direct = windowed_hellinger(f, h, g.lo, g.hi);
    EXPECT_NEAR(embedded, direct, 0.05 * direct) << i;
  }
}

TEST(Embed, ScaleCovariant) {
  const GpdParams a{0.5, 0.2, 2.0}, b{1.0, -0.1, 3.0};
  const double c = 7.5;
  const GpdParams ac{c * a.theta, a.k, c * a.sigma}, bc{c * b.theta, b.k, c * b.sigma};
  GpdParams ps[] = {a, b}, pcs[] = {ac, bc};
  const auto g = common_grid(ps), gc = common_grid(pcs);
  EXPECT_NEAR(gc.lo, c * g.lo, 1e-12 * c);
  EXPECT_NEAR(gc.hi, c * g.hi, 1e-12 * c);
  const auto v = embed_pdf(a, g), vc = embed_pdf(ac, gc);
  for (std::size_t i = 0; i < v.values.size(); ++i)
    EXPECT_NEAR(vc.values[i] * std::sqrt(c), v.values[i], 1e-9);
  EXPECT_EQ(embed_pdf(a, g).values, v.values);
}

TEST(Select, DifferingIndexFirst) {
  std::vector<FeatureVector> vs;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> x(200, 1.0);
    x[7] = i;
    vs.push_back(with_values(x));
  }
  const auto sel = select_top_variance(vs, 3);
  EXPECT_EQ(sel.indices, (std::vector<std::size_t>{7, 0, 1}));
}

TEST(Select, IdenticalVectorsTieBreak) {
  std::vector<FeatureVector> vs(4, with_values(std::vector<double>(200, 0.3)));
  const auto sel = select_top_variance(vs, 20);
  std::vector<std::size_t> expect(20);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(sel.indices, expect);
  EXPECT_THROW(select_top_variance(vs, 0), Error);
  EXPECT_THROW(select_top_variance(vs, 201), Error);
  EXPECT_THROW(select_top_variance(std::span(vs).first(1), 1), Error);
}

TEST(Select, MatchesArgsortOracle) {
  Rng rng(3);
  std::vector<FeatureVector> vs;
  for (int i = 0; i < 30; ++i) {
    std::vector<double> x(200);
    for (std::size_t j = 0; j < 200; ++j) x[j] = rng.uniform() * (1.0 + j % 13);
    vs.push_back(with_values(x));
  }
  std::vector<double> var(200);
  for (std::size_t j = 0; j < 200; ++j) {
    double m = 0;
    for (const auto& v : vs) m += v.values[j] / vs.size();
    for (const auto& v : vs) var[j] += (v.values[j] - m) * (v.values[j] - m) / (vs.size() - 1);
  }
  std::vector<std::size_t> order(200);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return var[a] != var[b] ? var[a] > var[b] : a < b; });
  for (std::size_t K : {1, 20, 70, 200}) {
    const auto sel = select_top_variance(vs, K);
    EXPECT_EQ(sel.indices, std::vector<std::size_t>(order.begin(), order.begin() + K));
  }
}

TEST(Project, GatherInSelectionOrder) {
  std::vector<double> x(200);
  std::iota(x.begin(), x.end(), 0.5);
  const auto v = with_values(x);
  FeatureSelection all;
  all.indices.resize(200);
  std::iota(all.indices.begin(), all.indices.end(), 0);
  EXPECT_EQ(project(v, all), x);
  EXPECT_EQ(project(v, {{42}}), std::vector<double>{42.5});
  const FeatureSelection sel{{9, 3, 150, 0}};
  const auto p = project(v, sel);
  for (std::size_t i = 0; i < sel.indices.size(); ++i) EXPECT_EQ(p[i], x[sel.indices[i]]);
  EXPECT_THROW(project(v, {{200}}), Error);
}

TEST(FeatureCsv, RoundTrip) {
  FeatureMatrix fm;
  fm.config = {{"seed", 3}};
  GpdParams ps[] = {{0.0, 0.3, 2.0}, {1.0, -0.1, 5.0}};
  fm.grid = common_grid(ps);
  fm.rows.push_back(embed_pdf(ps[0], fm.grid, {0, "a"}));
  fm.rows.push_back(embed_pdf(ps[1], fm.grid, {4, "b"}));
  const auto text = features_to_csv(fm);
  EXPECT_NE(text.find("# grid_lo="), std::string::npos);
  const auto back = features_from_csv(text, "mem");
  EXPECT_EQ(features_to_csv(back), text);
  EXPECT_EQ(back.rows[1].source.observer_id, "b");
  EXPECT_EQ(back.rows[1].values, fm.rows[1].values);
  EXPECT_THROW(features_from_csv("trial_index,observer\n", "mem"), Error);
}
