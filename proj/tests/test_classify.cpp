#include <gtest/gtest.h>

#include <numeric>

#include "gazetail/classify.hpp"

using namespace gazetail;

namespace {

std::vector<LabeledVector> two_blobs(std::uint64_t seed, std::size_t n, double gap, double noise) {
  Rng rng(seed);
  std::vector<LabeledVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = i % 3 == 0;
    const double c = pos ? gap : -gap;
    out.push_back({{c + noise * rng.normal(), 0.5 * c + noise * rng.normal()}, pos ? "a" : "b"});
  }
  return out;
}

std::vector<TrialRecord> observer_records(const std::vector<double>& ks,
                                          const std::vector<double>& sigmas, std::size_t trials,
                                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrialRecord> recs;
  for (std::size_t t = 0; t < trials; ++t)
    for (std::size_t o = 0; o < ks.size(); ++o) {
      TrialRecord r;
      r.trial_index = t;
      r.observer_id = "obs" + std::to_string(o);
      r.ok = true;
      r.params = {0.5, nudge_shape(ks[o] + 0.05 * rng.normal()),
                  sigmas[o] * (1.0 + 0.05 * rng.normal())};
      recs.push_back(r);
    }
  return recs;
}

std::vector<FeatureVector> noise_features(std::size_t observers, std::size_t trials,
                                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<FeatureVector> out;
  for (std::size_t t = 0; t < trials; ++t)
    for (std::size_t o = 0; o < observers; ++o) {
      FeatureVector f;
      f.source = {t, "obs" + std::to_string(100 + o)};
      for (std::size_t i = 0; i < kGridSize; ++i) f.values.push_back(rng.uniform());
      out.push_back(f);
    }
  return out;
}

}  // namespace

TEST(Svm, SeparableDataTrainsPerfectly) {
  const auto data = two_blobs(1, 90, 3.0, 0.3);
  const auto m = train_ovr(data, "a", 0.01, 5);
  for (const auto& d : data) EXPECT_EQ(m.predict(d.x), d.observer == "a");
  EXPECT_EQ(m.positive_label, "a");
  EXPECT_EQ(m.lambda, 0.01);
}

TEST(Svm, FlippedLabelsNegateDecisions) {
  const auto data = two_blobs(2, 60, 1.0, 1.0);
  const auto a = train_ovr(data, "a", 0.05, 3);
  const auto b = train_ovr(data, "b", 0.05, 3);
  for (const auto& d : data) {
    EXPECT_NEAR(a.decision(d.x), -b.decision(d.x), 1e-3);
    if (std::abs(a.decision(d.x)) > 1e-3) EXPECT_NE(a.predict(d.x), b.predict(d.x));
  }
}

TEST(Svm, ObjectiveNearGridSearchOptimum) {
  // 1-D overlapping classes; (w, b) searched on a grid, then refined.
  Rng rng(4);
  std::vector<LabeledVector> data;
  for (int i = 0; i < 40; ++i) {
    const bool pos = i % 4 == 0;
    data.push_back({{(pos ? 1.0 : -0.5) + rng.normal()}, pos ? "p" : "n"});
  }
  const double lambda = 0.1;
  auto obj = [&](double w, double b) {
    return svm_objective({{w}, b, "p", lambda}, data);
  };
  double bw = 0, bb = 0, best = obj(0, 0);
  for (double span = 4.0; span > 1e-6; span /= 10.0) {
    const double cw = bw, cb = bb;
    for (int i = -100; i <= 100; ++i)
      for (int j = -100; j <= 100; ++j) {
        const double w = cw + span * i / 100.0, b = cb + span * j / 100.0;
        const double v = obj(w, b);
        if (v < best) {
          best = v;
          bw = w;
          bb = b;
        }
      }
  }
  const auto m = train_ovr(data, "p", lambda, 6);
  const double got = svm_objective(m, data);
  EXPECT_GE(got, best - 1e-12);
  EXPECT_LE(got, best * 1.01);
}

TEST(Svm, ScaleEquivariance) {
  const auto data = two_blobs(5, 80, 1.0, 1.2);
  const double c = 37.0, lambda = 0.02;
  auto scaled = data;
  for (auto& d : scaled)
    for (auto& x : d.x) x *= c;
  const auto m = train_ovr(data, "a", lambda, 8);
  const auto ms = train_ovr(scaled, "a", lambda * c * c, 8);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double d0 = m.decision(data[i].x), d1 = ms.decision(scaled[i].x);
    EXPECT_NEAR(d0, d1, 1e-6 * std::max(1.0, std::abs(d0)));
    if (std::abs(d0) > 1e-6) EXPECT_EQ(d0 > 0, d1 > 0);
  }
}

TEST(Svm, DeterministicAndErrors) {
  const auto data = two_blobs(6, 30, 1.0, 1.0);
  const auto a = train_ovr(data, "a", 0.1, 1), b = train_ovr(data, "a", 0.1, 1);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
  EXPECT_THROW(train_ovr(data, "zzz", 0.1, 1), Error);
  EXPECT_THROW(train_ovr(data, "a", 0.0, 1), Error);
}

TEST(Evaluate, SeparatedObserversNearPerfect) {
  const auto recs = observer_records({-0.3, 0.2, 0.7}, {10.0, 20.0, 40.0}, 80, 7);
  const auto feats = embed_records(recs);
  EvalConfig cfg;
  cfg.M = 20;
  cfg.N = 2000;
  cfg.repeats = 5;
  cfg.seed = 3;
  const auto reports = evaluate_features(feats, cfg);
  ASSERT_EQ(reports.size(), 3u);
  for (const auto& r : reports) {
    EXPECT_GE(r.mean_recognition_rate, 0.99) << r.observer_id;
    EXPECT_EQ(r.per_repeat_rates.size(), 5u);
  }
}

TEST(Evaluate, NoiseGivesPriorBaselineWithoutClassWeights) {
  const auto feats = noise_features(15, 150, 8);
  EvalConfig cfg;
  cfg.M = 50;
  cfg.N = 5000;
  cfg.repeats = 10;
  cfg.seed = 4;
  cfg.svm.class_weighted = false;
  cfg.svm.iterations = 20000;
  for (const auto& r : evaluate_features(feats, cfg))
    EXPECT_NEAR(r.mean_recognition_rate, 14.0 / 15.0, 0.02) << r.observer_id;
}

TEST(Evaluate, NoiseGivesChanceBalancedAccuracyWithClassWeights) {
  const auto feats = noise_features(15, 150, 9);
  EvalConfig cfg;
  cfg.M = 50;
  cfg.N = 5000;
  cfg.repeats = 10;
  cfg.seed = 5;
  cfg.svm.iterations = 20000;
  double mean_balanced = 0.0;
  const auto reports = evaluate_features(feats, cfg);
  for (const auto& r : reports)
    mean_balanced += 0.5 * (r.mean_true_positive_rate + r.mean_true_negative_rate) / reports.size();
  EXPECT_NEAR(mean_balanced, 0.5, 0.05);
}

TEST(Evaluate, ReproducibleAndMeanIsExact) {
  const auto feats = embed_records(observer_records({0.0, 0.5}, {20.0, 20.0}, 30, 10));
  EvalConfig cfg;
  cfg.M = 10;
  cfg.N = 500;
  cfg.repeats = 1;
  cfg.seed = 11;
  const auto a = evaluate_features(feats, cfg), b = evaluate_features(feats, cfg);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(report_to_json(a[i]), report_to_json(b[i]));

  cfg.repeats = 7;
  for (const auto& r : evaluate_features(feats, cfg)) {
    double s = 0.0;
    for (double x : r.per_repeat_rates) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
      s += x;
    }
    EXPECT_EQ(r.mean_recognition_rate, s / 7.0);
  }
}

TEST(Evaluate, InsufficientTrials) {
  const auto feats = embed_records(observer_records({0.0, 0.5}, {20.0, 20.0}, 10, 12));
  EvalConfig cfg;
  cfg.M = 10;
  EXPECT_THROW(evaluate_features(feats, cfg), Error);
  cfg.M = 9;
  cfg.N = 10;
  cfg.repeats = 1;
  EXPECT_NO_THROW(evaluate_features(feats, cfg));
}

TEST(Sweep, SingleCaseEqualsEvaluate) {
  const auto feats = embed_records(observer_records({0.0, 0.5, 1.0}, {20.0, 20.0, 20.0}, 30, 13));
  EvalConfig cfg;
  cfg.M = 10;
  cfg.N = 300;
  cfg.repeats = 3;
  const SweepCase cases[] = {{cfg, feats}};
  const auto res = sweep(cases);
  const auto direct = evaluate_features(feats, cfg);
  ASSERT_EQ(res.reports.size(), 1u);
  for (std::size_t i = 0; i < direct.size(); ++i)
    EXPECT_EQ(report_to_json(res.reports[0][i]), report_to_json(direct[i]));
}

TEST(Sweep, DistinctKeysAndErrorsContinue) {
  const auto feats = embed_records(observer_records({0.0, 0.5}, {20.0, 20.0}, 30, 14));
  EvalConfig a;
  a.M = 10;
  a.N = 100;
  a.repeats = 2;
  a.K = 10;
  EvalConfig b = a;
  b.K = 50;
  EvalConfig bad = a;
  bad.M = 100;
  const SweepCase cases[] = {{a, feats}, {bad, feats}, {b, feats}};
  const auto res = sweep(cases);
  EXPECT_TRUE(res.errors[0].empty());
  EXPECT_FALSE(res.errors[1].empty());
  EXPECT_TRUE(res.errors[2].empty());
  const auto csv = sweep_to_csv(res);
  EXPECT_EQ(csv.rfind("M,K,N,repeats,metric,images_per_trial,observer,mean_rate,repeat_index,rate\n", 0), 0u);
  EXPECT_NE(csv.find("10,10,100,2,"), std::string::npos);
  EXPECT_NE(csv.find("10,50,100,2,"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 2 * 2);
}

TEST(Report, JsonRoundTrip) {
  const auto feats = embed_records(observer_records({0.0, 0.5}, {20.0, 20.0}, 20, 15));
  EvalConfig cfg;
  cfg.M = 5;
  cfg.N = 50;
  cfg.repeats = 2;
  cfg.metric = "hyperbolic";
  cfg.images_per_trial = 50;
  const auto r = evaluate_features(feats, cfg).front();
  const auto text = report_to_json(r);
  const auto back = report_from_json(io::json::parse(text));
  EXPECT_EQ(report_to_json(back), text);
  EXPECT_EQ(back.config.metric, "hyperbolic");
}
