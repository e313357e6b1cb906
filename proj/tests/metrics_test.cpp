#include <gtest/gtest.h>

#include <cmath>

#include "fedsurg/errors.hpp"
#include "fedsurg/metrics.hpp"
#include "reference_table.hpp"
#include "test_support.hpp"

using namespace fedsurg;
using namespace fedsurg::metrics;

namespace {

Tensor labels(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(Shape{n}, std::move(v));
}

MetricSet seg_metrics(double iou, double dice) {
  MetricSet m;
  m.add("iou", iou);
  m.add("dice", dice);
  return m;
}

}  // namespace

TEST(DiceIou, IdenticalMapsScoreHundred) {
  Tensor t = labels({0, 1, 2, 2, 1, 0});
  SegScore s = dice_iou(t, t, 3);
  EXPECT_EQ(*s.dice, 100.0);
  EXPECT_EQ(*s.iou, 100.0);
}

TEST(DiceIou, DisjointMasksScoreZero) {
  SegScore s = dice_iou(labels({1, 1, 0, 0}), labels({0, 0, 1, 1}), 2);
  EXPECT_EQ(*s.dice, 0.0);
  EXPECT_EQ(*s.iou, 0.0);
}

TEST(DiceIou, HalfOverlap) {
  // |P| = |G| = 4, |P and G| = 2
  SegScore s = dice_iou(labels({1, 1, 1, 1, 0, 0}), labels({0, 0, 1, 1, 1, 1}), 2);
  EXPECT_DOUBLE_EQ(*s.dice, 50.0);
  EXPECT_NEAR(*s.iou, 33.333, 1e-3);
}

TEST(DiceIou, AbsentClassesSkippedAndEmptyUndefined) {
  // class 2 absent from both maps: mean is over class 1 only
  SegScore s = dice_iou(labels({1, 1, 0}), labels({1, 1, 0}), 3);
  EXPECT_EQ(*s.dice, 100.0);
  SegScore none = dice_iou(labels({0, 0}), labels({0, 0}), 3);
  EXPECT_FALSE(none.dice.has_value());
  EXPECT_FALSE(none.iou.has_value());
  EXPECT_THROW(dice_iou(labels({3}), labels({0}), 3), InputError);
  EXPECT_THROW(dice_iou(labels({0, 1}), labels({0}), 3), DimensionError);
}

TEST(DiceIou, IouBelowDiceAndPerClassIdentity) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor p(Shape{40}), t(Shape{40});
    for (std::size_t i = 0; i < 40; ++i) {
      p[i] = static_cast<double>(rng.below(2));
      t[i] = static_cast<double>(rng.below(2));
    }
    SegScore s = dice_iou(p, t, 2);
    if (!s.dice) continue;
    EXPECT_LE(*s.iou, *s.dice);
    const double iou = *s.iou / 100.0;
    EXPECT_NEAR(*s.dice / 100.0, 2 * iou / (1 + iou), 1e-9);
  }
}

TEST(SegmentationEvaluator, PerImageVersusPooled) {
  SegmentationEvaluator per(2, Averaging::per_image), pooled(2, Averaging::pooled);
  // image A: perfect; image B: half overlap; image C: no foreground (skipped per image)
  for (auto* e : {&per, &pooled}) {
    e->add(labels({1, 1, 0, 0}), labels({1, 1, 0, 0}));
    e->add(labels({1, 1, 1, 1, 0, 0}), labels({0, 0, 1, 1, 1, 1}));
    e->add(labels({0, 0}), labels({0, 0}));
  }
  EXPECT_DOUBLE_EQ(*per.result().dice, 75.0);
  // pooled: inter 4, |P| 6, |G| 6
  EXPECT_DOUBLE_EQ(*pooled.result().dice, 100.0 * 8.0 / 12.0);
  EXPECT_FALSE(SegmentationEvaluator(2, Averaging::per_image).result().dice.has_value());
}

TEST(Rmse, Basics) {
  Rng rng(2);
  Tensor a = check::random_tensor(rng, {5, 7});
  EXPECT_EQ(rmse(a, a), 0.0);
  Tensor b = a;
  for (auto& v : b.data()) v += 0.75;
  EXPECT_NEAR(rmse(b, a), 0.75, 1e-12);
  Tensor c = check::random_tensor(rng, {5, 7});
  double s = 0;
  for (std::size_t i = 0; i < 35; ++i) s += (a[i] - c[i]) * (a[i] - c[i]);
  EXPECT_NEAR(rmse(a, c), std::sqrt(s / 35.0), 1e-12);
}

TEST(ArgmaxLabels, LastAxis) {
  Tensor logits(Shape{1, 2, 3}, {0.1, 0.7, 0.2, 5.0, -1.0, 4.0});
  EXPECT_EQ(argmax_labels(logits), Tensor(Shape{1, 2}, {1.0, 0.0}));
}

TEST(DeltaM, ReportedSegmentationRows) {
  const auto& local = reference::local_row();
  const MetricSet base = reference::metric_set(local, 0);
  EXPECT_NEAR(delta_m(reference::metric_set(reference::row("FedAvg"), 0), base).value, -6.46, 0.01);
  EXPECT_NEAR(delta_m(reference::metric_set(reference::row("FedRep"), 0), base).value, -0.08, 0.01);
  EXPECT_NEAR(delta_m(seg_metrics(54.59, 66.38), seg_metrics(58.77, 70.47)).value, -6.46, 0.01);
}

TEST(DeltaM, ReportedDepthRow) {
  MetricSet run, base;
  run.add("rmse", 28.61);
  base.add("rmse", 10.76);
  DeltaM d = delta_m(run, base);
  EXPECT_NEAR(d.value, -165.9, 0.3);
  EXPECT_NEAR(d.value, -165.75, 0.3);
  ASSERT_EQ(d.contributions.size(), 1u);
}

TEST(DeltaM, EveryReportedCellWithinRoundingInterval) {
  for (const auto& r : reference::method_rows()) {
    for (std::size_t s = 0; s < reference::kSites.size(); ++s) {
      const double dm =
          delta_m(reference::metric_set(r, s), reference::metric_set(reference::local_row(), s)).value;
      auto [lo, hi] = reference::rounding_interval(r, s);
      EXPECT_LE(lo, dm);
      EXPECT_GE(hi, dm);
      // printed values carry their own rounding of +-0.005
      EXPECT_LE(lo - 0.005, r.sites[s].delta_m) << r.method << " " << reference::kSites[s].site;
      EXPECT_GE(hi + 0.005, r.sites[s].delta_m) << r.method << " " << reference::kSites[s].site;
    }
  }
}

TEST(DeltaM, AverageColumnIsMeanOfSiteValues) {
  for (const auto& r : reference::method_rows()) {
    double sum = 0;
    for (const auto& s : r.sites) sum += s.delta_m;
    // site values and the average are each rounded to +-0.005
    EXPECT_NEAR(sum / 5.0, r.average, 0.0101) << r.method;
  }
}

TEST(DeltaM, IdentityDirectionAndErrors) {
  MetricSet m = seg_metrics(50, 60);
  EXPECT_EQ(delta_m(m, m).value, 0.0);
  EXPECT_GT(delta_m(seg_metrics(100, 60), m).value, 0.0);
  MetricSet r1, r2;
  r1.add("rmse", 2.0);
  r2.add("rmse", 1.0);
  EXPECT_LT(delta_m(r1, r2).value, 0.0);
  MetricSet zero = seg_metrics(0.0, 60);
  EXPECT_THROW(delta_m(m, zero), InputError);
  EXPECT_THROW(delta_m(m, r2), ContractViolation);
  MetricSet other;
  other.add("iou", 1);
  other.add("rmse", 1);
  EXPECT_THROW(delta_m(m, other), ContractViolation);
  EXPECT_THROW(direction_of("psnr"), InputError);
}

TEST(Summarize, MeanAndSampleStd) {
  Summary one = summarize(std::vector<double>{4.2});
  EXPECT_EQ(one.mean, 4.2);
  EXPECT_EQ(one.stddev, 0.0);
  Summary two = summarize(std::vector<double>{1.0, 3.0});
  EXPECT_EQ(two.mean, 2.0);
  EXPECT_NEAR(two.stddev, std::sqrt(2.0), 1e-15);
  Rng rng(3);
  std::vector<std::map<std::string, double>> runs(5);
  for (auto& r : runs) {
    r["dice"] = rng.uniform(0, 100);
    r["rmse"] = rng.uniform(0, 10);
  }
  auto s = summarize(runs);
  for (const char* name : {"dice", "rmse"}) {
    double mean = 0;
    for (auto& r : runs) mean += r[name];
    mean /= 5;
    double ss = 0;
    for (auto& r : runs) ss += (r[name] - mean) * (r[name] - mean);
    EXPECT_NEAR(s[name].mean, mean, 1e-12);
    EXPECT_NEAR(s[name].stddev, std::sqrt(ss / 4), 1e-12);
  }
  EXPECT_THROW(summarize(std::vector<double>{}), InputError);
}
