#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pinadapt/metrics.hpp"
#include "pinadapt/random.hpp"

using namespace pinadapt;

namespace {

LabelMask row(std::vector<std::uint8_t> v) {
  const std::size_t n = v.size();
  return LabelMask(1, n, std::move(v));
}

LabelMask random_mask(std::size_t n, std::size_t k, Rng& rng, bool with_ignore) {
  LabelMask m(1, n);
  for (auto& v : m.values) {
    v = static_cast<std::uint8_t>(rng.index(k));
    if (with_ignore && rng.uniform() < 0.1) v = kDefaultIgnoreIndex;
  }
  return m;
}

}  // namespace

TEST(Miou, PerfectPrediction) {
  ConfusionMatrix cm(3);
  const auto gt = row({0, 1, 2, 2, 1, 0});
  cm.accumulate(gt, gt);
  EXPECT_EQ(miou(cm).miou, 1.0);
}

TEST(Miou, DisjointPrediction) {
  ConfusionMatrix cm(2);
  cm.accumulate(row({1, 1, 0, 0}), row({0, 0, 1, 1}));
  EXPECT_EQ(miou(cm).miou, 0.0);
}

TEST(Miou, SevenTwelfthsCase) {
  // gt {0,0,1,1}, pred {0,1,1,1}: IoU_0 = 1/2, IoU_1 = 2/3, mean 7/12.
  ConfusionMatrix cm(2);
  cm.accumulate(row({0, 1, 1, 1}), row({0, 0, 1, 1}));
  const auto r = miou(cm);
  EXPECT_DOUBLE_EQ(*r.per_class[0], 0.5);
  EXPECT_DOUBLE_EQ(*r.per_class[1], 2.0 / 3.0);
  EXPECT_EQ(r.miou, 7.0 / 12.0);
}

TEST(Miou, EmptyUnionClassesAreExcluded) {
  ConfusionMatrix cm(3);
  cm.accumulate(row({0, 1}), row({0, 1}));
  const auto r = miou(cm);
  EXPECT_FALSE(r.per_class[2].has_value());
  EXPECT_EQ(r.miou, 1.0);
  const auto j = to_json(r);
  EXPECT_TRUE(j.at("per_class_iou")[2].is_null());
}

TEST(Miou, IgnoredPixelsDoNotCount) {
  ConfusionMatrix cm(2);
  cm.accumulate(row({1, 0, 1}), row({0, 255, 255}));
  EXPECT_EQ(cm.total(), 1u);
  EXPECT_EQ(cm.at(0, 1), 1u);
}

TEST(Miou, AllEmptyThrows) {
  ConfusionMatrix cm(2);
  cm.accumulate(row({0}), row({255}));
  EXPECT_THROW(miou(cm), ValidationError);
}

TEST(Miou, OutOfRangeValuesThrow) {
  ConfusionMatrix cm(2);
  EXPECT_THROW(cm.accumulate(row({0}), row({7})), ValidationError);
  EXPECT_THROW(cm.accumulate(row({5}), row({0})), ValidationError);
  EXPECT_THROW(cm.accumulate(row({0, 0}), row({0})), ValidationError);
  EXPECT_THROW(ConfusionMatrix(0), ValidationError);
}

TEST(Miou, AccumulationIsAssociativeOverRandomPartitions) {
  Rng rng(11);
  constexpr std::size_t k = 5;
  std::vector<std::pair<LabelMask, LabelMask>> pairs;
  for (int i = 0; i < 30; ++i) pairs.emplace_back(random_mask(40, k, rng, false), random_mask(40, k, rng, true));

  ConfusionMatrix whole(k);
  for (const auto& [p, g] : pairs) whole.accumulate(p, g);

  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t parts = 1 + rng.index(6);
    std::vector<ConfusionMatrix> partial(parts, ConfusionMatrix(k));
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (const std::size_t i : order) partial[rng.index(parts)].accumulate(pairs[i].first, pairs[i].second);
    ConfusionMatrix merged(k);
    for (std::size_t i = parts; i-- > 0;) merged += partial[i];
    EXPECT_EQ(merged, whole);
    EXPECT_EQ(miou(merged).miou, miou(whole).miou);
  }
}

TEST(Miou, InvariantToJointClassPermutation) {
  Rng rng(12);
  constexpr std::size_t k = 4;
  const std::uint8_t perm[k] = {2, 0, 3, 1};
  ConfusionMatrix a(k);
  ConfusionMatrix b(k);
  for (int i = 0; i < 10; ++i) {
    LabelMask p = random_mask(50, k, rng, false);
    LabelMask g = random_mask(50, k, rng, false);
    a.accumulate(p, g);
    for (auto& v : p.values) v = perm[v];
    for (auto& v : g.values) v = perm[v];
    b.accumulate(p, g);
  }
  EXPECT_NEAR(miou(a).miou, miou(b).miou, 1e-12);
}

TEST(Miou, MergeRejectsClassMismatch) {
  ConfusionMatrix a(2);
  EXPECT_THROW(a += ConfusionMatrix(3), ValidationError);
}

TEST(MeanStd, PopulationStatistics) {
  const auto s = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(1.25));
  EXPECT_THROW(mean_std({}), ValidationError);
}
