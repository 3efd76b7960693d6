#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pinadapt/stats.hpp"
#include "test_support.hpp"

using namespace pinadapt;
using testing_support::random_map;

namespace {

double plain_mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double plain_std(std::span<const double> v) {
  const double m = plain_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

TEST(ChannelStats, HandComputedSingleChannel) {
  // values {1,3,5,7}: mean 4, population variance (9+1+1+9)/4 = 5.
  const FeatureMap f(1, 2, 2, std::vector<double>{1, 3, 5, 7});
  const auto s = channel_stats(f);
  EXPECT_DOUBLE_EQ(s.mu[0], 4.0);
  EXPECT_DOUBLE_EQ(s.sigma[0], std::sqrt(5.0 + 1e-5));
}

TEST(ChannelStats, EpsilonIsInsideTheRoot) {
  const FeatureMap f(1, 1, 3, 2.0);
  EXPECT_DOUBLE_EQ(channel_stats(f).sigma[0], std::sqrt(1e-5));
  EXPECT_DOUBLE_EQ(channel_stats(f, StatsEpsilon{1e-3}).sigma[0], std::sqrt(1e-3));
  EXPECT_THROW((void)StatsEpsilon(0.0), ValidationError);
  EXPECT_THROW((void)StatsEpsilon(-1.0), ValidationError);
}

TEST(ChannelStats, BatchMatchesSingle) {
  std::vector<FeatureMap> batch{random_map(3, 4, 5, 1), random_map(3, 4, 5, 2)};
  const auto all = channel_stats(std::span<const FeatureMap>(batch));
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[1], channel_stats(batch[1]));
}

TEST(InstanceNorm, ZeroMeanUnitStd) {
  const FeatureMap f = random_map(4, 8, 8, 3, 2.0, 3.0);
  const FeatureMap n = instance_norm(f);
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_NEAR(plain_mean(n.channel(c)), 0.0, 1e-12);
    EXPECT_NEAR(plain_std(n.channel(c)), 1.0, 1e-5);
  }
}

// The epsilon inside the square root makes this exact only up to O(eps / var),
// so the content is kept well above unit variance.
TEST(InstanceNorm, InvariantToPerChannelAffineContent) {
  const FeatureMap f = random_map(3, 6, 6, 4, 0.0, 3.0);
  FeatureMap g = f;
  const double a[3] = {0.5, 2.0, 7.0};
  const double b[3] = {-1.0, 3.0, 0.25};
  for (std::size_t c = 0; c < 3; ++c) {
    for (auto& v : g.channel(c)) v = a[c] * v + b[c];
  }
  const FeatureMap nf = instance_norm(f);
  const FeatureMap ng = instance_norm(g);
  for (std::size_t i = 0; i < nf.values().size(); ++i) EXPECT_NEAR(nf.values()[i], ng.values()[i], 1e-5);
}

TEST(Adain, OutputStatisticsMatchTarget) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const FeatureMap f = random_map(5, 7, 9, seed, 1.0, 2.0);
    Rng rng(100 + seed);
    StyleStats<double> t(5);
    for (std::size_t c = 0; c < 5; ++c) {
      t.mu[c] = rng.uniform(-3, 3);
      t.sigma[c] = rng.uniform(0.1, 4);
    }
    const FeatureMap out = adain(f, t);
    for (std::size_t c = 0; c < 5; ++c) {
      EXPECT_LE(std::abs(plain_mean(out.channel(c)) - t.mu[c]), 1e-4 * std::max(1.0, std::abs(t.mu[c])));
      EXPECT_LE(std::abs(plain_std(out.channel(c)) - t.sigma[c]) / t.sigma[c], 1e-4);
    }
  }
}

TEST(Adain, Idempotent) {
  const FeatureMap f = random_map(4, 5, 5, 9);
  const StyleStats<double> t({0.5, -1.0, 2.0, 0.0}, {1.5, 0.3, 2.0, 0.8});
  const FeatureMap once = adain(f, t);
  const FeatureMap twice = adain(once, t);
  for (std::size_t i = 0; i < once.values().size(); ++i) EXPECT_NEAR(once.values()[i], twice.values()[i], 1e-4);
}

TEST(Pin, ContentIsPreservedUnderInstanceNorm) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const FeatureMap f = random_map(4, 8, 8, seed, 0.5, 3.0);
    Rng rng(50 + seed);
    StyleStats<double> p(4);
    for (std::size_t c = 0; c < 4; ++c) {
      p.mu[c] = rng.uniform(-3, 3);
      p.sigma[c] = rng.uniform(2, 4);
    }
    const FeatureMap a = instance_norm(pin_apply(f, p));
    const FeatureMap b = instance_norm(f);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-5);
  }
}

TEST(Adain, OwnStatisticsIsIdentity) {
  const FeatureMap f = random_map(4, 5, 5, 10, 3.0, 0.5);
  const FeatureMap out = adain(f, channel_stats(f));
  for (std::size_t i = 0; i < f.values().size(); ++i) EXPECT_NEAR(out.values()[i], f.values()[i], 1e-12);
}

TEST(Adain, ChannelMismatchIsRejected) {
  const FeatureMap f = random_map(3, 2, 2, 1);
  EXPECT_THROW(adain(f, StyleStats<double>(4)), ValidationError);
}

TEST(Pin, IdentityAtSourceStatistics) {
  const FeatureMap f = random_map(6, 8, 8, 11, 0.7, 1.3);
  const FeatureMap out = pin_apply(f, channel_stats(f));
  for (std::size_t i = 0; i < f.values().size(); ++i) EXPECT_LE(std::abs(out.values()[i] - f.values()[i]), 1e-5);
}

TEST(Pin, VjpMatchesFiniteDifferences) {
  const FeatureMap f = random_map(3, 4, 4, 12);
  const FeatureMap w = random_map(3, 4, 4, 13);  // loss = <w, pin_apply(f, p)>
  const StyleStats<double> p({0.3, -0.2, 1.0}, {1.2, 0.7, 0.4});
  const StyleStats<double> g = pin_apply_vjp(f, w);
  auto loss = [&](const StyleStats<double>& q) {
    const FeatureMap y = pin_apply(f, q);
    double s = 0.0;
    for (std::size_t i = 0; i < y.values().size(); ++i) s += w.values()[i] * y.values()[i];
    return s;
  };
  for (std::size_t c = 0; c < 3; ++c) {
    for (int which = 0; which < 2; ++which) {
      auto fn = [&](double x) {
        StyleStats<double> q = p;
        (which == 0 ? q.mu : q.sigma)[c] = x;
        return loss(q);
      };
      const double x0 = (which == 0 ? p.mu : p.sigma)[c];
      const double fd = testing_support::central_diff(fn, x0, 1e-6);
      EXPECT_LE(testing_support::rel_err((which == 0 ? g.mu : g.sigma)[c], fd), 1e-6);
    }
  }
}

TEST(Cosine, RangeAndScaleInvariance) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(7), b(7);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    const double d = cosine_distance(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 2.0);
    std::vector<double> a3 = a;
    for (auto& v : a3) v *= 3.7;
    EXPECT_NEAR(cosine_distance(a3, b), d, 1e-12);
  }
  const std::vector<double> x{1, 2, 3};
  const std::vector<double> nx{-1, -2, -3};
  EXPECT_NEAR(cosine_distance(x, x), 0.0, 1e-15);
  EXPECT_NEAR(cosine_distance(x, nx), 2.0, 1e-15);
}

TEST(Cosine, ZeroNormAndMismatchAreRejected) {
  const std::vector<double> z{0, 0, 0};
  const std::vector<double> x{1, 2, 3};
  EXPECT_THROW(cosine_distance(z, x), ValidationError);
  EXPECT_THROW(cosine_distance(x, std::vector<double>{1, 2}), ValidationError);
}

TEST(Cosine, GradientMatchesFiniteDifferences) {
  const std::vector<double> a{0.3, -1.2, 2.0, 0.5};
  const std::vector<double> b{1.0, 0.4, -0.7, 0.9};
  const auto g = cosine_distance_grad(std::span<const double>(a), std::span<const double>(b));
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto fn = [&](double x) {
      auto q = a;
      q[i] = x;
      return cosine_distance(q, b);
    };
    EXPECT_LE(testing_support::rel_err(g[i], testing_support::central_diff(fn, a[i], 1e-6)), 1e-6);
  }
}

TEST(MixStats, EndpointsAreExact) {
  const StyleStats<double> src({0.1, 0.2, 0.3}, {1.1, 1.2, 1.3});
  const StyleStats<double> trg({-5.0, 7.0, 0.0}, {0.5, 2.5, 9.0});
  EXPECT_EQ(mix_stats(src, trg, std::vector<double>(3, 0.0)), src);
  EXPECT_EQ(mix_stats(src, trg, std::vector<double>(3, 1.0)), trg);
  const auto half = mix_stats(src, trg, std::vector<double>{0.0, 0.5, 1.0});
  EXPECT_EQ(half.mu[0], src.mu[0]);
  EXPECT_DOUBLE_EQ(half.mu[1], 3.6);
  EXPECT_EQ(half.sigma[2], trg.sigma[2]);
  EXPECT_THROW(mix_stats(src, trg, std::vector<double>{0.0, 1.5, 0.0}), ValidationError);
  EXPECT_THROW(mix_stats(src, trg, std::vector<double>{0.0, 0.5}), ValidationError);
}

TEST(GaussianPerturb, EmpiricalSnrMatchesRequest) {
  const StyleStats<double> s({0.5, 1.0, -0.3, 2.0}, {1.0, 0.4, 0.8, 1.5});
  const double p_signal = stats_power(s);
  for (const double snr : {0.0, 10.0, 20.0}) {
    Rng rng(77);
    double noise_power = 0.0;
    const int draws = 20000;
    for (int i = 0; i < draws; ++i) {
      const auto n = gaussian_perturb_stats(s, snr, rng);
      for (std::size_t c = 0; c < 4; ++c) {
        noise_power += (n.mu[c] - s.mu[c]) * (n.mu[c] - s.mu[c]) + (n.sigma[c] - s.sigma[c]) * (n.sigma[c] - s.sigma[c]);
      }
    }
    noise_power /= draws * 8.0;
    EXPECT_NEAR(10.0 * std::log10(p_signal / noise_power), snr, 0.1) << "snr " << snr;
  }
}

TEST(GaussianPerturb, NoNoiseSentinelAndValidation) {
  const StyleStats<double> s({0.5, 1.0}, {1.0, 0.4});
  EXPECT_EQ(gaussian_perturb_stats(s, kNoNoise, std::uint64_t{3}), s);
  EXPECT_THROW(gaussian_perturb_stats(s, std::nan(""), std::uint64_t{3}), ValidationError);
  EXPECT_THROW(gaussian_perturb_stats(s, -kNoNoise, std::uint64_t{3}), ValidationError);
  const std::vector<double> short_noise(3, 0.0);
  EXPECT_THROW(gaussian_perturb_stats(s, 20.0, std::span<const double>(short_noise)), ValidationError);
}

TEST(GaussianPerturb, SeededDeterminism) {
  const StyleStats<double> s({0.5, 1.0}, {1.0, 0.4});
  EXPECT_EQ(gaussian_perturb_stats(s, 20.0, std::uint64_t{9}), gaussian_perturb_stats(s, 20.0, std::uint64_t{9}));
  EXPECT_NE(gaussian_perturb_stats(s, 20.0, std::uint64_t{9}), gaussian_perturb_stats(s, 20.0, std::uint64_t{10}));
}

TEST(FeatureMap, ShapeValidationAndFiniteness) {
  EXPECT_THROW(FeatureMap(2, 2, 2, std::vector<double>(7)), ValidationError);
  FeatureMap f(1, 1, 2);
  f(0, 0, 1) = std::nan("");
  EXPECT_THROW(require_finite(f, "test"), ValidationError);
}
