#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace disc;

TEST(LoadBalance, MeanRowStddevMatchesOracle) {
  Rng rng(41);
  for (int t = 0; t < 20; ++t) {
    BitMatrix m = oracle::random_mask(8, 256, 0.1 + 0.04 * t, rng);
    EXPECT_NEAR(mean_row_stddev(m, HashFunction::modular(16)),
                oracle::mean_row_stddev(m, 16, [](std::size_t j) { return j % 16; }), 1e-12);
    EXPECT_NEAR(mean_row_stddev(m, HashFunction::range(16, 256)),
                oracle::mean_row_stddev(m, 16, [](std::size_t j) { return j / 16; }), 1e-12);
    EXPECT_NEAR(mean_row_stddev(m, HashFunction::multiplicative(16, 2053, 0)),
                oracle::mean_row_stddev(m, 16, [](std::size_t j) { return oracle::mult_hash(j, 2053, 8, 4); }), 1e-12);
  }
}

TEST(LoadBalance, ProfileBucketsAverageMasks) {
  Rng rng(42);
  std::vector<BitMatrix> masks{oracle::random_mask(4, 64, 0.9, rng), oracle::random_mask(4, 64, 0.88, rng),
                               oracle::random_mask(4, 64, 0.3, rng)};
  const auto h = HashFunction::modular(8);
  auto prof = load_balance_profile(masks, h, 0.25);
  ASSERT_EQ(prof.per_mask.size(), 3u);
  std::map<long, std::vector<double>> expect;
  for (const auto& m : masks) expect[long(std::floor(m.sparsity() / 0.25))].push_back(mean_row_stddev(m, h));
  ASSERT_EQ(prof.per_sparsity_bucket.size(), expect.size());
  std::size_t b = 0;
  for (const auto& [edge, vals] : expect) {
    const auto& got = prof.per_sparsity_bucket[b++];
    EXPECT_DOUBLE_EQ(got.sparsity, edge * 0.25);
    EXPECT_EQ(got.samples, vals.size());
    double mean = 0.0;
    for (double v : vals) mean += v;
    EXPECT_NEAR(got.mean_stddev, mean / double(vals.size()), 1e-12);
  }
  EXPECT_THROW(load_balance_profile(std::vector<BitMatrix>{}, h), ParameterError);
}

TEST(LoadBalance, FullySparseAndFullyDenseBucketsStayInRange) {
  std::vector<BitMatrix> masks{BitMatrix(2, 64, false), BitMatrix(2, 64, true)};
  auto prof = load_balance_profile(masks, HashFunction::modular(8), 0.05);
  ASSERT_EQ(prof.per_sparsity_bucket.size(), 2u);
  EXPECT_DOUBLE_EQ(prof.per_sparsity_bucket.front().sparsity, 0.0);
  EXPECT_NEAR(prof.per_sparsity_bucket.back().sparsity, 0.95, 1e-12);
  for (const auto& b : prof.per_sparsity_bucket) EXPECT_EQ(b.mean_stddev, 0.0);
}

TEST(Generators, HitRequestedDensity) {
  Rng rng(43);
  const ClusteredMaskGenerator gen;
  for (double d : {0.02, 0.3, 0.5, 0.7, 0.97}) {
    BitMatrix m = gen.generate(4, 1024, d, rng);
    for (std::size_t i = 0; i < 4; ++i) {
      std::size_t ones = 0;
      for (auto b : m.row(i)) ones += b;
      EXPECT_NEAR(double(ones) / 1024.0, d, 1.0 / 1024.0 + 1e-12);
    }
    EXPECT_NEAR(uniform_random_mask(16, 1024, d, rng).density(), d, 0.02);
  }
  EXPECT_THROW(gen.generate(1, 1000, 0.5, rng), ParameterError);
}

TEST(Generators, ClusteredRowsAreSpatiallyCorrelated) {
  // Neighbouring grid cells agree far more often than independent bits would.
  Rng rng(44);
  const ClusteredMaskGenerator gen;
  BitMatrix m = gen.generate(8, 1024, 0.5, rng);
  std::size_t agree = 0, pairs = 0;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x + 1 < 32; ++x, ++pairs) agree += m.get(i, y * 32 + x) == m.get(i, y * 32 + x + 1);
  EXPECT_GT(double(agree) / double(pairs), 0.75);
}

TEST(Bootstrap, ContainsMeanAndNarrowsWithSamples) {
  Rng rng(45);
  std::normal_distribution<double> g(3.0, 1.0);
  std::vector<double> small(20), large(2000);
  for (double& v : small) v = g(rng);
  for (double& v : large) v = g(rng);
  auto a = bootstrap_mean_ci(small, rng), b = bootstrap_mean_ci(large, rng);
  EXPECT_LE(a.lo, a.mean);
  EXPECT_GE(a.hi, a.mean);
  EXPECT_LT(b.hi - b.lo, a.hi - a.lo);
  EXPECT_NEAR(b.mean, 3.0, 0.1);
  EXPECT_THROW(bootstrap_mean_ci(std::vector<double>{}, rng), ParameterError);
}
