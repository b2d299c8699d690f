#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "oracles.hpp"
#include "pointmt/geometry.hpp"

using namespace pointmt;

namespace {

PointCloud<double> cloud_of(Tensor<double> coords) { return {std::move(coords), std::nullopt, std::nullopt}; }

Tensor<double> line(std::size_t n) {
  Tensor<double> t({n, 3});
  for (std::size_t i = 0; i < n; ++i) t(i, 0) = double(i);
  return t;
}

}  // namespace

TEST(NormalizeCloud, TwoPoints) {
  const auto out = normalize_cloud(cloud_of(Tensor<double>::matrix(2, 3, {0, 0, 0, 2, 0, 0})));
  EXPECT_EQ(out.coords, Tensor<double>::matrix(2, 3, {-1, 0, 0, 1, 0, 0}));
}

TEST(NormalizeCloud, RandomCloudStatisticsAndIdempotence) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto coords = oracle::uniform({50, 3}, rng, -3, 7);
    const auto once = normalize_cloud(cloud_of(coords));
    double c[3] = {0, 0, 0}, max_norm = 0;
    for (std::size_t i = 0; i < 50; ++i) {
      double n2 = 0;
      for (std::size_t l = 0; l < 3; ++l) c[l] += once.coords(i, l) / 50, n2 += once.coords(i, l) * once.coords(i, l);
      max_norm = std::max(max_norm, std::sqrt(n2));
    }
    for (double v : c) EXPECT_LT(std::abs(v), 1e-6);
    EXPECT_NEAR(max_norm, 1.0, 1e-6);
    const auto twice = normalize_cloud(once);
    EXPECT_LT(max_abs_diff(once.coords, twice.coords), 1e-6);
  }
}

TEST(NormalizeCloud, DegenerateCloudMapsToZeros) {
  const auto out = normalize_cloud(cloud_of(Tensor<double>({4, 3}, 2.5)));
  for (double v : out.coords.data()) EXPECT_EQ(v, 0.0);
}

TEST(Knn, CollinearSelfFirst) {
  const auto coords = line(3);
  const Tensor<double> query = Tensor<double>::matrix(1, 3, {1, 0, 0});
  const auto nbr = knn(coords, query, 3);
  EXPECT_EQ(nbr.indices, (std::vector<std::size_t>{1, 0, 2}));
}

TEST(Knn, KOneIsSelf) {
  std::mt19937_64 rng(2);
  const auto coords = oracle::uniform({10, 3}, rng);
  const auto nbr = knn(coords, coords, 1);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(nbr(i, 0), i);
}

TEST(Knn, MatchesSortOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto coords = oracle::uniform({32, 3}, rng);
    const auto nbr = knn(coords, coords, 4);
    for (std::size_t i = 0; i < 32; ++i) {
      const auto ref = oracle::knn_row(coords, coords, i, 4);
      EXPECT_EQ(std::vector<std::size_t>(nbr.row(i), nbr.row(i) + 4), ref);
    }
    const auto queries = oracle::uniform({5, 3}, rng);
    const auto q = knn(coords, queries, 6);
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_EQ(std::vector<std::size_t>(q.row(i), q.row(i) + 6), oracle::knn_row(coords, queries, i, 6));
    }
  }
}

TEST(Knn, TiesBrokenBySmallerIndex) {
  // Points 0 and 2 are equidistant from point 1.
  const auto nbr = knn(line(3), line(3), 2);
  EXPECT_EQ(nbr(1, 1), 0u);
}

TEST(Knn, DuplicatePointStillFindsSelfFirst) {
  const auto coords = Tensor<double>::matrix(3, 3, {0, 0, 0, 0, 0, 0, 1, 0, 0});
  const auto nbr = knn(coords, coords, 2);
  EXPECT_EQ(nbr(0, 0), 0u);
  EXPECT_EQ(nbr(1, 0), 1u);
}

TEST(Knn, KLargerThanNIsArgumentError) {
  EXPECT_THROW(knn(line(3), line(3), 4), ArgumentError);
  EXPECT_THROW(knn(line(3), line(3), 0), ArgumentError);
}

TEST(Knn, IndependentOfSourceOrdering) {
  std::mt19937_64 rng(4);
  const auto coords = oracle::uniform({24, 3}, rng);
  const auto perm = oracle::random_permutation(24, rng);
  const auto permuted = oracle::permute_rows(coords, perm);
  const auto a = knn(coords, coords, 5);
  const auto b = knn(permuted, permuted, 5);
  for (std::size_t i = 0; i < 24; ++i) {
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(perm[b(i, j)], a(perm[i], j));
  }
}

TEST(Fps, AllPointsOnce) {
  std::mt19937_64 rng(5);
  const auto coords = oracle::uniform({12, 3}, rng);
  auto picks = farthest_point_sample(coords, 12);
  std::sort(picks.begin(), picks.end());
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(picks[i], i);
}

TEST(Fps, LineEndpoints) {
  // 0 and 9 are both 4.5 from the centroid; the lexicographic tie-break
  // seeds at 0, and 9 is then the farthest point.
  const auto picks = farthest_point_sample(line(10), 2);
  EXPECT_EQ(std::set<std::size_t>(picks.begin(), picks.end()), (std::set<std::size_t>{0, 9}));
  EXPECT_EQ(picks, (std::vector<std::size_t>{0, 9}));
}

TEST(Fps, SeedIsFarthestFromCentroid) {
  auto coords = line(10);
  coords(9, 0) = 20;  // breaks the tie
  EXPECT_EQ(farthest_point_sample(coords, 1).front(), 9u);
}

TEST(Fps, MatchesGreedyOracle) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto coords = oracle::uniform({64, 3}, rng);
    EXPECT_EQ(farthest_point_sample(coords, 8), oracle::fps(coords, 8));
  }
}

TEST(Fps, PermutationInvariantAsSet) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const auto coords = oracle::uniform({40, 3}, rng);
    const auto perm = oracle::random_permutation(40, rng);
    const auto a = farthest_point_sample(coords, 10);
    const auto b = farthest_point_sample(oracle::permute_rows(coords, perm), 10);
    std::set<std::size_t> sa(a.begin(), a.end()), sb;
    for (std::size_t i : b) sb.insert(perm[i]);
    EXPECT_EQ(sa, sb);
  }
}

TEST(Fps, InvalidSizeIsArgumentError) {
  EXPECT_THROW(farthest_point_sample(line(3), 4), ArgumentError);
  EXPECT_THROW(farthest_point_sample(line(3), 0), ArgumentError);
}

TEST(GatherRelative, IdenticalFeaturesGiveZeros) {
  const Tensor<double> f({5, 2}, 1.5);
  const auto nbr = knn(line(5), line(5), 3);
  const auto g = gather_relative(f, nbr);
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(GatherRelative, MatchesLoopOracleAndSelfRowIsZero) {
  std::mt19937_64 rng(8);
  const auto coords = oracle::uniform({16, 3}, rng);
  const auto f = oracle::uniform({16, 5}, rng);
  const auto nbr = knn(coords, coords, 4);
  const auto g = gather_relative(f, nbr);
  EXPECT_EQ(g.shape(), (Shape{16, 4, 5}));
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      for (std::size_t c = 0; c < 5; ++c) {
        EXPECT_EQ(g(i, j, c), f(nbr(i, j), c) - f(i, c));
        if (nbr(i, j) == i) EXPECT_EQ(g(i, j, c), 0.0);
      }
    }
  }
}

TEST(GatherRelative, BadIndexIsInvariantError) {
  NeighborhoodIndex nbr{2, 1, {0, 7}};
  EXPECT_THROW(gather_relative(Tensor<double>({2, 2}), nbr), InvariantError);
}
