#include <gtest/gtest.h>

#include <omp.h>

#include <cmath>
#include <numeric>
#include <random>

#include "maskgcd/error.hpp"
#include "maskgcd/knn.hpp"

using namespace maskgcd;

namespace {

FeatureMatrix random_points(size_t n, size_t d, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.f, 1.f);
  FeatureMatrix f(n, d);
  for (size_t i = 0; i < n; ++i) {
    for (auto& v : f.row(i)) v = g(rng);
  }
  return f;
}

// Independent oracle: every pair, stable sort by (distance, index).
std::vector<std::vector<uint32_t>> brute_force(const FeatureMatrix& f, size_t k) {
  std::vector<std::vector<uint32_t>> out(f.rows());
  for (size_t i = 0; i < f.rows(); ++i) {
    std::vector<std::pair<double, uint32_t>> all;
    for (size_t j = 0; j < f.rows(); ++j) {
      if (j == i) continue;
      double s = 0;
      for (size_t t = 0; t < f.cols(); ++t) {
        const double diff = static_cast<double>(f.row(i)[t]) - f.row(j)[t];
        s += diff * diff;
      }
      all.emplace_back(s, static_cast<uint32_t>(j));
    }
    std::sort(all.begin(), all.end());
    for (size_t q = 0; q < k; ++q) out[i].push_back(all[q].second);
  }
  return out;
}

}  // namespace

TEST(Knn, ThreePointsOnALine) {
  const FeatureMatrix f(3, 1, {0.f, 1.f, 3.f});
  const auto t = build_neighbor_table(f, 1);
  EXPECT_EQ(t.neighbors, (std::vector<uint32_t>{1, 0, 1}));
  EXPECT_EQ(t.distances, (std::vector<float>{1.f, 1.f, 2.f}));
  EXPECT_EQ(neighbors_of(t, 0), (std::vector<Neighbor>{{1, 1.0f}}));
}

TEST(Knn, DuplicateRowsListEachOtherFirst) {
  const FeatureMatrix f(4, 2, {1.f, 1.f, 5.f, 5.f, 1.f, 1.f, 9.f, 0.f});
  const auto t = build_neighbor_table(f, 2);
  EXPECT_EQ(t.indices(0)[0], 2u);
  EXPECT_EQ(t.row_distances(0)[0], 0.f);
  EXPECT_EQ(t.indices(2)[0], 0u);
  EXPECT_EQ(t.row_distances(2)[0], 0.f);
}

TEST(Knn, MatchesBruteForceOn500Points) {
  const auto f = random_points(500, 16, 42);
  const auto t = build_neighbor_table(f, 10);
  const auto oracle = brute_force(f, 10);
  for (size_t i = 0; i < 500; ++i) {
    const auto row = t.indices(i);
    ASSERT_EQ(std::vector<uint32_t>(row.begin(), row.end()), oracle[i]) << "row " << i;
    for (size_t q = 0; q < 10; ++q) {
      double s = 0;
      for (size_t d = 0; d < 16; ++d) {
        const double diff = static_cast<double>(f.row(i)[d]) - f.row(oracle[i][q])[d];
        s += diff * diff;
      }
      EXPECT_EQ(t.row_distances(i)[q], static_cast<float>(std::sqrt(s)));
    }
  }
}

TEST(Knn, RowsNeverContainSelfAndAreSorted) {
  const auto f = random_points(200, 4, 7);
  const auto t = build_neighbor_table(f, 7);
  for (size_t i = 0; i < t.n; ++i) {
    for (uint32_t j : t.indices(i)) EXPECT_NE(j, i);
    const auto d = t.row_distances(i);
    EXPECT_TRUE(std::is_sorted(d.begin(), d.end()));
  }
}

TEST(Knn, ListedNeighborsAreNoFartherThanAnyOther) {
  const auto f = random_points(120, 3, 9);
  const auto t = build_neighbor_table(f, 5);
  for (size_t i = 0; i < t.n; ++i) {
    const float worst = t.row_distances(i).back();
    const auto listed = t.indices(i);
    for (size_t j = 0; j < t.n; ++j) {
      if (j == i || std::find(listed.begin(), listed.end(), j) != listed.end()) continue;
      double s = 0;
      for (size_t d = 0; d < 3; ++d) {
        const double diff = static_cast<double>(f.row(i)[d]) - f.row(j)[d];
        s += diff * diff;
      }
      EXPECT_LE(worst, static_cast<float>(std::sqrt(s)));
    }
  }
}

TEST(Knn, PermutationEquivariance) {
  const auto f = random_points(150, 5, 21);
  std::vector<size_t> perm(150);
  std::iota(perm.begin(), perm.end(), size_t{0});
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(2));
  FeatureMatrix g(150, 5);
  for (size_t i = 0; i < 150; ++i) std::copy(f.row(perm[i]).begin(), f.row(perm[i]).end(), g.row(i).begin());
  const auto tf = build_neighbor_table(f, 6);
  const auto tg = build_neighbor_table(g, 6);
  // Continuous random data has no distance ties, so the inverse-permuted rows agree exactly.
  for (size_t i = 0; i < 150; ++i) {
    for (size_t q = 0; q < 6; ++q) {
      EXPECT_EQ(perm[tg.indices(i)[q]], tf.indices(perm[i])[q]);
      EXPECT_EQ(tg.row_distances(i)[q], tf.row_distances(perm[i])[q]);
    }
  }
}

TEST(Knn, ParallelMatchesSerialReference) {
  const auto f = random_points(333, 8, 5);
  const auto serial_t = serial::build_neighbor_table(f, 9);
  for (int threads : {1, 2, 4}) {
    omp_set_num_threads(threads);
    EXPECT_EQ(build_neighbor_table(f, 9), serial_t);
  }
  omp_set_num_threads(1);
}

TEST(Knn, Errors) {
  const FeatureMatrix f(3, 1, {0.f, 1.f, 3.f});
  try {
    build_neighbor_table(f, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kKTooLarge);
  }
  EXPECT_THROW(build_neighbor_table(f, 0), Error);
  const auto t = build_neighbor_table(f, 2);
  try {
    neighbors_of(t, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIndexOutOfRange);
  }
}

TEST(Knn, NormalizedFeatures) {
  const FeatureMatrix f(3, 2, {2.f, 0.f, 0.f, 5.f, 0.f, 0.f});
  const auto n = l2_normalized(f);
  EXPECT_EQ(n.row(0)[0], 1.f);
  EXPECT_EQ(n.row(1)[1], 1.f);
  EXPECT_EQ(n.row(2)[0], 0.f);
  const auto t = build_neighbor_table(f, 1, true);
  EXPECT_EQ(t.indices(0)[0], 2u);  // origin is at distance 1 from both unit vectors; lower index wins
}
