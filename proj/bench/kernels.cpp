// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>
#include <omp.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "maskgcd/clustering.hpp"
#include "maskgcd/knn.hpp"
#include "maskgcd/slic.hpp"

using namespace maskgcd;

namespace {

FeatureMatrix random_features(size_t n, size_t d, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  FeatureMatrix f(n, d);
  for (size_t i = 0; i < n; ++i)
    for (auto& v : f.row(i)) v = g(rng);
  return f;
}

RgbImage random_image(int32_t h, int32_t w, uint64_t seed) {
  std::mt19937_64 rng(seed);
  RgbImage img(h, w);
  for (int32_t y = 0; y < h; ++y)
    for (int32_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.pixel(y, x)[c] = static_cast<uint8_t>(((x / 16 + y / 16) % 4) * 60 + rng() % 30);
  return img;
}

void threads_from(const benchmark::State& state) { omp_set_num_threads(static_cast<int>(state.range(1))); }

void BM_KnnSerial(benchmark::State& state) {
  const auto f = random_features(static_cast<size_t>(state.range(0)), 64, 1);
  for (auto _ : state) benchmark::DoNotOptimize(serial::build_neighbor_table(f, 10));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_KnnParallel(benchmark::State& state) {
  threads_from(state);
  const auto f = random_features(static_cast<size_t>(state.range(0)), 64, 1);
  for (auto _ : state) benchmark::DoNotOptimize(build_neighbor_table(f, 10));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_SlicAssignSerial(benchmark::State& state) {
  const auto side = static_cast<int32_t>(state.range(0));
  const RgbImage img = random_image(side, side, 2);
  SlicParams p;
  p.n_segments = 200;
  const auto centers = slic_initial_centers(img, p);
  const int32_t s = slic_grid_spacing(side, side, p.n_segments);
  for (auto _ : state) benchmark::DoNotOptimize(serial::slic_assign(img, centers, {}, s, 10.0));
  state.SetItemsProcessed(state.iterations() * side * side);
}

void BM_SlicAssignParallel(benchmark::State& state) {
  threads_from(state);
  const auto side = static_cast<int32_t>(state.range(0));
  const RgbImage img = random_image(side, side, 2);
  SlicParams p;
  p.n_segments = 200;
  const auto centers = slic_initial_centers(img, p);
  const int32_t s = slic_grid_spacing(side, side, p.n_segments);
  for (auto _ : state) benchmark::DoNotOptimize(slic_assign(img, centers, {}, s, 10.0));
  state.SetItemsProcessed(state.iterations() * side * side);
}

struct AssignInput {
  FeatureMatrix features;
  std::vector<size_t> rows;
  CentroidMatrix centroids;
};

AssignInput assign_input(size_t n) {
  AssignInput in{random_features(n, 64, 3), std::vector<size_t>(n), CentroidMatrix(19, 64)};
  std::iota(in.rows.begin(), in.rows.end(), size_t{0});
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (auto& v : in.centroids.data) v = g(rng);
  return in;
}

void BM_AssignSerial(benchmark::State& state) {
  const auto in = assign_input(static_cast<size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(serial::assign_to_nearest(in.features, in.rows, in.centroids));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_AssignParallel(benchmark::State& state) {
  threads_from(state);
  const auto in = assign_input(static_cast<size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(assign_to_nearest(in.features, in.rows, in.centroids));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

// At least two so the parallel path is exercised even on a single-core host.
const int kMaxThreads = std::max(2, omp_get_num_procs());

}  // namespace

BENCHMARK(BM_KnnSerial)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KnnParallel)->ArgsProduct({{1000, 4000}, {1, kMaxThreads}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SlicAssignSerial)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SlicAssignParallel)->ArgsProduct({{256, 512}, {1, kMaxThreads}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AssignSerial)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AssignParallel)->ArgsProduct({{20000}, {1, kMaxThreads}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
