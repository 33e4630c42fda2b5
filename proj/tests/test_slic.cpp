#include <gtest/gtest.h>

#include <omp.h>

#include <array>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "maskgcd/error.hpp"
#include "maskgcd/slic.hpp"

using namespace maskgcd;

namespace {

RgbImage uniform(int32_t h, int32_t w, uint8_t v) {
  RgbImage img(h, w);
  std::fill(img.data.begin(), img.data.end(), v);
  return img;
}

RgbImage two_tone(int32_t h, int32_t w, int32_t split) {
  RgbImage img(h, w);
  for (int32_t y = 0; y < h; ++y)
    for (int32_t x = split; x < w; ++x) std::fill_n(img.pixel(y, x), 3, uint8_t{255});
  return img;
}

RgbImage noisy(int32_t h, int32_t w, uint64_t seed) {
  std::mt19937_64 rng(seed);
  RgbImage img(h, w);
  for (int32_t y = 0; y < h; ++y)
    for (int32_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.pixel(y, x)[c] = static_cast<uint8_t>(std::clamp<int>((x / 6 + y / 9) % 3 * 90 + int(rng() % 40), 0, 255));
  return img;
}

// Decodes masks into a label raster, checking that each pixel is covered exactly once.
std::vector<int32_t> raster_of(const std::vector<RleMask>& masks, int32_t h, int32_t w) {
  std::vector<int32_t> out(static_cast<size_t>(h) * w, -1);
  for (size_t m = 0; m < masks.size(); ++m) {
    for_each_pixel(masks[m], [&](int32_t y, int32_t x) {
      int32_t& v = out[static_cast<size_t>(y) * w + x];
      EXPECT_EQ(v, -1) << "pixel (" << y << "," << x << ") covered twice";
      v = static_cast<int32_t>(m);
    });
  }
  for (int32_t v : out) EXPECT_GE(v, 0);
  return out;
}

bool four_connected(const std::vector<int32_t>& lab, int32_t h, int32_t w, int32_t id) {
  std::vector<bool> seen(lab.size());
  size_t start = lab.size(), total = 0;
  for (size_t p = 0; p < lab.size(); ++p) {
    if (lab[p] == id) {
      ++total;
      if (start == lab.size()) start = p;
    }
  }
  if (total == 0) return false;
  std::vector<size_t> st{start};
  seen[start] = true;
  size_t reached = 0;
  while (!st.empty()) {
    const size_t p = st.back();
    st.pop_back();
    ++reached;
    const int32_t y = static_cast<int32_t>(p / w), x = static_cast<int32_t>(p % w);
    const int32_t ny[4] = {y - 1, y + 1, y, y}, nx[4] = {x, x, x - 1, x + 1};
    for (int t = 0; t < 4; ++t) {
      if (ny[t] < 0 || ny[t] >= h || nx[t] < 0 || nx[t] >= w) continue;
      const size_t q = static_cast<size_t>(ny[t]) * w + nx[t];
      if (!seen[q] && lab[q] == id) {
        seen[q] = true;
        st.push_back(q);
      }
    }
  }
  return reached == total;
}

// Plain reference: grid seeds, exhaustive windowed search, mean update; no acceleration.
std::vector<int32_t> reference_slic(const RgbImage& img, int n, double m, int iters) {
  const int32_t s = std::max<int32_t>(1, static_cast<int32_t>(std::lround(std::sqrt(double(img.height) * img.width / n))));
  const int nx = (img.width + s - 1) / s, ny = (img.height + s - 1) / s;
  std::vector<std::array<double, 5>> c;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const double cx = (i + 0.5) * img.width / nx, cy = (j + 0.5) * img.height / ny;
      const uint8_t* p = img.pixel(static_cast<int32_t>(cy), static_cast<int32_t>(cx));
      c.push_back({double(p[0]), double(p[1]), double(p[2]), cx, cy});
    }
  const double wgt = (m / s) * (m / s);
  std::vector<int32_t> lab(static_cast<size_t>(img.height) * img.width, -1);
  for (int it = 0; it < iters; ++it) {
    for (int32_t y = 0; y < img.height; ++y)
      for (int32_t x = 0; x < img.width; ++x) {
        double best = INFINITY;
        int32_t arg = -1;
        const int32_t cur = lab[static_cast<size_t>(y) * img.width + x];
        for (size_t k = 0; k < c.size(); ++k) {
          const double dx = x + 0.5 - c[k][3], dy = y + 0.5 - c[k][4];
          if ((std::abs(dx) > s || std::abs(dy) > s) && int32_t(k) != cur) continue;
          const uint8_t* p = img.pixel(y, x);
          double d = wgt * (dx * dx + dy * dy);
          for (int ch = 0; ch < 3; ++ch) d += (p[ch] - c[k][ch]) * (p[ch] - c[k][ch]);
          if (d < best) {
            best = d;
            arg = static_cast<int32_t>(k);
          }
        }
        lab[static_cast<size_t>(y) * img.width + x] = arg;
      }
    std::vector<std::array<double, 6>> acc(c.size(), {0, 0, 0, 0, 0, 0});
    for (int32_t y = 0; y < img.height; ++y)
      for (int32_t x = 0; x < img.width; ++x) {
        auto& a = acc[static_cast<size_t>(lab[static_cast<size_t>(y) * img.width + x])];
        for (int ch = 0; ch < 3; ++ch) a[ch] += img.pixel(y, x)[ch];
        a[3] += x + 0.5;
        a[4] += y + 0.5;
        a[5] += 1;
      }
    for (size_t k = 0; k < c.size(); ++k)
      if (acc[k][5] > 0)
        for (int f = 0; f < 5; ++f) c[k][f] = acc[k][f] / acc[k][5];
  }
  return lab;
}

// Same partition up to renaming.
bool same_partition(const std::vector<int32_t>& a, const std::vector<int32_t>& b) {
  if (a.size() != b.size()) return false;
  std::map<int32_t, int32_t> ab, ba;
  for (size_t i = 0; i < a.size(); ++i) {
    if (ab.emplace(a[i], b[i]).first->second != b[i]) return false;
    if (ba.emplace(b[i], a[i]).first->second != a[i]) return false;
  }
  return true;
}

}  // namespace

TEST(Slic, UniformImageGivesVoronoiBlocks) {
  const RgbImage img = uniform(4, 4, 128);
  SlicParams p;
  p.n_segments = 4;
  const auto centers = slic_initial_centers(img, p);
  ASSERT_EQ(centers.size(), 4u);
  const std::set<std::pair<double, double>> seeds = {{centers[0].y, centers[0].x}, {centers[1].y, centers[1].x},
                                                     {centers[2].y, centers[2].x}, {centers[3].y, centers[3].x}};
  EXPECT_EQ(seeds, (std::set<std::pair<double, double>>{{1, 1}, {1, 3}, {3, 1}, {3, 3}}));

  const auto masks = slic_segment(img, p);
  ASSERT_EQ(masks.size(), 4u);
  const auto lab = raster_of(masks, 4, 4);
  // Analytic oracle: each pixel center goes to the nearest seed, i.e. its 2x2 quadrant.
  for (int32_t y = 0; y < 4; ++y) {
    for (int32_t x = 0; x < 4; ++x) {
      const int32_t quadrant_rep = (y / 2) * 2 * 4 + (x / 2) * 2;
      EXPECT_EQ(lab[static_cast<size_t>(y) * 4 + x], lab[static_cast<size_t>(quadrant_rep)]);
    }
  }
  for (const auto& m : masks) EXPECT_EQ(m.area(), 4u);
}

TEST(Slic, SingleSegmentCoversImage) {
  SlicParams p;
  p.n_segments = 1;
  const auto masks = slic_segment(noisy(9, 7, 3), p);
  ASSERT_EQ(masks.size(), 1u);
  EXPECT_EQ(masks[0].area(), 63u);
}

TEST(Slic, TwoToneSplitsAtColorBoundary) {
  const RgbImage img = two_tone(8, 8, 4);
  SlicParams p;
  p.n_segments = 2;
  const auto masks = slic_segment(img, p);
  const auto lab = raster_of(masks, 8, 8);
  for (size_t m = 0; m < masks.size(); ++m) {
    std::set<bool> sides;
    for_each_pixel(masks[m], [&](int32_t, int32_t x) { sides.insert(x >= 4); });
    EXPECT_EQ(sides.size(), 1u) << "mask " << m << " straddles column 4";
  }
  EXPECT_TRUE(same_partition(slic_label_raster(img, p).labels, reference_slic(img, 2, 10.0, 10)));
}

TEST(Slic, FirstAssignmentMatchesReference) {
  const RgbImage img = noisy(24, 30, 11);
  SlicParams p;
  p.n_segments = 12;
  const auto centers = slic_initial_centers(img, p);
  const auto got = slic_assign(img, centers, {}, slic_grid_spacing(24, 30, 12), 10.0);
  EXPECT_EQ(got, reference_slic(img, 12, 10.0, 1));
}

TEST(Slic, PartitionConnectivityAndCountOnRandomImages) {
  for (uint64_t seed = 0; seed < 8; ++seed) {
    const int32_t h = 10 + static_cast<int32_t>(seed * 3), w = 31 - static_cast<int32_t>(seed * 2);
    const RgbImage img = noisy(h, w, seed);
    SlicParams p;
    p.n_segments = 3 + static_cast<int>(seed * 4);
    p.seed_perturb = seed % 2;
    p.compactness = 5.0 + seed;
    const auto masks = slic_segment(img, p);
    EXPECT_GE(masks.size(), 1u);
    EXPECT_LE(masks.size(), static_cast<size_t>(2 * p.n_segments));
    const auto lab = raster_of(masks, h, w);
    uint64_t total = 0;
    for (size_t m = 0; m < masks.size(); ++m) {
      total += masks[m].area();
      EXPECT_TRUE(four_connected(lab, h, w, static_cast<int32_t>(m))) << "seed " << seed << " mask " << m;
    }
    EXPECT_EQ(total, static_cast<uint64_t>(h) * w);
  }
}

TEST(Slic, EnergyNeverIncreases) {
  SlicParams p;
  p.n_segments = 20;
  p.max_iters = 25;
  const auto r = slic_label_raster(noisy(40, 40, 5), p);
  ASSERT_GE(r.energy_history.size(), 2u);
  for (size_t i = 1; i < r.energy_history.size(); ++i) {
    EXPECT_LE(r.energy_history[i], r.energy_history[i - 1] * (1 + 1e-12)) << "step " << i;
  }
}

TEST(Slic, DeterministicAndThreadIndependent) {
  const RgbImage img = noisy(33, 27, 9);
  SlicParams p;
  p.n_segments = 15;
  omp_set_num_threads(1);
  const auto a = slic_segment(img, p);
  omp_set_num_threads(4);
  const auto b = slic_segment(img, p);
  omp_set_num_threads(1);
  EXPECT_EQ(a, b);
}

TEST(Slic, ParallelAssignEqualsSerial) {
  const RgbImage img = noisy(37, 41, 2);
  SlicParams p;
  p.n_segments = 30;
  const auto centers = slic_initial_centers(img, p);
  const int32_t s = slic_grid_spacing(37, 41, 30);
  omp_set_num_threads(4);
  const auto par = slic_assign(img, centers, {}, s, 10.0);
  omp_set_num_threads(1);
  EXPECT_EQ(par, serial::slic_assign(img, centers, {}, s, 10.0));
  // With a current assignment included as a candidate.
  std::vector<int32_t> cur(par.size());
  for (size_t i = 0; i < cur.size(); ++i) cur[i] = static_cast<int32_t>(i % centers.size());
  EXPECT_EQ(slic_assign(img, centers, cur, s, 10.0), serial::slic_assign(img, centers, cur, s, 10.0));
}

TEST(Slic, ParamErrors) {
  const RgbImage img = uniform(2, 2, 0);
  auto code = [&](SlicParams p) {
    try {
      slic_segment(img, p);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kConfigError;
  };
  SlicParams p;
  p.n_segments = 5;
  EXPECT_EQ(code(p), ErrorCode::kParamError);
  p.n_segments = 0;
  EXPECT_EQ(code(p), ErrorCode::kParamError);
  p.n_segments = 1;
  p.compactness = 0;
  EXPECT_EQ(code(p), ErrorCode::kParamError);
  p.compactness = 10;
  p.max_iters = 0;
  EXPECT_EQ(code(p), ErrorCode::kParamError);
}

TEST(CentroidFeatures, Examples) {
  const RgbImage white = uniform(3, 5, 255);
  const std::vector<int32_t> one(15, 0);
  const auto full = masks_from_labels(3, 5, one, 1);
  const auto f = centroid_features(white, full);
  ASSERT_EQ(f.cols(), 5u);
  for (int c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(f.row(0)[c], 1.0f);
  EXPECT_FLOAT_EQ(f.row(0)[3], 2.0f / 5.0f);  // ((W-1)/2)/W
  EXPECT_FLOAT_EQ(f.row(0)[4], 1.0f / 3.0f);  // ((H-1)/2)/H

  RgbImage bw(1, 2);
  std::fill_n(bw.pixel(0, 1), 3, uint8_t{255});
  const std::vector<int32_t> per_pixel = {0, 1};
  const auto g = centroid_features(bw, masks_from_labels(1, 2, per_pixel, 2));
  for (int c = 0; c < 3; ++c) EXPECT_NE(g.row(0)[c], g.row(1)[c]);
  EXPECT_NE(g.row(0)[3], g.row(1)[3]);
  EXPECT_EQ(g.row(0)[4], g.row(1)[4]);
}

TEST(MasksFromLabels, RoundTripsRaster) {
  std::mt19937_64 rng(4);
  std::vector<int32_t> lab(6 * 9);
  for (auto& v : lab) v = static_cast<int32_t>(rng() % 4);
  const auto masks = masks_from_labels(6, 9, lab, 4);
  EXPECT_EQ(raster_of(masks, 6, 9), lab);
}
