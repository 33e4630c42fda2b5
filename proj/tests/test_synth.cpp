#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "helpers.hpp"
#include "maskgcd/evaluate.hpp"
#include "maskgcd/io.hpp"
#include "maskgcd/synth.hpp"

using namespace maskgcd;

namespace {

template <class A, class B>
double dist2(std::span<A> a, std::span<B> b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  return s;
}

// Novel pixel share counted straight from mask areas of unlabeled images.
double novel_area_share(const SynthData& d) {
  std::map<int64_t, bool> unlabeled;
  for (const auto& m : d.instance.masks)
    if (m.split == Split::kUnlabeled) unlabeled[m.image_id] = true;
  uint64_t novel = 0, total = 0;
  for (size_t i = 0; i < d.instance.size(); ++i) {
    const auto& m = d.instance.masks[i];
    if (!unlabeled.count(m.image_id)) continue;
    total += static_cast<uint64_t>(m.area);
    if (d.ground_truth[i] >= d.instance.k_base) novel += static_cast<uint64_t>(m.area);
  }
  return double(novel) / double(total);
}

}  // namespace

TEST(Synth, TightNovelBlobIsSelfNearest) {
  SynthSpec s;
  s.k_base = 2;
  s.k_novel = 1;
  s.intra_std = 0.01;
  s.center_separation = 10;
  s.total_masks = 120;
  const auto d = generate(s);
  const auto protos = d.true_centers;
  std::vector<size_t> novel;
  for (size_t i = 0; i < d.instance.size(); ++i)
    if (!d.instance.is_labeled(i) && d.ground_truth[i] == 2) novel.push_back(i);
  ASSERT_GE(novel.size(), 2u);
  for (size_t a : novel) {
    double nearest_base = INFINITY;
    for (size_t c = 0; c < 2; ++c) nearest_base = std::min(nearest_base, dist2(d.instance.features.row(a), protos.row(c)));
    for (size_t b : novel) {
      if (a == b) continue;
      EXPECT_LT(dist2(d.instance.features.row(a), d.instance.features.row(b)), nearest_base);
    }
  }
}

TEST(Synth, NovelAreaNearTarget) {
  for (uint64_t seed : {0ull, 1ull, 2ull, 3ull}) {
    SynthSpec s;
    s.rng_seed = seed;
    const auto d = generate(s);
    const double share = novel_area_share(d);
    EXPECT_NEAR(share, 0.02, 0.002) << "seed " << seed;
    EXPECT_DOUBLE_EQ(share, novel_pixel_share(d));  // GT maps agree with the mask areas
  }
}

TEST(Synth, LayoutAndInvariants) {
  SynthSpec s;
  const auto d = generate(s);
  const auto& inst = d.instance;
  EXPECT_EQ(inst.size(), 2000u);
  EXPECT_EQ(inst.features.cols(), 16u);
  EXPECT_NO_THROW(validate_instance(inst));
  EXPECT_EQ(d.true_centers.rows, 19u);
  for (size_t a = 0; a < 19; ++a)
    for (size_t b = a + 1; b < 19; ++b) EXPECT_GE(std::sqrt(dist2(d.true_centers.row(a), d.true_centers.row(b))), 10.0);
  std::map<int64_t, std::vector<size_t>> by_image;
  for (size_t i = 0; i < inst.size(); ++i) {
    by_image[inst.masks[i].image_id].push_back(i);
    if (inst.is_labeled(i)) {
      ASSERT_TRUE(inst.masks[i].label.has_value());
      EXPECT_EQ(*inst.masks[i].label, d.ground_truth[i]);
      EXPECT_LT(d.ground_truth[i], 15);
    }
  }
  // An image is all labeled or all unlabeled, and the geometry tiles it.
  for (const auto& [img, idx] : by_image) {
    std::set<bool> splits;
    int64_t area = 0;
    for (size_t i : idx) {
      splits.insert(inst.is_labeled(i));
      area += inst.masks[i].area;
      EXPECT_EQ(static_cast<int64_t>(inst.geometry[i]->area()), inst.masks[i].area);
    }
    EXPECT_EQ(splits.size(), 1u);
    EXPECT_EQ(area, 128 * 128);
  }
  // Ground-truth maps reproduce the per-mask ground truth.
  LabelState truth{d.ground_truth, std::vector<double>(inst.size(), 1.0)};
  EXPECT_EQ(assemble_maps(inst, truth), d.gt_maps);
}

TEST(Synth, SameSeedSameBytes) {
  SynthSpec s;
  s.total_masks = 400;
  s.rng_seed = 7;
  const auto a = generate(s), b = generate(s);
  EXPECT_EQ(a.instance, b.instance);
  EXPECT_EQ(a.ground_truth, b.ground_truth);
  const auto dir = testutil::scratch("synth_det");
  write_synth(a, dir / "a");
  write_synth(b, dir / "b");
  for (const char* f : {"records.ndjson", "features.f32", "geometries.ndjson", "gt_labels.ndjson"}) {
    EXPECT_EQ(testutil::slurp(dir / "a" / f), testutil::slurp(dir / "b" / f)) << f;
  }
  s.rng_seed = 8;
  EXPECT_NE(generate(s).instance.features, a.instance.features);
}

TEST(Synth, WrittenInstanceReadsBack) {
  SynthSpec s;
  s.total_masks = 300;
  const auto d = generate(s);
  const auto dir = testutil::scratch("synth_rt");
  write_synth(d, dir);
  auto paths = InstancePaths::in_directory(dir);
  paths.geometries = dir / "geometries.ndjson";
  EXPECT_EQ(read_instance(paths, s.k_base, s.k_novel), d.instance);
  EXPECT_EQ(read_map_dir(dir / "gt"), d.gt_maps);
}

TEST(OracleAssign, Examples) {
  CentroidMatrix centers(2, 2);
  centers.data = {0.0, 0.0, 2.0, 0.0};
  auto inst = testutil::point_instance(2, 0, 2, {{0.f, 0.f}, {1.f, 0.f}, {2.f, 0.f}, {1.9f, 5.f}},
                                       {std::nullopt, std::nullopt, std::nullopt, std::nullopt});
  EXPECT_EQ(oracle_assign(inst, centers), (std::vector<int32_t>{0, 0, 1, 1}));
}

TEST(OracleAssign, RecoversTruthWithoutFragmentation) {
  SynthSpec s;
  s.fragmentation = 1;
  s.intra_std = 0.5;
  s.total_masks = 600;
  const auto d = generate(s);
  EXPECT_EQ(oracle_assign(d.instance, d.true_centers), d.ground_truth);
}

TEST(Scores, AccuracyAndRandIndex) {
  const std::vector<int32_t> truth = {0, 0, 1, 1, 2, 2};
  const std::vector<int32_t> renamed = {5, 5, 3, 3, 9, 9};
  EXPECT_DOUBLE_EQ(clustering_accuracy(truth, renamed), 1.0);
  EXPECT_DOUBLE_EQ(adjusted_rand_index(truth, renamed), 1.0);
  const std::vector<int32_t> one_off = {0, 0, 1, 1, 2, 1};
  EXPECT_DOUBLE_EQ(clustering_accuracy(truth, one_off), 5.0 / 6.0);
  const std::vector<int32_t> lumped(6, 0);
  EXPECT_DOUBLE_EQ(clustering_accuracy(truth, lumped), 2.0 / 6.0);
  EXPECT_DOUBLE_EQ(adjusted_rand_index(truth, lumped), 0.0);

  // Novel accuracy: base predictions on novel truth count as wrong.
  const std::vector<int32_t> t2 = {0, 3, 3, 4, 4};
  const std::vector<int32_t> p2 = {0, 4, 4, 0, 3};
  EXPECT_DOUBLE_EQ(novel_clustering_accuracy(t2, p2, 3), 3.0 / 4.0);
}

TEST(Synth, BadSpecIsRejected) {
  SynthSpec s;
  s.intra_std = 0;
  EXPECT_ANY_THROW(generate(s));
  s = SynthSpec{};
  s.novel_pixel_fraction = 1.0;
  EXPECT_ANY_THROW(generate(s));
  s = SynthSpec{};
  s.center_separation = -1;
  EXPECT_ANY_THROW(generate(s));
}
