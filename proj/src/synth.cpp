#include "maskgcd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "maskgcd/error.hpp"
#include "maskgcd/hungarian.hpp"
#include "maskgcd/io.hpp"

namespace maskgcd {

namespace {

// Portable draws: the standard distributions differ across library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int64_t integer(int64_t lo, int64_t hi) {  // inclusive
    return lo + static_cast<int64_t>(uniform() * static_cast<double>(hi - lo + 1));
  }
  double normal() {
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<size_t>(integer(0, static_cast<int64_t>(i) - 1))]);
  }

 private:
  std::mt19937_64 engine_;
};

struct Concept {
  int32_t cls = 0;
  bool labeled = false;
  std::vector<size_t> parts;  // indices into the part list
};

struct Part {
  int32_t cls = 0;
  bool labeled = false;
  bool novel = false;
  double weight = 1.0;
  std::vector<float> feature;
};

struct Rect {
  int32_t x = 0, y = 0, w = 0, h = 0;
};

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

// Slice-and-dice treemap: areas roughly proportional to weights, every item >= 1 pixel.
void layout(Rect r, std::span<const double> weights, std::span<Rect> out) {
  if (weights.size() == 1) {
    out[0] = r;
    return;
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  size_t m = 1;
  double acc = weights[0];
  while (m + 1 < weights.size() && acc + weights[m] <= total / 2) acc += weights[m++];
  const auto nl = static_cast<int64_t>(m), nr = static_cast<int64_t>(weights.size() - m);
  auto try_cut = [&](bool vertical) -> bool {
    const int64_t len = vertical ? r.w : r.h, across = vertical ? r.h : r.w;
    const int64_t lo = ceil_div(nl, across), hi = len - ceil_div(nr, across);
    if (lo > hi) return false;
    const int64_t cut = std::clamp<int64_t>(std::llround(static_cast<double>(len) * acc / total), lo, hi);
    Rect a = r, b = r;
    if (vertical) {
      a.w = static_cast<int32_t>(cut);
      b.x += a.w;
      b.w -= a.w;
    } else {
      a.h = static_cast<int32_t>(cut);
      b.y += a.h;
      b.h -= a.h;
    }
    layout(a, weights.first(m), out.first(m));
    layout(b, weights.subspan(m), out.subspan(m));
    return true;
  };
  const bool vertical_first = r.w >= r.h;
  if (!try_cut(vertical_first) && !try_cut(!vertical_first)) {
    throw Error(ErrorCode::kParamError, "image too small for its masks");
  }
}

RleMask rect_mask(int32_t h, int32_t w, const Rect& r) {
  Bitmap b(h, w);
  for (int32_t y = r.y; y < r.y + r.h; ++y) {
    for (int32_t x = r.x; x < r.x + r.w; ++x) b.at(y, x) = 1;
  }
  return rle_encode(b);
}

// Groups concepts into images of about masks_per_image masks; a concept never straddles images.
std::vector<std::vector<size_t>> pack(const std::vector<size_t>& concept_order, const std::vector<Concept>& concepts,
                                      int32_t masks_per_image) {
  std::vector<std::vector<size_t>> images;
  size_t filled = 0;
  for (size_t c : concept_order) {
    const size_t n = concepts[c].parts.size();
    if (images.empty() || filled + n > static_cast<size_t>(masks_per_image)) {
      images.emplace_back();
      filled = 0;
    }
    images.back().push_back(c);
    filled += n;
  }
  return images;
}

}  // namespace

SynthData generate(const SynthSpec& spec) {
  if (spec.k_base < 1 || spec.k_novel < 0 || spec.feature_dim < 1 || !(spec.intra_std > 0) ||
      !(spec.center_separation > 0) || !(spec.novel_pixel_fraction > 0 && spec.novel_pixel_fraction < 1) ||
      spec.fragmentation < 1 || spec.masks_per_image < 1 || spec.image_height < 1 || spec.image_width < 1 ||
      !(spec.labeled_fraction > 0 && spec.labeled_fraction < 1) || spec.fragment_drift < 0) {
    throw Error(ErrorCode::kParamError, "inconsistent synthetic spec");
  }
  if (static_cast<int64_t>(spec.image_height) * spec.image_width < spec.masks_per_image + spec.fragmentation) {
    throw Error(ErrorCode::kParamError, "image too small for masks_per_image");
  }
  Rng rng(spec.rng_seed);
  const int32_t kc = spec.k_base + spec.k_novel;
  const auto d = static_cast<size_t>(spec.feature_dim);
  const double s = spec.center_separation, sigma = spec.intra_std;

  SynthData out;
  // Class centers with pairwise distance >= s.
  out.true_centers = CentroidMatrix(static_cast<size_t>(kc), d);
  double tau = 1.5 * s / std::sqrt(2.0 * static_cast<double>(d));
  for (int attempt = 0;; ++attempt) {
    for (double& v : out.true_centers.data) v = tau * rng.normal();
    bool ok = true;
    for (size_t a = 0; a < static_cast<size_t>(kc) && ok; ++a) {
      for (size_t b = a + 1; b < static_cast<size_t>(kc) && ok; ++b) {
        double d2 = 0;
        for (size_t t = 0; t < d; ++t) {
          const double diff = out.true_centers.row(a)[t] - out.true_centers.row(b)[t];
          d2 += diff * diff;
        }
        ok = d2 >= s * s;
      }
    }
    if (ok) break;
    if (attempt % 100 == 99) tau *= 1.1;
  }

  // Drift direction of part masks: random for base classes, toward some base class for
  // novel ones (novel parts resemble parts of known objects).
  CentroidMatrix drift(static_cast<size_t>(kc), d);
  for (int32_t c = 0; c < kc; ++c) {
    auto u = drift.row(static_cast<size_t>(c));
    if (c < spec.k_base) {
      for (double& v : u) v = rng.normal();
    } else {
      const auto b = static_cast<size_t>(rng.integer(0, spec.k_base - 1));
      for (size_t t = 0; t < d; ++t) u[t] = out.true_centers.row(b)[t] - out.true_centers.row(static_cast<size_t>(c))[t];
    }
    double norm = 0;
    for (double v : u) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : u) v /= norm;
  }

  // Concepts and their parts.
  std::vector<int32_t> per_class(static_cast<size_t>(kc), spec.masks_per_class);
  if (spec.total_masks > 0) {
    for (int32_t c = 0; c < kc; ++c) {
      per_class[static_cast<size_t>(c)] = spec.total_masks / kc + (c < spec.total_masks % kc ? 1 : 0);
    }
  }
  std::vector<Concept> concepts;
  std::vector<Part> parts;
  for (int32_t c = 0; c < kc; ++c) {
    const bool novel = c >= spec.k_base;
    int32_t remaining = per_class[static_cast<size_t>(c)];
    while (remaining > 0) {
      Concept con;
      con.cls = c;
      con.labeled = !novel && rng.uniform() < spec.labeled_fraction;
      const auto f = static_cast<int32_t>(std::min<int64_t>(rng.integer(1, spec.fragmentation), remaining));
      for (int32_t j = 0; j < f; ++j) {
        Part p;
        p.cls = c;
        p.labeled = con.labeled;
        p.novel = novel;
        p.feature.resize(d);
        const double t = j == 0 ? 0.0 : rng.uniform(0.25, 1.0);
        for (size_t q = 0; q < d; ++q) {
          p.feature[q] = static_cast<float>(out.true_centers.row(static_cast<size_t>(c))[q] +
                                            t * spec.fragment_drift * s * drift.row(static_cast<size_t>(c))[q] +
                                            sigma * rng.normal());
        }
        // Parts are smaller than the object body they were split from.
        p.weight = rng.uniform(0.6, 1.4) * (j == 0 ? 1.0 : 0.4);
        con.parts.push_back(parts.size());
        parts.push_back(std::move(p));
      }
      remaining -= f;
      concepts.push_back(std::move(con));
    }
  }

  std::vector<size_t> labeled_order, unlabeled_order;
  for (size_t c = 0; c < concepts.size(); ++c) (concepts[c].labeled ? labeled_order : unlabeled_order).push_back(c);
  rng.shuffle(labeled_order);
  rng.shuffle(unlabeled_order);
  const auto labeled_images = pack(labeled_order, concepts, spec.masks_per_image);
  const auto unlabeled_images = pack(unlabeled_order, concepts, spec.masks_per_image);

  // Scale novel weights so their expected pixel share in unlabeled images hits the target.
  auto share = [&](double alpha) {
    double total = 0;
    for (const auto& img : unlabeled_images) {
      double nw = 0, bw = 0;
      for (size_t c : img) {
        for (size_t p : concepts[c].parts) (parts[p].novel ? nw : bw) += parts[p].weight;
      }
      total += alpha * nw / (alpha * nw + bw);
    }
    return unlabeled_images.empty() ? 0.0 : total / static_cast<double>(unlabeled_images.size());
  };
  double lo = 1e-9, hi = 1e9;
  if (spec.k_novel > 0) {
    for (int it = 0; it < 200; ++it) {
      const double mid = std::sqrt(lo * hi);
      (share(mid) < spec.novel_pixel_fraction ? lo : hi) = mid;
    }
    for (auto& p : parts) {
      if (p.novel) p.weight *= lo;
    }
  }

  // Emit images: labeled first, then unlabeled.
  DiscoveryInstance& inst = out.instance;
  inst.k_base = spec.k_base;
  inst.k_novel = spec.k_novel;
  std::vector<float> features;
  const int32_t H = spec.image_height, W = spec.image_width;
  int64_t image_id = 0;
  auto emit = [&](const std::vector<std::vector<size_t>>& images) {
    for (const auto& img : images) {
      std::vector<size_t> members;
      for (size_t c : img) members.insert(members.end(), concepts[c].parts.begin(), concepts[c].parts.end());
      std::vector<double> weights;
      for (size_t p : members) weights.push_back(parts[p].weight);
      std::vector<Rect> rects(members.size());
      layout({0, 0, W, H}, weights, rects);
      inst.images.push_back({image_id, H, W});
      SegmentationMap gt(image_id, H, W);
      for (size_t m = 0; m < members.size(); ++m) {
        const Part& p = parts[members[m]];
        const Rect& r = rects[m];
        MaskRecord rec;
        rec.mask_id = static_cast<int64_t>(inst.masks.size());
        rec.image_id = image_id;
        rec.area = static_cast<int64_t>(r.w) * r.h;
        rec.bbox = {r.x, r.y, r.w, r.h};
        rec.split = p.labeled ? Split::kLabeled : Split::kUnlabeled;
        if (p.labeled) rec.label = p.cls;
        inst.masks.push_back(rec);
        inst.geometry.push_back(rect_mask(H, W, r));
        features.insert(features.end(), p.feature.begin(), p.feature.end());
        out.ground_truth.push_back(p.cls);
        for (int32_t y = r.y; y < r.y + r.h; ++y) {
          for (int32_t x = r.x; x < r.x + r.w; ++x) gt.at(y, x) = static_cast<uint16_t>(p.cls);
        }
      }
      out.gt_maps.push_back(std::move(gt));
      ++image_id;
    }
  };
  emit(labeled_images);
  emit(unlabeled_images);
  inst.features = FeatureMatrix(inst.masks.size(), d, std::move(features));
  return out;
}

std::vector<int32_t> oracle_assign(const DiscoveryInstance& inst, const CentroidMatrix& centers) {
  std::vector<int32_t> out(inst.size(), 0);
  for (size_t i = 0; i < inst.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < centers.rows; ++c) {
      double d2 = 0;
      for (size_t t = 0; t < centers.cols; ++t) {
        const double diff = inst.features.row(i)[t] - centers.row(c)[t];
        d2 += diff * diff;
      }
      if (d2 < best) {
        best = d2;
        out[i] = static_cast<int32_t>(c);
      }
    }
  }
  return out;
}

namespace {

// Contingency counts between distinct truth values (rows) and predicted values (cols).
struct Contingency {
  std::vector<int32_t> truth_values, pred_values;
  ScoreMatrix counts;
};

Contingency contingency(std::span<const int32_t> truth, std::span<const int32_t> pred) {
  Contingency c;
  std::map<int32_t, size_t> ti, pi;
  for (int32_t t : truth) ti.emplace(t, 0);
  for (int32_t p : pred) pi.emplace(p, 0);
  for (auto& [v, idx] : ti) {
    idx = c.truth_values.size();
    c.truth_values.push_back(v);
  }
  for (auto& [v, idx] : pi) {
    idx = c.pred_values.size();
    c.pred_values.push_back(v);
  }
  c.counts = ScoreMatrix(ti.size(), pi.size());
  for (size_t i = 0; i < truth.size(); ++i) c.counts.at(ti[truth[i]], pi[pred[i]]) += 1.0;
  return c;
}

}  // namespace

double clustering_accuracy(std::span<const int32_t> truth, std::span<const int32_t> pred) {
  if (truth.size() != pred.size()) throw Error(ErrorCode::kDimensionMismatch, "label vectors differ in length");
  if (truth.empty()) return 1.0;
  const Contingency c = contingency(truth, pred);
  return hungarian_match(c.counts).total / static_cast<double>(truth.size());
}

double novel_clustering_accuracy(std::span<const int32_t> truth, std::span<const int32_t> pred, int32_t k_base) {
  if (truth.size() != pred.size()) throw Error(ErrorCode::kDimensionMismatch, "label vectors differ in length");
  std::vector<int32_t> t, p;
  size_t novel_total = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < k_base) continue;
    ++novel_total;
    if (pred[i] >= k_base) {
      t.push_back(truth[i]);
      p.push_back(pred[i]);
    }
  }
  if (novel_total == 0) return 1.0;
  if (t.empty()) return 0.0;
  const Contingency c = contingency(t, p);
  return hungarian_match(c.counts).total / static_cast<double>(novel_total);
}

double adjusted_rand_index(std::span<const int32_t> truth, std::span<const int32_t> pred) {
  if (truth.size() != pred.size()) throw Error(ErrorCode::kDimensionMismatch, "label vectors differ in length");
  const double n = static_cast<double>(truth.size());
  if (truth.size() < 2) return 1.0;
  const Contingency c = contingency(truth, pred);
  auto comb2 = [](double x) { return x * (x - 1) / 2; };
  double sum_ij = 0;
  std::vector<double> a(c.counts.rows, 0), b(c.counts.cols, 0);
  for (size_t i = 0; i < c.counts.rows; ++i) {
    for (size_t j = 0; j < c.counts.cols; ++j) {
      sum_ij += comb2(c.counts.at(i, j));
      a[i] += c.counts.at(i, j);
      b[j] += c.counts.at(i, j);
    }
  }
  double sa = 0, sb = 0;
  for (double v : a) sa += comb2(v);
  for (double v : b) sb += comb2(v);
  const double expected = sa * sb / comb2(n);
  const double max_index = (sa + sb) / 2;
  if (max_index == expected) return 1.0;
  return (sum_ij - expected) / (max_index - expected);
}

double novel_pixel_share(const SynthData& data) {
  const auto& inst = data.instance;
  std::map<int64_t, bool> unlabeled_image;
  for (const auto& m : inst.masks) {
    if (m.split == Split::kUnlabeled) unlabeled_image[m.image_id] = true;
  }
  uint64_t novel = 0, total = 0;
  for (const auto& map : data.gt_maps) {
    if (!unlabeled_image.count(map.image_id)) continue;
    for (uint16_t v : map.labels) {
      ++total;
      if (v != kVoid && v >= inst.k_base) ++novel;
    }
  }
  return total ? static_cast<double>(novel) / static_cast<double>(total) : 0.0;
}

void write_synth(const SynthData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "gt");
  InstancePaths paths = InstancePaths::in_directory(dir);
  paths.geometries = dir / "geometries.ndjson";
  write_instance(data.instance, paths);
  for (const auto& m : data.gt_maps) write_map(m, map_path(dir / "gt", m.image_id));
  std::vector<LabelAssignment> gt;
  for (size_t i = 0; i < data.instance.size(); ++i) {
    gt.push_back({data.instance.masks[i].mask_id, data.ground_truth[i], 1.0});
  }
  write_labels(gt, dir / "gt_labels.ndjson");
}

}  // namespace maskgcd
