#include "maskgcd/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>

#include "maskgcd/error.hpp"

namespace maskgcd {

namespace {

double squared_distance(std::span<const float> f, std::span<const double> c) {
  double s = 0.0;
  for (size_t t = 0; t < f.size(); ++t) {
    const double d = static_cast<double>(f[t]) - c[t];
    s += d * d;
  }
  return s;
}

int32_t nearest(std::span<const float> f, const CentroidMatrix& centroids) {
  int32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t c = 0; c < centroids.rows; ++c) {
    const double d = squared_distance(f, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = static_cast<int32_t>(c);
    }
  }
  return best;
}

// Uniform double in [0,1) from the top 53 bits; identical on every standard library.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Indices sorted by mask_id so that results do not depend on input order.
std::vector<size_t> canonical_order(const DiscoveryInstance& inst, std::vector<size_t> rows) {
  std::sort(rows.begin(), rows.end(), [&](size_t a, size_t b) {
    return inst.masks[a].mask_id < inst.masks[b].mask_id ||
           (inst.masks[a].mask_id == inst.masks[b].mask_id && a < b);
  });
  return rows;
}

FeatureMatrix gather_rows(const FeatureMatrix& f, std::span<const size_t> rows) {
  std::vector<float> data;
  data.reserve(rows.size() * f.cols());
  for (size_t r : rows) {
    const auto src = f.row(r);
    data.insert(data.end(), src.begin(), src.end());
  }
  return FeatureMatrix(rows.size(), f.cols(), std::move(data));
}

}  // namespace

std::vector<int32_t> assign_to_nearest(const FeatureMatrix& features, std::span<const size_t> rows,
                                       const CentroidMatrix& centroids) {
  std::vector<int32_t> out(rows.size());
  const auto n = static_cast<int64_t>(rows.size());
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    out[static_cast<size_t>(i)] = nearest(features.row(rows[static_cast<size_t>(i)]), centroids);
  }
  return out;
}

namespace serial {

std::vector<int32_t> assign_to_nearest(const FeatureMatrix& features, std::span<const size_t> rows,
                                       const CentroidMatrix& centroids) {
  std::vector<int32_t> out;
  out.reserve(rows.size());
  for (size_t r : rows) out.push_back(nearest(features.row(r), centroids));
  return out;
}

}  // namespace serial

CentroidMatrix base_prototypes(const DiscoveryInstance& inst) {
  const size_t d = inst.features.cols();
  CentroidMatrix proto(static_cast<size_t>(inst.k_base), d);
  std::vector<double> mass(proto.rows, 0.0);
  for (size_t i : canonical_order(inst, [&] {
         std::vector<size_t> all(inst.size());
         std::iota(all.begin(), all.end(), size_t{0});
         return all;
       }())) {
    if (!inst.is_labeled(i) || !inst.masks[i].label) continue;
    const auto c = static_cast<size_t>(*inst.masks[i].label);
    if (c >= proto.rows) continue;
    const double w = inst.weight(i);
    auto dst = proto.row(c);
    const auto f = inst.features.row(i);
    for (size_t t = 0; t < d; ++t) dst[t] += w * f[t];
    mass[c] += w;
  }
  for (size_t c = 0; c < proto.rows; ++c) {
    if (mass[c] <= 0.0) {
      throw Error(ErrorCode::kEmptyClass, "base class " + std::to_string(c) + " has no labeled mask");
    }
    for (double& v : proto.row(c)) v /= mass[c];
  }
  return proto;
}

std::vector<double> d2_sampling_mass(const FeatureMatrix& candidates, std::span<const double> weights,
                                     const CentroidMatrix& centers) {
  std::vector<double> mass(candidates.rows());
  for (size_t i = 0; i < candidates.rows(); ++i) {
    if (centers.rows == 0) {
      mass[i] = weights[i];
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < centers.rows; ++c) {
      best = std::min(best, squared_distance(candidates.row(i), centers.row(c)));
    }
    mass[i] = weights[i] * best;
  }
  return mass;
}

SeedResult seed_novel_centroids(const FeatureMatrix& candidates, std::span<const double> weights,
                                const CentroidMatrix& base, int32_t k_novel, uint64_t rng_seed) {
  const size_t n = candidates.rows();
  const size_t d = candidates.cols();
  if (k_novel < 0 || static_cast<size_t>(k_novel) > n) {
    throw Error(ErrorCode::kNotEnoughCandidates,
                std::to_string(n) + " candidates for " + std::to_string(k_novel) + " novel centroids");
  }
  std::mt19937_64 rng(rng_seed);
  SeedResult out;
  out.centroids = CentroidMatrix(static_cast<size_t>(k_novel), d);
  std::vector<bool> taken(n, false);
  // Squared distance to the nearest of base prototypes and seeds so far.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (size_t i = 0; i < n; ++i) {
    for (size_t c = 0; c < base.rows; ++c) {
      d2[i] = std::min(d2[i], squared_distance(candidates.row(i), base.row(c)));
    }
  }

  auto draw = [&](const std::vector<double>& mass) -> std::optional<size_t> {
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      if (!taken[i]) total += mass[i];
    }
    if (!(total > 0.0)) return std::nullopt;
    const double u = uniform01(rng) * total;
    double acc = 0.0;
    std::optional<size_t> last;
    for (size_t i = 0; i < n; ++i) {
      if (taken[i] || mass[i] <= 0.0) continue;
      acc += mass[i];
      last = i;
      if (u < acc) return i;
    }
    return last;  // rounding at the top end
  };

  std::vector<double> mass(n);
  for (int32_t s = 0; s < k_novel; ++s) {
    for (size_t i = 0; i < n; ++i) {
      mass[i] = std::isinf(d2[i]) ? weights[i] : weights[i] * d2[i];
    }
    std::optional<size_t> pick = draw(mass);
    if (!pick) pick = draw(std::vector<double>(weights.begin(), weights.end()));
    if (!pick) {
      // Zero total weight: first free candidate.
      for (size_t i = 0; i < n && !pick; ++i) {
        if (!taken[i]) pick = i;
      }
    }
    const size_t p = *pick;
    taken[p] = true;
    out.chosen.push_back(p);
    const auto f = candidates.row(p);
    auto dst = out.centroids.row(static_cast<size_t>(s));
    for (size_t t = 0; t < d; ++t) dst[t] = f[t];
    for (size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(candidates.row(i), dst));
    }
  }
  return out;
}

ClusterModel constrained_kmeans(const DiscoveryInstance& inst, const LabelState& state,
                                const CentroidMatrix& init, ClusterMode mode, const ClusterConfig& cfg) {
  const size_t n = inst.size();
  const size_t d = inst.features.cols();
  if (state.size() != n) throw Error(ErrorCode::kDimensionMismatch, "state size differs from instance");
  if (init.cols != d && init.rows > 0) {
    throw Error(ErrorCode::kDimensionMismatch, "centroid dimension differs from features");
  }
  const bool baseline = mode == ClusterMode::kBaseline;
  const auto k_base = static_cast<size_t>(inst.k_base);
  if (baseline && init.rows < k_base) {
    throw Error(ErrorCode::kParamError, "baseline mode needs k_base + k_novel initial centroids");
  }

  ClusterModel model;
  model.weights.resize(n);
  for (size_t i = 0; i < n; ++i) model.weights[i] = inst.weight(i);
  model.k_pred = static_cast<int32_t>(baseline ? init.rows - k_base : init.rows);
  const int32_t offset = baseline ? 0 : inst.k_base;

  // Participants in canonical order; pinned[p] >= 0 fixes a participant's cluster.
  std::vector<size_t> members;
  for (size_t i = 0; i < n; ++i) {
    if (baseline || (!inst.is_labeled(i) && state.label[i] == kNovelPending)) members.push_back(i);
  }
  members = canonical_order(inst, std::move(members));
  std::vector<int32_t> pinned(members.size(), -1);
  std::vector<size_t> free_pos, free_rows;
  for (size_t p = 0; p < members.size(); ++p) {
    const size_t i = members[p];
    if (baseline && inst.is_labeled(i)) {
      pinned[p] = *inst.masks[i].label;
    } else {
      free_pos.push_back(p);
      free_rows.push_back(i);
    }
  }

  CentroidMatrix centroids = init;
  std::vector<int32_t> assign(members.size(), 0);
  auto assign_step = [&] {
    const auto nearest_free = assign_to_nearest(inst.features, free_rows, centroids);
    std::vector<int32_t> next(members.size());
    for (size_t p = 0; p < members.size(); ++p) next[p] = pinned[p];
    for (size_t q = 0; q < free_pos.size(); ++q) next[free_pos[q]] = nearest_free[q];
    return next;
  };
  auto inertia_of = [&](const std::vector<int32_t>& a) {
    double s = 0.0;
    for (size_t p = 0; p < members.size(); ++p) {
      const size_t i = members[p];
      s += model.weights[i] * squared_distance(inst.features.row(i), centroids.row(static_cast<size_t>(a[p])));
    }
    return s;
  };

  if (centroids.rows > 0 && !members.empty()) {
    assign = assign_step();
    model.inertia_history.push_back(inertia_of(assign));
    while (model.iterations < cfg.max_lloyd_iters) {
      // Weighted means, accumulated in canonical order.
      CentroidMatrix sums(centroids.rows, d);
      std::vector<double> mass(centroids.rows, 0.0);
      for (size_t p = 0; p < members.size(); ++p) {
        const size_t i = members[p];
        const auto c = static_cast<size_t>(assign[p]);
        const auto f = inst.features.row(i);
        auto dst = sums.row(c);
        for (size_t t = 0; t < d; ++t) dst[t] += model.weights[i] * f[t];
        mass[c] += model.weights[i];
      }
      std::vector<size_t> empty;
      for (size_t c = 0; c < centroids.rows; ++c) {
        if (baseline && c < k_base && cfg.freeze_base_centroids) continue;
        if (mass[c] <= 0.0) {
          empty.push_back(c);
          continue;
        }
        auto dst = centroids.row(c);
        const auto src = sums.row(c);
        for (size_t t = 0; t < d; ++t) dst[t] = src[t] / mass[c];
      }
      // Empty clusters jump to the free mask worst served by its current centroid.
      std::vector<bool> used(members.size(), false);
      for (size_t c : empty) {
        double best = -1.0;
        size_t best_p = members.size();
        for (size_t p : free_pos) {
          if (used[p]) continue;
          const size_t i = members[p];
          const double score = model.weights[i] *
                               squared_distance(inst.features.row(i), centroids.row(static_cast<size_t>(assign[p])));
          if (score > best) {
            best = score;
            best_p = p;
          }
        }
        if (best_p == members.size()) continue;
        used[best_p] = true;
        const auto f = inst.features.row(members[best_p]);
        auto dst = centroids.row(c);
        for (size_t t = 0; t < d; ++t) dst[t] = f[t];
      }

      auto next = assign_step();
      ++model.iterations;
      model.inertia_history.push_back(inertia_of(next));
      const bool stable = next == assign;
      assign = std::move(next);
      if (stable) break;
    }
  }
  model.inertia = model.inertia_history.empty() ? 0.0 : model.inertia_history.back();

  model.assignment.resize(n);
  for (size_t i = 0; i < n; ++i) {
    model.assignment[i] = inst.is_labeled(i) && inst.masks[i].label ? *inst.masks[i].label : state.label[i];
  }
  for (size_t p = 0; p < members.size(); ++p) model.assignment[members[p]] = offset + assign[p];

  if (baseline) {
    model.centroids = std::move(centroids);
  } else {
    // Base rows for reporting: weighted means of masks carrying each base label.
    model.centroids = CentroidMatrix(k_base + centroids.rows, d);
    std::vector<double> mass(k_base, 0.0);
    for (size_t i : canonical_order(inst, [&] {
           std::vector<size_t> all(n);
           std::iota(all.begin(), all.end(), size_t{0});
           return all;
         }())) {
      const int32_t l = model.assignment[i];
      if (l < 0 || static_cast<size_t>(l) >= k_base) continue;
      auto dst = model.centroids.row(static_cast<size_t>(l));
      const auto f = inst.features.row(i);
      for (size_t t = 0; t < d; ++t) dst[t] += model.weights[i] * f[t];
      mass[static_cast<size_t>(l)] += model.weights[i];
    }
    for (size_t c = 0; c < k_base; ++c) {
      if (mass[c] > 0.0) {
        for (double& v : model.centroids.row(c)) v /= mass[c];
      }
    }
    std::copy(centroids.data.begin(), centroids.data.end(), model.centroids.data.begin() + k_base * d);
  }
  return model;
}

namespace {

ClusterModel seeded_run(const DiscoveryInstance& inst, const LabelState& state, ClusterMode mode,
                        const ClusterConfig& cfg, const std::vector<size_t>& candidate_rows) {
  const CentroidMatrix proto = base_prototypes(inst);
  const std::vector<size_t> rows = canonical_order(inst, candidate_rows);
  const FeatureMatrix cand = gather_rows(inst.features, rows);
  std::vector<double> w;
  w.reserve(rows.size());
  for (size_t i : rows) w.push_back(inst.weight(i));
  const auto k_pred = static_cast<int32_t>(std::min<size_t>(static_cast<size_t>(std::max(inst.k_novel, 0)), rows.size()));
  // Independent seedings; the lowest final inertia wins, ties to the earlier restart.
  std::optional<ClusterModel> best;
  for (int r = 0; r < std::max(cfg.n_init, 1); ++r) {
    const uint64_t seed = cfg.rng_seed + static_cast<uint64_t>(r) * 0x9E3779B97F4A7C15ULL;
    const SeedResult seeds = seed_novel_centroids(cand, w, proto, k_pred, seed);
    CentroidMatrix init;
    if (mode == ClusterMode::kBaseline) {
      init = CentroidMatrix(proto.rows + seeds.centroids.rows, inst.features.cols());
      std::copy(proto.data.begin(), proto.data.end(), init.data.begin());
      std::copy(seeds.centroids.data.begin(), seeds.centroids.data.end(), init.data.begin() + proto.data.size());
    } else {
      init = seeds.centroids;
    }
    ClusterModel m = constrained_kmeans(inst, state, init, mode, cfg);
    if (!best || m.inertia < best->inertia) best = std::move(m);
    if (k_pred == 0) break;
  }
  return std::move(*best);
}

}  // namespace

ClusterModel cluster_baseline(const DiscoveryInstance& inst, const ClusterConfig& cfg) {
  std::vector<size_t> rows;
  for (size_t i = 0; i < inst.size(); ++i) {
    if (!inst.is_labeled(i)) rows.push_back(i);
  }
  return seeded_run(inst, LabelState::initial(inst), ClusterMode::kBaseline, cfg, rows);
}

ClusterModel cluster_novel(const DiscoveryInstance& inst, const LabelState& state, const ClusterConfig& cfg) {
  std::vector<size_t> rows;
  for (size_t i = 0; i < inst.size(); ++i) {
    if (!inst.is_labeled(i) && state.label[i] == kNovelPending) rows.push_back(i);
  }
  return seeded_run(inst, state, ClusterMode::kNovelOnly, cfg, rows);
}

}  // namespace maskgcd
