#include "maskgcd/knn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <utility>

#include "maskgcd/error.hpp"

namespace maskgcd {

namespace {

constexpr size_t kBlock = 64;

struct Candidate {
  double d2;
  uint32_t index;
  bool operator<(const Candidate& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
};

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (size_t t = 0; t < a.size(); ++t) {
    const double diff = static_cast<double>(a[t]) - static_cast<double>(b[t]);
    s += diff * diff;
  }
  return s;
}

void check_k(size_t n, int k) {
  if (k < 1) throw Error(ErrorCode::kParamError, "k must be >= 1");
  if (static_cast<size_t>(k) >= n) {
    throw Error(ErrorCode::kKTooLarge,
                "k=" + std::to_string(k) + " needs more than " + std::to_string(n) + " masks");
  }
}

void store_row(NeighborTable& t, size_t i, std::span<const Candidate> best) {
  for (size_t j = 0; j < t.k; ++j) {
    t.neighbors[i * t.k + j] = best[j].index;
    t.distances[i * t.k + j] = static_cast<float>(std::sqrt(best[j].d2));
  }
}

NeighborTable empty_table(size_t n, int k) {
  NeighborTable t;
  t.n = n;
  t.k = static_cast<size_t>(k);
  t.neighbors.resize(n * t.k);
  t.distances.resize(n * t.k);
  return t;
}

}  // namespace

FeatureMatrix l2_normalized(const FeatureMatrix& features) {
  FeatureMatrix out = features;
  for (size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    double s = 0.0;
    for (float v : r) s += static_cast<double>(v) * v;
    if (s == 0.0) continue;
    const double inv = 1.0 / std::sqrt(s);
    for (float& v : r) v = static_cast<float>(v * inv);
  }
  return out;
}

NeighborTable build_neighbor_table(const FeatureMatrix& raw, int k, bool normalize_features) {
  const size_t n = raw.rows();
  check_k(n, k);
  const FeatureMatrix normalized = normalize_features ? l2_normalized(raw) : FeatureMatrix{};
  const FeatureMatrix& f = normalize_features ? normalized : raw;
  NeighborTable table = empty_table(n, k);
  const size_t kk = table.k;
  const auto nblocks = static_cast<int64_t>((n + kBlock - 1) / kBlock);

#pragma omp parallel for schedule(dynamic)
  for (int64_t b = 0; b < nblocks; ++b) {
    const size_t row0 = static_cast<size_t>(b) * kBlock;
    const size_t row1 = std::min(n, row0 + kBlock);
    // Per-row bounded sorted list; worst entry last.
    std::vector<std::vector<Candidate>> best(row1 - row0);
    for (auto& v : best) v.reserve(kk + 1);
    for (size_t col0 = 0; col0 < n; col0 += kBlock) {
      const size_t col1 = std::min(n, col0 + kBlock);
      for (size_t i = row0; i < row1; ++i) {
        auto& list = best[i - row0];
        const auto fi = f.row(i);
        for (size_t j = col0; j < col1; ++j) {
          if (j == i) continue;
          const Candidate c{squared_distance(fi, f.row(j)), static_cast<uint32_t>(j)};
          if (list.size() == kk && !(c < list.back())) continue;
          list.insert(std::upper_bound(list.begin(), list.end(), c), c);
          if (list.size() > kk) list.pop_back();
        }
      }
    }
    for (size_t i = row0; i < row1; ++i) store_row(table, i, best[i - row0]);
  }
  return table;
}

NeighborTable build_neighbor_table(const DiscoveryInstance& instance, int k, bool normalize_features) {
  return build_neighbor_table(instance.features, k, normalize_features);
}

namespace serial {

NeighborTable build_neighbor_table(const FeatureMatrix& raw, int k, bool normalize_features) {
  const size_t n = raw.rows();
  check_k(n, k);
  const FeatureMatrix f = normalize_features ? l2_normalized(raw) : raw;
  NeighborTable table = empty_table(n, k);
  std::vector<Candidate> all;
  all.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    all.clear();
    for (size_t j = 0; j < n; ++j) {
      if (j != i) all.push_back({squared_distance(f.row(i), f.row(j)), static_cast<uint32_t>(j)});
    }
    std::partial_sort(all.begin(), all.begin() + table.k, all.end());
    store_row(table, i, all);
  }
  return table;
}

}  // namespace serial

std::vector<Neighbor> neighbors_of(const NeighborTable& table, size_t mask_index) {
  if (mask_index >= table.n) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "mask index " + std::to_string(mask_index) + " >= " + std::to_string(table.n));
  }
  std::vector<Neighbor> out;
  out.reserve(table.k);
  const auto idx = table.indices(mask_index);
  const auto dist = table.row_distances(mask_index);
  for (size_t j = 0; j < table.k; ++j) out.push_back({idx[j], dist[j]});
  return out;
}

namespace {

void put_u32(std::ostream& out, uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                         static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(bytes, 4);
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

}  // namespace

void write_neighbor_cache(const NeighborTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.write("GCDK", 4);
  put_u32(out, static_cast<uint32_t>(table.n));
  put_u32(out, static_cast<uint32_t>(table.k));
  for (size_t e = 0; e < table.neighbors.size(); ++e) {
    put_u32(out, table.neighbors[e]);
    put_u32(out, std::bit_cast<uint32_t>(table.distances[e]));
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

NeighborTable read_neighbor_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  const std::vector<unsigned char> raw{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (raw.size() < 12 || std::memcmp(raw.data(), "GCDK", 4) != 0) {
    throw Error(ErrorCode::kFormatError, path.string() + ": missing GCDK header");
  }
  NeighborTable t;
  t.n = get_u32(raw.data() + 4);
  t.k = get_u32(raw.data() + 8);
  const size_t entries = t.n * t.k;
  if (raw.size() != 12 + 8 * entries) {
    throw Error(ErrorCode::kDimensionMismatch, path.string() + ": size does not match N*k");
  }
  t.neighbors.resize(entries);
  t.distances.resize(entries);
  for (size_t e = 0; e < entries; ++e) {
    t.neighbors[e] = get_u32(raw.data() + 12 + 8 * e);
    t.distances[e] = std::bit_cast<float>(get_u32(raw.data() + 16 + 8 * e));
  }
  return t;
}

}  // namespace maskgcd
