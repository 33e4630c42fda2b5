#include "maskgcd/slic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "maskgcd/error.hpp"

namespace maskgcd {

namespace {

void check_params(const RgbImage& image, const SlicParams& p) {
  if (image.height < 1 || image.width < 1) throw Error(ErrorCode::kParamError, "empty image");
  const int64_t npix = static_cast<int64_t>(image.height) * image.width;
  if (p.n_segments < 1 || p.n_segments > npix) {
    throw Error(ErrorCode::kParamError,
                "n_segments=" + std::to_string(p.n_segments) + " outside [1, " + std::to_string(npix) + "]");
  }
  if (!(p.compactness > 0.0)) throw Error(ErrorCode::kParamError, "compactness must be > 0");
  if (p.max_iters < 1) throw Error(ErrorCode::kParamError, "max_iters must be >= 1");
}

double slic_distance(const uint8_t* px, double x, double y, const SlicCenter& c, double spatial_weight) {
  const double dr = px[0] - c.r, dg = px[1] - c.g, db = px[2] - c.b;
  const double dx = x - c.x, dy = y - c.y;
  return dr * dr + dg * dg + db * db + spatial_weight * (dx * dx + dy * dy);
}

double gradient(const RgbImage& img, int32_t y, int32_t x) {
  auto at = [&](int32_t yy, int32_t xx) {
    return img.pixel(std::clamp(yy, 0, img.height - 1), std::clamp(xx, 0, img.width - 1));
  };
  double g = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    const double gx = at(y, x + 1)[ch] - at(y, x - 1)[ch];
    const double gy = at(y + 1, x)[ch] - at(y - 1, x)[ch];
    g += gx * gx + gy * gy;
  }
  return g;
}

// Energy of an assignment against a set of centers.
double slic_energy(const RgbImage& img, std::span<const SlicCenter> centers, std::span<const int32_t> labels,
                   double spatial_weight) {
  double e = 0.0;
  for (int32_t y = 0; y < img.height; ++y) {
    for (int32_t x = 0; x < img.width; ++x) {
      const int32_t l = labels[static_cast<size_t>(y) * img.width + x];
      e += slic_distance(img.pixel(y, x), x + 0.5, y + 0.5, centers[static_cast<size_t>(l)], spatial_weight);
    }
  }
  return e;
}

// Moves every non-empty center to the mean of its pixels. Integer sums keep the
// result independent of summation order.
void update_centers(const RgbImage& img, std::span<const int32_t> labels, std::vector<SlicCenter>& centers) {
  const size_t k = centers.size();
  std::vector<int64_t> acc(k * 6, 0);  // r, g, b, 2x+1, 2y+1, count
#pragma omp parallel
  {
    std::vector<int64_t> local(k * 6, 0);
#pragma omp for schedule(static) nowait
    for (int32_t y = 0; y < img.height; ++y) {
      for (int32_t x = 0; x < img.width; ++x) {
        const auto l = static_cast<size_t>(labels[static_cast<size_t>(y) * img.width + x]);
        const uint8_t* px = img.pixel(y, x);
        int64_t* a = local.data() + l * 6;
        a[0] += px[0];
        a[1] += px[1];
        a[2] += px[2];
        a[3] += 2 * x + 1;
        a[4] += 2 * y + 1;
        a[5] += 1;
      }
    }
#pragma omp critical
    for (size_t i = 0; i < acc.size(); ++i) acc[i] += local[i];
  }
  for (size_t c = 0; c < k; ++c) {
    const int64_t* a = acc.data() + c * 6;
    if (a[5] == 0) continue;
    const double cnt = static_cast<double>(a[5]);
    centers[c] = {a[0] / cnt, a[1] / cnt, a[2] / cnt, a[3] / (2.0 * cnt), a[4] / (2.0 * cnt)};
  }
}

// Reassigns every component that is not the largest of its label to the largest
// adjacent label whose main component it touches, until each label is one component.
void enforce_connectivity(int32_t h, int32_t w, std::vector<int32_t>& labels, int32_t num_labels) {
  const size_t npix = labels.size();
  std::vector<int32_t> comp(npix);
  std::vector<size_t> stack;
  for (;;) {
    std::fill(comp.begin(), comp.end(), -1);
    std::vector<int32_t> comp_label;
    std::vector<int64_t> comp_size;
    for (size_t start = 0; start < npix; ++start) {
      if (comp[start] >= 0) continue;
      const auto id = static_cast<int32_t>(comp_label.size());
      const int32_t l = labels[start];
      comp_label.push_back(l);
      comp_size.push_back(0);
      comp[start] = id;
      stack.assign(1, start);
      while (!stack.empty()) {
        const size_t p = stack.back();
        stack.pop_back();
        ++comp_size.back();
        const auto y = static_cast<int32_t>(p / w), x = static_cast<int32_t>(p % w);
        const int32_t ny[4] = {y - 1, y + 1, y, y};
        const int32_t nx[4] = {x, x, x - 1, x + 1};
        for (int t = 0; t < 4; ++t) {
          if (ny[t] < 0 || ny[t] >= h || nx[t] < 0 || nx[t] >= w) continue;
          const size_t q = static_cast<size_t>(ny[t]) * w + nx[t];
          if (comp[q] < 0 && labels[q] == l) {
            comp[q] = id;
            stack.push_back(q);
          }
        }
      }
    }
    std::vector<int32_t> main_comp(static_cast<size_t>(num_labels), -1);
    std::vector<int64_t> label_size(static_cast<size_t>(num_labels), 0);
    for (size_t c = 0; c < comp_label.size(); ++c) {
      const auto l = static_cast<size_t>(comp_label[c]);
      label_size[l] += comp_size[c];
      if (main_comp[l] < 0 || comp_size[c] > comp_size[static_cast<size_t>(main_comp[l])]) {
        main_comp[l] = static_cast<int32_t>(c);
      }
    }
    auto is_main = [&](int32_t c) { return main_comp[static_cast<size_t>(comp_label[static_cast<size_t>(c)])] == c; };
    std::vector<int32_t> target(comp_label.size(), -1);
    bool any_orphan = false;
    auto consider = [&](size_t p, size_t q) {
      const int32_t a = comp[p], b = comp[q];
      if (a == b) return;
      for (auto [o, m] : {std::pair{a, b}, std::pair{b, a}}) {
        if (is_main(o) || !is_main(m)) continue;
        const int32_t cand = comp_label[static_cast<size_t>(m)];
        int32_t& t = target[static_cast<size_t>(o)];
        if (t < 0 || label_size[static_cast<size_t>(cand)] > label_size[static_cast<size_t>(t)] ||
            (label_size[static_cast<size_t>(cand)] == label_size[static_cast<size_t>(t)] && cand < t)) {
          t = cand;
        }
      }
    };
    for (size_t c = 0; c < comp_label.size(); ++c) any_orphan = any_orphan || !is_main(static_cast<int32_t>(c));
    if (!any_orphan) return;
    for (int32_t y = 0; y < h; ++y) {
      for (int32_t x = 0; x < w; ++x) {
        const size_t p = static_cast<size_t>(y) * w + x;
        if (x + 1 < w) consider(p, p + 1);
        if (y + 1 < h) consider(p, p + static_cast<size_t>(w));
      }
    }
    for (size_t p = 0; p < npix; ++p) {
      const int32_t t = target[static_cast<size_t>(comp[p])];
      if (t >= 0) labels[p] = t;
    }
  }
}

}  // namespace

int32_t slic_grid_spacing(int32_t height, int32_t width, int n_segments) {
  const double s = std::sqrt(static_cast<double>(height) * width / std::max(n_segments, 1));
  return std::max<int32_t>(1, static_cast<int32_t>(std::lround(s)));
}

std::vector<SlicCenter> slic_initial_centers(const RgbImage& image, const SlicParams& params) {
  check_params(image, params);
  const int32_t s = slic_grid_spacing(image.height, image.width, params.n_segments);
  int64_t nx = (image.width + s - 1) / s;
  int64_t ny = (image.height + s - 1) / s;
  if (params.n_segments == 1) nx = ny = 1;  // one requested segment means one seed
  while (nx * ny > 2 * static_cast<int64_t>(params.n_segments)) {
    if (nx >= ny && nx > 1) {
      --nx;
    } else {
      --ny;
    }
  }
  std::vector<SlicCenter> centers;
  centers.reserve(static_cast<size_t>(nx * ny));
  for (int64_t j = 0; j < ny; ++j) {
    for (int64_t i = 0; i < nx; ++i) {
      const double cx = (i + 0.5) * image.width / static_cast<double>(nx);
      const double cy = (j + 0.5) * image.height / static_cast<double>(ny);
      auto px = std::clamp(static_cast<int32_t>(cx), 0, image.width - 1);
      auto py = std::clamp(static_cast<int32_t>(cy), 0, image.height - 1);
      double gx = cx, gy = cy;
      if (params.seed_perturb) {
        double best = gradient(image, py, px);
        int32_t bx = px, by = py;
        for (int32_t dy = -1; dy <= 1; ++dy) {
          for (int32_t dx = -1; dx <= 1; ++dx) {
            const int32_t yy = py + dy, xx = px + dx;
            if (yy < 0 || yy >= image.height || xx < 0 || xx >= image.width) continue;
            const double g = gradient(image, yy, xx);
            if (g < best) {
              best = g;
              bx = xx;
              by = yy;
            }
          }
        }
        if (bx != px || by != py) {
          px = bx;
          py = by;
          gx = px + 0.5;
          gy = py + 0.5;
        }
      }
      const uint8_t* c = image.pixel(py, px);
      centers.push_back({static_cast<double>(c[0]), static_cast<double>(c[1]), static_cast<double>(c[2]), gx, gy});
    }
  }
  return centers;
}

std::vector<int32_t> slic_assign(const RgbImage& img, std::span<const SlicCenter> centers,
                                 std::span<const int32_t> current, int32_t spacing, double compactness) {
  const double weight = (compactness / spacing) * (compactness / spacing);
  const double s = spacing;
  // Bucket centers on an S-sized grid; a center within S on both axes of a pixel sits
  // in the pixel's cell or one of its eight neighbors.
  const int32_t gw = img.width / spacing + 3, gh = img.height / spacing + 3;
  std::vector<std::vector<int32_t>> cells(static_cast<size_t>(gw) * gh);
  auto cell_of = [&](double v, int32_t limit) {
    return std::clamp(static_cast<int32_t>(std::floor(v / s)) + 1, 0, limit - 1);
  };
  for (size_t c = 0; c < centers.size(); ++c) {
    cells[static_cast<size_t>(cell_of(centers[c].y, gh)) * gw + cell_of(centers[c].x, gw)].push_back(
        static_cast<int32_t>(c));
  }
  std::vector<int32_t> out(static_cast<size_t>(img.height) * img.width);
#pragma omp parallel for schedule(static)
  for (int32_t y = 0; y < img.height; ++y) {
    std::vector<int32_t> cand;
    for (int32_t x = 0; x < img.width; ++x) {
      const size_t p = static_cast<size_t>(y) * img.width + x;
      const double fx = x + 0.5, fy = y + 0.5;
      cand.clear();
      const int32_t cy = cell_of(fy, gh), cx = cell_of(fx, gw);
      for (int32_t yy = std::max(cy - 1, 0); yy <= std::min(cy + 1, gh - 1); ++yy) {
        for (int32_t xx = std::max(cx - 1, 0); xx <= std::min(cx + 1, gw - 1); ++xx) {
          for (int32_t c : cells[static_cast<size_t>(yy) * gw + xx]) {
            const auto& ctr = centers[static_cast<size_t>(c)];
            if (std::abs(ctr.x - fx) <= s && std::abs(ctr.y - fy) <= s) cand.push_back(c);
          }
        }
      }
      if (!current.empty() && current[p] >= 0) cand.push_back(current[p]);
      if (cand.empty()) {
        for (size_t c = 0; c < centers.size(); ++c) cand.push_back(static_cast<int32_t>(c));
      }
      int32_t best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (int32_t c : cand) {
        const double d = slic_distance(img.pixel(y, x), fx, fy, centers[static_cast<size_t>(c)], weight);
        if (d < best_d || (d == best_d && c < best)) {
          best_d = d;
          best = c;
        }
      }
      out[p] = best;
    }
  }
  return out;
}

namespace serial {

std::vector<int32_t> slic_assign(const RgbImage& img, std::span<const SlicCenter> centers,
                                 std::span<const int32_t> current, int32_t spacing, double compactness) {
  const double weight = (compactness / spacing) * (compactness / spacing);
  const double s = spacing;
  std::vector<int32_t> out(static_cast<size_t>(img.height) * img.width);
  for (int32_t y = 0; y < img.height; ++y) {
    for (int32_t x = 0; x < img.width; ++x) {
      const size_t p = static_cast<size_t>(y) * img.width + x;
      const double fx = x + 0.5, fy = y + 0.5;
      const int32_t cur = current.empty() ? -1 : current[p];
      int32_t best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      bool any = false;
      for (size_t c = 0; c < centers.size(); ++c) {
        const bool in_window = std::abs(centers[c].x - fx) <= s && std::abs(centers[c].y - fy) <= s;
        if (!in_window && static_cast<int32_t>(c) != cur) continue;
        any = true;
        const double d = slic_distance(img.pixel(y, x), fx, fy, centers[c], weight);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int32_t>(c);
        }
      }
      if (!any) {
        for (size_t c = 0; c < centers.size(); ++c) {
          const double d = slic_distance(img.pixel(y, x), fx, fy, centers[c], weight);
          if (d < best_d) {
            best_d = d;
            best = static_cast<int32_t>(c);
          }
        }
      }
      out[p] = best;
    }
  }
  return out;
}

}  // namespace serial

SlicResult slic_label_raster(const RgbImage& image, const SlicParams& params) {
  check_params(image, params);
  SlicResult res;
  res.height = image.height;
  res.width = image.width;
  res.grid_spacing = slic_grid_spacing(image.height, image.width, params.n_segments);
  const double weight = (params.compactness / res.grid_spacing) * (params.compactness / res.grid_spacing);
  std::vector<SlicCenter> centers = slic_initial_centers(image, params);
  std::vector<int32_t> labels;
  for (int it = 0; it < params.max_iters; ++it) {
    auto next = slic_assign(image, centers, labels, res.grid_spacing, params.compactness);
    const bool stable = next == labels;
    labels = std::move(next);
    if (stable) break;
    update_centers(image, labels, centers);
    res.energy_history.push_back(slic_energy(image, centers, labels, weight));
  }
  enforce_connectivity(image.height, image.width, labels, static_cast<int32_t>(centers.size()));

  std::vector<int32_t> remap(centers.size(), -1);
  int32_t next_id = 0;
  for (int32_t& l : labels) {
    int32_t& r = remap[static_cast<size_t>(l)];
    if (r < 0) r = next_id++;
    l = r;
  }
  res.labels = std::move(labels);
  res.num_segments = next_id;
  return res;
}

std::vector<RleMask> masks_from_labels(int32_t height, int32_t width, std::span<const int32_t> labels,
                                       int32_t num_labels) {
  std::vector<RleMask> masks(static_cast<size_t>(num_labels));
  std::vector<uint64_t> run_end(masks.size(), 0);  // position after the label's last foreground run
  for (auto& m : masks) {
    m.height = height;
    m.width = width;
  }
  uint64_t pos = 0;
  for (int32_t x = 0; x < width; ++x) {
    for (int32_t y = 0; y < height; ++y, ++pos) {
      const auto l = static_cast<size_t>(labels[static_cast<size_t>(y) * width + x]);
      RleMask& m = masks[l];
      if (!m.counts.empty() && run_end[l] == pos) {
        ++m.counts.back();
      } else {
        m.counts.push_back(static_cast<uint32_t>(pos - run_end[l]));
        m.counts.push_back(1);
      }
      run_end[l] = pos + 1;
    }
  }
  for (size_t l = 0; l < masks.size(); ++l) {
    if (masks[l].counts.empty()) {
      masks[l].counts.push_back(static_cast<uint32_t>(pos));
    } else if (run_end[l] < pos) {
      masks[l].counts.push_back(static_cast<uint32_t>(pos - run_end[l]));
    }
  }
  return masks;
}

std::vector<RleMask> slic_segment(const RgbImage& image, const SlicParams& params) {
  const SlicResult r = slic_label_raster(image, params);
  return masks_from_labels(r.height, r.width, r.labels, r.num_segments);
}

FeatureMatrix centroid_features(const RgbImage& image, std::span<const RleMask> masks) {
  FeatureMatrix f(masks.size(), 5);
  for (size_t m = 0; m < masks.size(); ++m) {
    double r = 0, g = 0, b = 0, sx = 0, sy = 0;
    uint64_t n = 0;
    for_each_pixel(masks[m], [&](int32_t y, int32_t x) {
      const uint8_t* px = image.pixel(y, x);
      r += px[0];
      g += px[1];
      b += px[2];
      sx += x;
      sy += y;
      ++n;
    });
    auto row = f.row(m);
    if (n == 0) continue;
    const double cnt = static_cast<double>(n);
    row[0] = static_cast<float>(r / cnt / 255.0);
    row[1] = static_cast<float>(g / cnt / 255.0);
    row[2] = static_cast<float>(b / cnt / 255.0);
    row[3] = static_cast<float>(sx / cnt / image.width);
    row[4] = static_cast<float>(sy / cnt / image.height);
  }
  return f;
}

}  // namespace maskgcd
