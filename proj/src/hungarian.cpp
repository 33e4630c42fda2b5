#include "maskgcd/hungarian.hpp"

#include <algorithm>
#include <limits>

namespace maskgcd {

namespace {

double row_order_total(const ScoreMatrix& s, const std::vector<std::pair<size_t, size_t>>& pairs) {
  double total = 0.0;
  for (const auto& [r, c] : pairs) total += s.at(r, c);
  return total;
}

}  // namespace

Matching hungarian_match(const ScoreMatrix& scores) {
  Matching out;
  if (scores.rows == 0 || scores.cols == 0) return out;
  // Shortest augmenting paths with potentials on the square, zero-padded cost matrix
  // cost = -score. Arrays are 1-based; index 0 is the virtual source column.
  const size_t n = std::max(scores.rows, scores.cols);
  auto cost = [&](size_t r, size_t c) {
    return (r < scores.rows && c < scores.cols) ? -scores.at(r, c) : 0.0;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<size_t> p(n + 1, 0), way(n + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    p[0] = i;
    size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const size_t i0 = p[j0];
      double delta = inf;
      size_t j1 = 0;
      for (size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (size_t j = 1; j <= n; ++j) {
    const size_t r = p[j] - 1, c = j - 1;
    if (r < scores.rows && c < scores.cols) out.pairs.emplace_back(r, c);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  out.total = row_order_total(scores, out.pairs);
  return out;
}

Matching greedy_match(const ScoreMatrix& scores) {
  Matching out;
  std::vector<bool> row_used(scores.rows, false), col_used(scores.cols, false);
  const size_t m = std::min(scores.rows, scores.cols);
  for (size_t step = 0; step < m; ++step) {
    double best = -std::numeric_limits<double>::infinity();
    size_t br = 0, bc = 0;
    bool found = false;
    for (size_t r = 0; r < scores.rows; ++r) {
      if (row_used[r]) continue;
      for (size_t c = 0; c < scores.cols; ++c) {
        if (col_used[c]) continue;
        if (!found || scores.at(r, c) > best) {
          best = scores.at(r, c);
          br = r;
          bc = c;
          found = true;
        }
      }
    }
    row_used[br] = col_used[bc] = true;
    out.pairs.emplace_back(br, bc);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  out.total = row_order_total(scores, out.pairs);
  return out;
}

}  // namespace maskgcd
