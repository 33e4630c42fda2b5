#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace maskgcd {

// Row-major R x C score matrix.
struct ScoreMatrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  ScoreMatrix() = default;
  ScoreMatrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double at(size_t r, size_t c) const { return data[r * cols + c]; }
  double& at(size_t r, size_t c) { return data[r * cols + c]; }
};

struct Matching {
  std::vector<std::pair<size_t, size_t>> pairs;  // (row, col), ascending by row
  double total = 0.0;                            // summed in row order
};

// Injective assignment of min(R, C) pairs maximizing the summed score.
Matching hungarian_match(const ScoreMatrix& scores);

// Repeatedly takes the largest remaining entry (ties: lowest row, then column).
Matching greedy_match(const ScoreMatrix& scores);

}  // namespace maskgcd
