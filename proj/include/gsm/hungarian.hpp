#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "gsm/similarity.hpp"

namespace gsm {

// Maximum-score perfect assignment on a square matrix (Kuhn-Munkres with
// potentials, O(n^3)). Returns row_to_col.
inline std::vector<std::size_t> solve_assignment_max(const ScoreMatrix& score) {
  const std::size_t n = static_cast<std::size_t>(score.rows());
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is a virtual start.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match_col(n + 1, 0), way(n + 1, 0);
  auto cost = [&](std::size_t i, std::size_t j) {
    return -score(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j - 1));
  };

  for (std::size_t i = 1; i <= n; ++i) {
    match_col[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match_col[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match_col[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match_col[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match_col[j0] = match_col[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> row_to_col(n, 0);
  for (std::size_t j = 1; j <= n; ++j) {
    if (match_col[j] != 0) row_to_col[match_col[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace gsm
