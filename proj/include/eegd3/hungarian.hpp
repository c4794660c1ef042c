#pragma once

#include "eegd3/types.hpp"

#include <vector>

namespace eegd3 {

// Maximum-weight perfect assignment on a square score matrix (Kuhn-Munkres
// with potentials, O(n^3)). Returns perm with perm[row] = assigned column.
inline std::vector<int> hungarian_max(const Matrix& score) {
  const int n = static_cast<int>(score.rows());
  if (score.cols() != n) throw ShapeMismatch("hungarian requires a square matrix");
  // Minimize the negated scores; 1-based arrays per the classic formulation.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  const double inf = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -score(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) { minv[j] = cur; way[j] = j0; }
        if (minv[j] < delta) { delta = minv[j]; j1 = j; }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) { u[p[j]] += delta; v[j] -= delta; }
        else minv[j] -= delta;
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> perm(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) perm[p[j] - 1] = j - 1;
  return perm;
}

} // namespace eegd3
