// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/assignment.hpp"

#include <limits>

#include "layoutgen/error.hpp"

namespace layoutgen {

Assignment solve_assignment(const CostMatrix& cost) {
  const int n = cost.rows();
  const int m = cost.cols();
  require(n <= m, ErrorKind::Precondition, "assignment needs rows <= cols");
  Assignment out;
  out.row_to_col.assign(static_cast<std::size_t>(n), -1);
  if (n == 0) return out;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is the virtual source of each augmentation.
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> col_owner(static_cast<std::size_t>(m) + 1, 0), way(static_cast<std::size_t>(m) + 1, 0);
  std::vector<double> minv(static_cast<std::size_t>(m) + 1);
  std::vector<char> used(static_cast<std::size_t>(m) + 1);

  for (int i = 1; i <= n; ++i) {
    col_owner[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = col_owner[static_cast<std::size_t>(j0)];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      require(j1 != 0, ErrorKind::Invariant, "assignment solver found no augmenting column (non-finite costs?)");
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(col_owner[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (col_owner[static_cast<std::size_t>(j0)] != 0);
    // Flip the augmenting path.
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      col_owner[static_cast<std::size_t>(j0)] = col_owner[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= m; ++j) {
    const int owner = col_owner[static_cast<std::size_t>(j)];
    if (owner != 0) out.row_to_col[static_cast<std::size_t>(owner - 1)] = j - 1;
  }
  for (int i = 0; i < n; ++i) out.total_cost += cost(i, out.row_to_col[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace layoutgen
