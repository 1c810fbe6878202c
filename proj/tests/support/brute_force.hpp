// SPDX-License-Identifier: Apache-2.0
// Exhaustive oracles used to check the assignment solver and derived metrics.
#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace layoutgen::testing {

/// Minimum over all permutations p of sum_i cost(i, p[i]), summed in row order.
inline double brute_force_min_assignment(int n, const std::function<double(int, int)>& cost) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += cost(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace layoutgen::testing
