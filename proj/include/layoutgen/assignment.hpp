// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace layoutgen {

/// Dense row-major cost matrix.
class CostMatrix {
 public:
  CostMatrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

 private:
  int rows_;
  int cols_;
  std::vector<double> data_;
};

struct Assignment {
  std::vector<int> row_to_col;
  double total_cost = 0.0;
};

/// Minimum-cost assignment of every row to a distinct column (rows <= cols),
/// shortest-augmenting-path Hungarian method with potentials, O(rows^2 * cols).
Assignment solve_assignment(const CostMatrix& cost);

}  // namespace layoutgen
