// SPDX-License-Identifier: Apache-2.0
//
// Layout quality metrics. Overlap and Alignment are reported x100.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "layoutgen/layout.hpp"

namespace layoutgen {

/// Intersection over union of two unclipped boxes; 0 when the union is empty.
double iou(const Box& a, const Box& b);
double intersection_area(const Box& a, const Box& b);

/// Sum over ordered pairs i != j of area(e_i & e_j) / area(e_i) for one layout.
/// Pairs whose e_i has zero area are skipped and counted in *skipped.
double layout_overlap(const Layout& layout, bool same_category_only, int* skipped = nullptr);

/// Mean over elements of -log(1 - min(d_i, 1 - eps)), d_i the smallest same-anchor
/// distance to another element over {left, x-center, right, top, y-center, bottom}.
double layout_alignment(const Layout& layout);

/// Mean IoU of the best category-preserving assignment between two layouts with
/// equal category multisets.
double layout_pair_max_iou(const Layout& gen, const Layout& ref);

struct OverlapResult {
  double value = 0.0;  // x100
  int skipped_zero_area = 0;
};

OverlapResult overlap(std::span<const Layout> layouts, bool same_category_only);
double alignment(std::span<const Layout> layouts);
double max_iou(std::span<const Layout> generated, std::span<const Layout> references);

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Rows are samples.
Gaussian fit_gaussian(const Eigen::MatrixXd& features);

/// |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)). The trace of the square root is
/// taken from the eigenvalues of the symmetric product S1^(1/2) S2 S1^(1/2).
double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sigma1,
                        const Eigen::VectorXd& mu2, const Eigen::MatrixXd& sigma2);
double frechet_distance(const Gaussian& a, const Gaussian& b);

struct MetricsReport {
  double overlap_all = 0.0;
  double overlap_same_category = 0.0;
  double alignment = 0.0;
  double max_iou = 0.0;
  double seq_fid = 0.0;
  double pixel_fid = 0.0;
  int num_generated = 0;
  int num_real = 0;
  int skipped_zero_area = 0;
  bool fid_low_sample_warning = false;
  std::string config_hash;

  nlohmann::ordered_json to_json() const;
};

}  // namespace layoutgen
