// SPDX-License-Identifier: Apache-2.0
//
// Per-layout data-parallel kernels. Every kernel has a serial reference and an
// OpenMP variant producing identical results (each layout is computed
// independently, so there is no reduction-order difference).
#pragma once

#include <span>
#include <vector>

#include "layoutgen/layout.hpp"
#include "layoutgen/render.hpp"

namespace layoutgen {
class CorpusIndex;
}

namespace layoutgen::kernels {

enum class Exec { Serial, Parallel };

struct OverlapTerms {
  std::vector<double> per_layout;  // unscaled pair sums
  int skipped_zero_area = 0;
};

OverlapTerms overlap_per_layout(std::span<const Layout> layouts, bool same_category_only, Exec exec);
std::vector<double> alignment_per_layout(std::span<const Layout> layouts, Exec exec);

/// Rasterizes every element on a resolution x resolution grid (pixel-center
/// sampling) and computes the overlap sum by counting pixels.
std::vector<double> pixel_overlap_per_layout(std::span<const Layout> layouts, int resolution,
                                             bool same_category_only, Exec exec);

/// Best mean-IoU score of each generated layout against same-multiset references (0 if none).
std::vector<double> max_iou_per_layout(std::span<const Layout> generated, const CorpusIndex& references,
                                       Exec exec);

std::vector<WireframeImage> render_batch(std::span<const Layout> layouts, int num_categories,
                                         const RenderOptions& opts, Exec exec);

int max_threads();

}  // namespace layoutgen::kernels
