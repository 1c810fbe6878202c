// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdint>

#include "layoutgen/error.hpp"
#include "layoutgen/matcher.hpp"
#include "layoutgen/metrics.hpp"

namespace layoutgen::kernels {

int max_threads() { return omp_get_max_threads(); }

namespace {

// Runs body(i) for i in [0, n) either serially or with an OpenMP static schedule.
template <typename Body>
void for_each_index(std::int64_t n, Exec exec, Body&& body) {
  if (exec == Exec::Serial) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t i = 0; i < n; ++i) body(i);
}

struct Raster {
  int x0, x1, y0, y1;  // covered pixel index ranges, half-open
};

// Pixel (px, py) is covered iff its center lies in [x, x + w) x [y, y + h).
Raster rasterize(const Box& b, int res) {
  auto first = [res](double lo) { return std::clamp(static_cast<int>(std::ceil(lo * res - 0.5)), 0, res); };
  return {first(b.x), first(b.x + b.w), first(b.y), first(b.y + b.h)};
}

double pixel_overlap_one(const Layout& layout, int res, bool same_category_only) {
  const int n = layout.size();
  std::vector<std::vector<std::uint8_t>> masks(static_cast<std::size_t>(n));
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    auto& m = masks[static_cast<std::size_t>(i)];
    m.assign(static_cast<std::size_t>(res) * res, 0);
    const Raster r = rasterize(layout.elements[static_cast<std::size_t>(i)].box(), res);
    for (int y = r.y0; y < r.y1; ++y) {
      std::fill(m.begin() + static_cast<std::ptrdiff_t>(y) * res + r.x0,
                m.begin() + static_cast<std::ptrdiff_t>(y) * res + r.x1, std::uint8_t{1});
    }
    counts[static_cast<std::size_t>(i)] = std::count(m.begin(), m.end(), std::uint8_t{1});
  }
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    if (counts[static_cast<std::size_t>(i)] == 0) continue;
    const auto& mi = masks[static_cast<std::size_t>(i)];
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (same_category_only &&
          layout.elements[static_cast<std::size_t>(i)].category != layout.elements[static_cast<std::size_t>(j)].category) {
        continue;
      }
      const auto& mj = masks[static_cast<std::size_t>(j)];
      std::int64_t both = 0;
      for (std::size_t p = 0; p < mi.size(); ++p) both += mi[p] & mj[p];
      sum += static_cast<double>(both) / static_cast<double>(counts[static_cast<std::size_t>(i)]);
    }
  }
  return sum;
}

}  // namespace

OverlapTerms overlap_per_layout(std::span<const Layout> layouts, bool same_category_only, Exec exec) {
  OverlapTerms out;
  const auto n = static_cast<std::int64_t>(layouts.size());
  out.per_layout.assign(layouts.size(), 0.0);
  std::vector<int> skipped(layouts.size(), 0);
  for_each_index(n, exec, [&](std::int64_t i) {
    const auto k = static_cast<std::size_t>(i);
    out.per_layout[k] = layout_overlap(layouts[k], same_category_only, &skipped[k]);
  });
  for (int s : skipped) out.skipped_zero_area += s;
  return out;
}

std::vector<double> alignment_per_layout(std::span<const Layout> layouts, Exec exec) {
  std::vector<double> out(layouts.size(), 0.0);
  for_each_index(static_cast<std::int64_t>(layouts.size()), exec, [&](std::int64_t i) {
    out[static_cast<std::size_t>(i)] = layout_alignment(layouts[static_cast<std::size_t>(i)]);
  });
  return out;
}

std::vector<double> pixel_overlap_per_layout(std::span<const Layout> layouts, int resolution,
                                             bool same_category_only, Exec exec) {
  require(resolution > 0, ErrorKind::Config, "raster resolution must be positive");
  std::vector<double> out(layouts.size(), 0.0);
  for_each_index(static_cast<std::int64_t>(layouts.size()), exec, [&](std::int64_t i) {
    out[static_cast<std::size_t>(i)] =
        pixel_overlap_one(layouts[static_cast<std::size_t>(i)], resolution, same_category_only);
  });
  return out;
}

std::vector<double> max_iou_per_layout(std::span<const Layout> generated, const CorpusIndex& references,
                                       Exec exec) {
  std::vector<double> out(generated.size(), 0.0);
  for_each_index(static_cast<std::int64_t>(generated.size()), exec, [&](std::int64_t i) {
    const Layout& g = generated[static_cast<std::size_t>(i)];
    double best = 0.0;
    for (int r : references.candidates(category_multiset(g))) {
      best = std::max(best, layout_pair_max_iou(g, references.corpus()[static_cast<std::size_t>(r)]));
    }
    out[static_cast<std::size_t>(i)] = best;
  });
  return out;
}

std::vector<WireframeImage> render_batch(std::span<const Layout> layouts, int num_categories,
                                         const RenderOptions& opts, Exec exec) {
  std::vector<WireframeImage> out(layouts.size());
  for_each_index(static_cast<std::int64_t>(layouts.size()), exec, [&](std::int64_t i) {
    out[static_cast<std::size_t>(i)] = render(layouts[static_cast<std::size_t>(i)], num_categories, opts).image;
  });
  return out;
}

}  // namespace layoutgen::kernels
