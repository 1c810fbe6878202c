// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "layoutgen/kernels.hpp"
#include "layoutgen/matcher.hpp"
#include "layoutgen/metrics.hpp"
#include "support/generators.hpp"

using namespace layoutgen;
using kernels::Exec;

namespace {

std::vector<Layout> sample(std::uint64_t seed, int count, int k = 3) {
  Rng rng(seed);
  std::vector<Layout> out;
  for (int i = 0; i < count; ++i) out.push_back(testing::random_layout(rng, 1 + static_cast<int>(rng.below(9)), k));
  return out;
}

}  // namespace

TEST_CASE("parallel kernels reproduce the serial reference exactly") {
  const auto layouts = sample(1, 120);
  for (bool same : {false, true}) {
    const auto s = kernels::overlap_per_layout(layouts, same, Exec::Serial);
    const auto p = kernels::overlap_per_layout(layouts, same, Exec::Parallel);
    CHECK(s.per_layout == p.per_layout);
    CHECK(s.skipped_zero_area == p.skipped_zero_area);
    CHECK(kernels::pixel_overlap_per_layout(layouts, 64, same, Exec::Serial) ==
          kernels::pixel_overlap_per_layout(layouts, 64, same, Exec::Parallel));
  }
  CHECK(kernels::alignment_per_layout(layouts, Exec::Serial) == kernels::alignment_per_layout(layouts, Exec::Parallel));

  const auto refs = sample(2, 400, 2);
  const CorpusIndex index(refs);
  const auto gen = sample(3, 60, 2);
  CHECK(kernels::max_iou_per_layout(gen, index, Exec::Serial) == kernels::max_iou_per_layout(gen, index, Exec::Parallel));

  const auto a = kernels::render_batch(std::span(layouts).first(10), 3, {}, Exec::Serial);
  const auto b = kernels::render_batch(std::span(layouts).first(10), 3, {}, Exec::Parallel);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("analytic overlap agrees with pixel counting") {
  const auto layouts = sample(11, 100);
  const auto analytic = kernels::overlap_per_layout(layouts, false, Exec::Parallel).per_layout;
  const auto pixel = kernels::pixel_overlap_per_layout(layouts, 512, false, Exec::Parallel);
  double sa = 0, sp = 0;
  for (std::size_t i = 0; i < layouts.size(); ++i) {
    sa += analytic[i];
    sp += pixel[i];
  }
  CHECK(std::abs(sa - sp) <= 0.02 * sa);
}

TEST_CASE("pixel oracle on a hand fixture") {
  Layout l;
  l.elements = {{0, 0.25, 0.25, 0.5, 0.5}, {0, 0, 0, 1, 1}};
  const auto v = kernels::pixel_overlap_per_layout(std::vector<Layout>{l}, 512, false, Exec::Serial);
  CHECK(v[0] == doctest::Approx(1.25));
}
