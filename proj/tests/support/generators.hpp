// SPDX-License-Identifier: Apache-2.0
// Seeded generators shared by the property-style tests.
#pragma once

#include <algorithm>
#include <vector>

#include "layoutgen/layout.hpp"
#include "layoutgen/rng.hpp"

namespace layoutgen::testing {

/// Elements with sides in [min_side, max_side] placed fully inside the canvas.
inline Layout random_layout(Rng& rng, int n, int num_categories, double min_side = 0.02, double max_side = 0.6) {
  Layout l;
  for (int i = 0; i < n; ++i) {
    Element e;
    e.category = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_categories)));
    e.w = rng.uniform(min_side, max_side);
    e.h = rng.uniform(min_side, max_side);
    e.x = rng.uniform(0.0, 1.0 - e.w);
    e.y = rng.uniform(0.0, 1.0 - e.h);
    l.elements.push_back(e);
  }
  return l;
}

/// Any value in [0,1] for every attribute (sizes strictly positive); x+w may exceed 1.
inline Layout random_raw_layout(Rng& rng, int n, int num_categories) {
  Layout l;
  for (int i = 0; i < n; ++i) {
    Element e;
    e.category = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_categories)));
    e.x = rng.uniform();
    e.y = rng.uniform();
    e.w = std::max(1e-3, rng.uniform());
    e.h = std::max(1e-3, rng.uniform());
    if (rng.bernoulli(0.05)) e.x = 1.0;
    if (rng.bernoulli(0.05)) e.w = 1.0;
    l.elements.push_back(e);
  }
  return l;
}

}  // namespace layoutgen::testing
