// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "layoutgen/assignment.hpp"
#include "layoutgen/error.hpp"
#include "layoutgen/metrics.hpp"
#include "layoutgen/rng.hpp"

namespace layoutgen {

void MatchCostParams::validate() const {
  require(alpha1 >= 0 && alpha2 >= 0 && alpha3 >= 0 && alpha4 >= 0, ErrorKind::Config,
          "matching weights must be non-negative");
  require(delta > 0.0 && delta < 1.0, ErrorKind::Config, "delta must lie in (0,1)");
  require(alpha1 > alpha2 + 2.0 * alpha3 + 2.0 * alpha4, ErrorKind::Config,
          "alpha1 must dominate the geometric cost terms");
}

double pair_cost(const Element& gen, const Element& real, const MatchCostParams& params) {
  const Box a = gen.box();
  const Box b = real.box();
  const double mismatch = gen.category != real.category ? 1.0 : 0.0;
  const double pos = std::abs(a.center_x() - b.center_x()) + std::abs(a.center_y() - b.center_y());
  const double size = std::abs(a.w - b.w) + std::abs(a.h - b.h);
  return params.alpha1 * mismatch + params.alpha2 * (1.0 - iou(a, b)) + params.alpha3 * pos +
         params.alpha4 * size;
}

MatchResult hungarian_match(const Layout& gen, const Layout& real, const MatchCostParams& params) {
  require(gen.size() == real.size(), ErrorKind::Precondition,
          "matching needs equal element counts (" + std::to_string(gen.size()) + " vs " +
              std::to_string(real.size()) + ")");
  require(category_multiset(gen) == category_multiset(real), ErrorKind::Precondition,
          "matching needs equal category multisets");
  const int n = gen.size();
  CostMatrix cost(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      cost(i, j) = pair_cost(gen.elements[static_cast<std::size_t>(i)], real.elements[static_cast<std::size_t>(j)], params);
    }
  }
  const Assignment a = solve_assignment(cost);
  MatchResult out;
  out.assignment = a.row_to_col;
  out.per_pair_costs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.per_pair_costs.push_back(cost(i, a.row_to_col[static_cast<std::size_t>(i)]));
    out.total_cost += out.per_pair_costs.back();
  }
  return out;
}

int MaskAnnotation::count() const {
  int c = 0;
  for (const auto& e : elements) c += e.count();
  return c;
}

MaskAnnotation annotate_masks(const Layout& gen, const Layout& real, const MatchResult& match,
                              const MatchCostParams& params) {
  require(static_cast<int>(match.assignment.size()) == gen.size(), ErrorKind::Precondition,
          "match does not cover the generated layout");
  MaskAnnotation out;
  out.elements.resize(gen.elements.size());
  for (int i = 0; i < gen.size(); ++i) {
    const int j = match.assignment[static_cast<std::size_t>(i)];
    require(j >= 0 && j < real.size(), ErrorKind::Precondition, "match refers to a missing real element");
    const Element& g = gen.elements[static_cast<std::size_t>(i)];
    const Element& r = real.elements[static_cast<std::size_t>(j)];
    for (int k = 0; k < 4; ++k) {
      out.elements[static_cast<std::size_t>(i)].flags[static_cast<std::size_t>(k)] =
          std::abs(g.attr(k) - r.attr(k)) > params.delta;
    }
  }
  return out;
}

CorpusIndex::CorpusIndex(std::span<const Layout> corpus) : corpus_(corpus) {
  for (int i = 0; i < static_cast<int>(corpus.size()); ++i) {
    buckets_[category_multiset(corpus[static_cast<std::size_t>(i)])].push_back(i);
  }
}

std::span<const int> CorpusIndex::candidates(const std::vector<int>& multiset) const {
  auto it = buckets_.find(multiset);
  if (it == buckets_.end()) return {};
  return it->second;
}

RetrievalResult retrieve_reference(const Layout& gen, const CorpusIndex& index, const MatchCostParams& params,
                                   int candidate_cap, std::uint64_t seed) {
  const auto bucket = index.candidates(category_multiset(gen));
  require(!bucket.empty(), ErrorKind::RetrievalMiss, "no real layout shares the generated category multiset");
  std::vector<int> pool(bucket.begin(), bucket.end());
  if (candidate_cap > 0 && static_cast<int>(pool.size()) > candidate_cap) {
    Rng rng(seed);
    // Partial Fisher-Yates: the first candidate_cap slots become the sample.
    for (int i = 0; i < candidate_cap; ++i) {
      const auto j = static_cast<std::size_t>(i) + rng.below(pool.size() - static_cast<std::size_t>(i));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(candidate_cap));
    std::sort(pool.begin(), pool.end());
  }
  RetrievalResult best;
  for (int idx : pool) {
    MatchResult m = hungarian_match(gen, index.corpus()[static_cast<std::size_t>(idx)], params);
    if (best.corpus_index < 0 || m.total_cost < best.match.total_cost) {
      best.corpus_index = idx;
      best.match = std::move(m);
    }
  }
  return best;
}

}  // namespace layoutgen
