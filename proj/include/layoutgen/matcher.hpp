// SPDX-License-Identifier: Apache-2.0
//
// Element-level bipartite matching between a generated layout and a real one,
// and the per-attribute mask annotation derived from the matched pairs.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "layoutgen/layout.hpp"

namespace layoutgen {

struct MatchCostParams {
  double alpha1 = 10000.0;  // category mismatch
  double alpha2 = 64.0;     // 1 - IoU
  double alpha3 = 32.0;     // L1 distance of centers
  double alpha4 = 32.0;     // L1 distance of (w, h)
  double delta = 0.04;      // per-attribute mask threshold

  /// Throws Config if a weight is negative, delta is outside (0,1), or alpha1
  /// fails to dominate the bounded terms (max alpha2 + 2*alpha3 + 2*alpha4).
  void validate() const;
};

double pair_cost(const Element& gen, const Element& real, const MatchCostParams& params = {});

struct MatchResult {
  std::vector<int> assignment;  // generated index -> real index
  double total_cost = 0.0;
  std::vector<double> per_pair_costs;
};

MatchResult hungarian_match(const Layout& gen, const Layout& real, const MatchCostParams& params = {});

struct AttributeFlags {
  std::array<bool, 4> flags{};  // x, y, w, h
  bool any() const { return flags[0] || flags[1] || flags[2] || flags[3]; }
  int count() const { return flags[0] + flags[1] + flags[2] + flags[3]; }
  bool operator==(const AttributeFlags&) const = default;
};

/// Per-element (x, y, w, h) "re-predict" flags, indexed like the layout's elements.
/// Categories are never flagged.
struct MaskAnnotation {
  std::vector<AttributeFlags> elements;

  int size() const { return static_cast<int>(elements.size()); }
  int count() const;
  bool operator==(const MaskAnnotation&) const = default;
};

/// Flag k of element i iff |gen_i[k] - real_match(i)[k]| > delta.
MaskAnnotation annotate_masks(const Layout& gen, const Layout& real, const MatchResult& match,
                              const MatchCostParams& params = {});

/// Real layouts bucketed by category multiset.
class CorpusIndex {
 public:
  CorpusIndex() = default;
  explicit CorpusIndex(std::span<const Layout> corpus);

  std::span<const Layout> corpus() const { return corpus_; }
  /// Indices of corpus layouts whose category multiset equals the key (empty if none).
  std::span<const int> candidates(const std::vector<int>& multiset) const;
  std::size_t num_buckets() const { return buckets_.size(); }

 private:
  std::span<const Layout> corpus_;
  std::map<std::vector<int>, std::vector<int>> buckets_;
};

struct RetrievalResult {
  int corpus_index = -1;
  MatchResult match;
};

/// Among up to candidate_cap seeded-sampled layouts sharing gen's category
/// multiset, the one with the lowest matching cost. Throws RetrievalMiss.
RetrievalResult retrieve_reference(const Layout& gen, const CorpusIndex& index, const MatchCostParams& params,
                                   int candidate_cap = 32, std::uint64_t seed = 0);

}  // namespace layoutgen
