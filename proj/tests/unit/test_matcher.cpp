// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "doctest.h"
#include "layoutgen/assignment.hpp"
#include "layoutgen/error.hpp"
#include "layoutgen/matcher.hpp"
#include "support/brute_force.hpp"
#include "support/generators.hpp"

using namespace layoutgen;

namespace {

Layout with_categories(Rng& rng, const std::vector<int>& cats) {
  Layout l = testing::random_layout(rng, static_cast<int>(cats.size()), 1);
  for (std::size_t i = 0; i < cats.size(); ++i) l.elements[i].category = cats[i];
  return l;
}

}  // namespace

TEST_CASE("pair cost examples") {
  const Element a{0, 0.1, 0.2, 0.3, 0.4};
  CHECK(pair_cost(a, a) == 0.0);
  Element b = a;
  b.category = 1;
  CHECK(pair_cost(a, b) == 10000.0);
  // Equal-size unit-distance boxes: IoU 0, centers 1 apart on x, sizes equal.
  const Element left{0, 0.0, 0.0, 0.5, 0.5};
  const Element right{0, 1.0, 0.0, 0.5, 0.5};
  CHECK(pair_cost(left, right) == doctest::Approx(96.0));
}

TEST_CASE("pair cost is symmetric and alpha1 dominates") {
  Rng rng(4);
  const MatchCostParams p;
  p.validate();
  for (int t = 0; t < 200; ++t) {
    const auto l = testing::random_raw_layout(rng, 2, 3);
    const auto& a = l.elements[0];
    const auto& b = l.elements[1];
    CHECK(pair_cost(a, b) == doctest::Approx(pair_cost(b, a)));
    Element same = b;
    same.category = a.category;
    CHECK(pair_cost(a, same) <= 64.0 + 2 * 32.0 + 2 * 32.0);
  }
  MatchCostParams weak;
  weak.alpha1 = 100;
  CHECK_THROWS_AS(weak.validate(), Error);
}

TEST_CASE("assignment solver matches exhaustive search on random matrices") {
  Rng rng(99);
  for (int t = 0; t < 100; ++t) {
    const int n = 1 + static_cast<int>(rng.below(7));
    CostMatrix c(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) c(i, j) = rng.uniform(-5, 20);
    }
    const auto a = solve_assignment(c);
    auto sorted = a.row_to_col;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < n; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
    CHECK(a.total_cost == doctest::Approx(testing::brute_force_min_assignment(n, [&](int i, int j) { return c(i, j); })));
  }
}

TEST_CASE("rectangular assignment picks distinct columns") {
  CostMatrix c(2, 3);
  c(0, 0) = 5; c(0, 1) = 1; c(0, 2) = 9;
  c(1, 0) = 4; c(1, 1) = 2; c(1, 2) = 8;
  const auto a = solve_assignment(c);
  CHECK(a.total_cost == 5.0);
  CHECK(a.row_to_col == std::vector<int>{1, 0});
}

TEST_CASE("hungarian match identity and preconditions") {
  Rng rng(8);
  const auto l = with_categories(rng, {0, 1, 1, 2});
  const auto m = hungarian_match(l, l);
  CHECK(m.total_cost == 0.0);
  CHECK(m.per_pair_costs.size() == 4);

  auto shorter = l;
  shorter.elements.pop_back();
  CHECK_THROWS_AS(hungarian_match(l, shorter), Error);
  auto other = l;
  other.elements[0].category = 2;
  try {
    hungarian_match(l, other);
    FAIL("expected precondition error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Precondition);
  }
}

TEST_CASE("crossing assignment is chosen when it halves the position term") {
  // gen: A at left, B at right; real: listed right-then-left. Identity pairing
  // costs far more than the crossing pairing; verify against both permutations.
  Layout gen, real;
  gen.elements = {{0, 0.05, 0.1, 0.2, 0.2}, {0, 0.70, 0.1, 0.2, 0.2}};
  real.elements = {{0, 0.72, 0.1, 0.2, 0.2}, {0, 0.06, 0.1, 0.2, 0.2}};
  const auto m = hungarian_match(gen, real);
  CHECK(m.assignment == std::vector<int>{1, 0});
  const double ident = pair_cost(gen.elements[0], real.elements[0]) + pair_cost(gen.elements[1], real.elements[1]);
  const double cross = pair_cost(gen.elements[0], real.elements[1]) + pair_cost(gen.elements[1], real.elements[0]);
  CHECK(cross < ident);
  CHECK(m.total_cost == doctest::Approx(cross));
}

TEST_CASE("property: matching is optimal for n <= 6 and never crosses categories") {
  Rng rng(1234);
  for (int t = 0; t < 150; ++t) {
    const int n = 2 + static_cast<int>(rng.below(5));
    std::vector<int> cats(static_cast<std::size_t>(n));
    for (auto& c : cats) c = static_cast<int>(rng.below(3));
    const auto gen = with_categories(rng, cats);
    std::vector<int> shuffled = cats;
    rng.shuffle(std::span<int>(shuffled));
    const auto real = with_categories(rng, shuffled);
    const auto m = hungarian_match(gen, real);
    const double brute = testing::brute_force_min_assignment(n, [&](int i, int j) {
      return pair_cost(gen.elements[static_cast<std::size_t>(i)], real.elements[static_cast<std::size_t>(j)]);
    });
    CHECK(m.total_cost == doctest::Approx(brute).epsilon(1e-12));
    for (int i = 0; i < n; ++i) {
      CHECK(gen.elements[static_cast<std::size_t>(i)].category ==
            real.elements[static_cast<std::size_t>(m.assignment[static_cast<std::size_t>(i)])].category);
    }
  }
}

TEST_CASE("annotate masks fixtures") {
  Layout real;
  real.elements = {{0, 0.2, 0.3, 0.4, 0.1}};
  const auto identity = annotate_masks(real, real, hungarian_match(real, real));
  CHECK(identity.count() == 0);

  Layout shifted = real;
  shifted.elements[0].x += 0.1;
  const auto one = annotate_masks(shifted, real, hungarian_match(shifted, real));
  CHECK(one.elements[0].flags == std::array<bool, 4>{true, false, false, false});

  // A difference of exactly delta is not flagged (strict inequality).
  Layout grid_real, grid_gen;
  grid_real.elements = {{0, 0.25, 0.5, 0.25, 0.125}};
  grid_gen = grid_real;
  MatchCostParams p;
  p.delta = 0.125;
  grid_gen.elements[0].y += 0.125;  // exactly representable
  const auto edge = annotate_masks(grid_gen, grid_real, hungarian_match(grid_gen, grid_real, p), p);
  CHECK(edge.count() == 0);
}

TEST_CASE("property: lowering delta never clears a flag") {
  Rng rng(55);
  for (int t = 0; t < 100; ++t) {
    const auto gen = with_categories(rng, {0, 1, 0, 2});
    const auto real = with_categories(rng, {2, 0, 1, 0});
    MatchCostParams hi;
    hi.delta = rng.uniform(0.05, 0.5);
    MatchCostParams lo = hi;
    lo.delta = hi.delta * rng.uniform(0.1, 1.0);
    const auto m = hungarian_match(gen, real, hi);
    const auto a_hi = annotate_masks(gen, real, m, hi);
    const auto a_lo = annotate_masks(gen, real, m, lo);
    for (int i = 0; i < 4; ++i) {
      for (int k = 0; k < 4; ++k) {
        if (a_hi.elements[static_cast<std::size_t>(i)].flags[static_cast<std::size_t>(k)]) {
          CHECK(a_lo.elements[static_cast<std::size_t>(i)].flags[static_cast<std::size_t>(k)]);
        }
      }
    }
  }
}

TEST_CASE("retrieval") {
  Rng rng(21);
  std::vector<Layout> corpus;
  corpus.push_back(with_categories(rng, {0, 1}));
  corpus.push_back(with_categories(rng, {0, 1, 1}));
  corpus.push_back(with_categories(rng, {1, 0}));
  const CorpusIndex index(corpus);

  const auto hit = retrieve_reference(corpus[1], index, {}, 32, 0);
  CHECK(hit.corpus_index == 1);
  CHECK(hit.match.total_cost == 0.0);

  // Two candidates with the gen's multiset: a near copy and a far layout.
  Layout gen;
  gen.elements = {{0, 0.1, 0.1, 0.2, 0.2}, {1, 0.6, 0.6, 0.3, 0.3}};
  std::vector<Layout> two;
  Layout copy = gen;
  copy.elements[0].x += 0.01;
  Layout far;
  far.elements = {{1, 0.0, 0.0, 0.1, 0.1}, {0, 0.8, 0.8, 0.15, 0.15}};
  two.push_back(far);
  two.push_back(copy);
  const CorpusIndex idx2(two);
  CHECK(retrieve_reference(gen, idx2, {}, 32, 1).corpus_index == 1);

  Layout lonely;
  lonely.elements = {{2, 0.1, 0.1, 0.1, 0.1}};
  try {
    retrieve_reference(lonely, index, {}, 32, 0);
    FAIL("expected retrieval miss");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RetrievalMiss);
  }
}

TEST_CASE("retrieval is deterministic under the candidate cap") {
  Rng rng(5);
  std::vector<Layout> corpus;
  for (int i = 0; i < 200; ++i) corpus.push_back(with_categories(rng, {0, 1, 2}));
  const CorpusIndex index(corpus);
  const auto gen = with_categories(rng, {2, 1, 0});
  const auto a = retrieve_reference(gen, index, {}, 8, 42);
  const auto b = retrieve_reference(gen, index, {}, 8, 42);
  CHECK(a.corpus_index == b.corpus_index);
  const auto full = retrieve_reference(gen, index, {}, 0, 42);
  CHECK(full.match.total_cost <= a.match.total_cost);
}
