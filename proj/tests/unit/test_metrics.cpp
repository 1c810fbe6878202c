// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "layoutgen/error.hpp"
#include "layoutgen/metrics.hpp"
#include "support/generators.hpp"

using namespace layoutgen;

namespace {

Layout make(std::initializer_list<Element> els) {
  Layout l;
  l.elements = els;
  return l;
}

// Direct evaluation of the ordered-pair overlap sum with no shared helpers.
double overlap_oracle(const Layout& l, bool same) {
  double s = 0;
  for (std::size_t i = 0; i < l.elements.size(); ++i) {
    const auto& a = l.elements[i];
    const double area = a.w * a.h;
    if (area <= 0) continue;
    for (std::size_t j = 0; j < l.elements.size(); ++j) {
      const auto& b = l.elements[j];
      if (i == j || (same && a.category != b.category)) continue;
      const double iw = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
      const double ih = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
      s += iw * ih / area;
    }
  }
  return s;
}

}  // namespace

TEST_CASE("iou examples") {
  const Box a{0, 0, 1, 1};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, Box{2, 2, 1, 1}) == 0.0);
  CHECK(iou(a, Box{0.5, 0, 1, 1}) == doctest::Approx(1.0 / 3.0));
  CHECK(iou(Box{0.3, 0.3, 0, 0}, Box{0.3, 0.3, 0, 0}) == 0.0);
}

TEST_CASE("overlap examples") {
  CHECK(overlap(std::vector<Layout>{make({{0, 0.1, 0.1, 0.3, 0.3}})}, false).value == 0.0);
  const auto nested = make({{0, 0.25, 0.25, 0.5, 0.5}, {1, 0, 0, 1, 1}});
  CHECK(overlap(std::vector<Layout>{nested}, false).value == doctest::Approx(125.0));
  CHECK(overlap(std::vector<Layout>{nested}, true).value == 0.0);
  const auto disjoint = make({{0, 0, 0, 0.2, 0.2}, {0, 0.5, 0.5, 0.2, 0.2}});
  CHECK(overlap(std::vector<Layout>{disjoint}, false).value == 0.0);

  const auto degenerate = make({{0, 0.2, 0.2, 0.0, 0.3}, {0, 0.1, 0.1, 0.5, 0.5}});
  const auto r = overlap(std::vector<Layout>{degenerate}, false);
  CHECK(r.skipped_zero_area == 1);
  CHECK(r.value == 0.0);
}

TEST_CASE("property: overlap agrees with direct evaluation and same-category is a subset") {
  Rng rng(17);
  std::vector<Layout> corpus;
  for (int i = 0; i < 200; ++i) corpus.push_back(testing::random_layout(rng, 1 + static_cast<int>(rng.below(9)), 3));
  double expected_all = 0, expected_same = 0;
  for (const auto& l : corpus) {
    expected_all += overlap_oracle(l, false);
    expected_same += overlap_oracle(l, true);
    CHECK(layout_overlap(l, true) <= layout_overlap(l, false) + 1e-12);
  }
  CHECK(overlap(corpus, false).value == doctest::Approx(100 * expected_all / 200));
  CHECK(overlap(corpus, true).value == doctest::Approx(100 * expected_same / 200));
  CHECK(overlap(corpus, false).value >= 0.0);
}

TEST_CASE("alignment examples") {
  CHECK(alignment(std::vector<Layout>{make({{0, 0.1, 0.1, 0.3, 0.3}})}) == 0.0);
  const auto left_aligned = make({{0, 0.1, 0.1, 0.3, 0.2}, {1, 0.1, 0.5, 0.6, 0.1}});
  CHECK(alignment(std::vector<Layout>{left_aligned}) == 0.0);
  const auto offset = make({{0, 0.1, 0.1, 0.3, 0.2}, {0, 0.2, 0.2, 0.3, 0.2}});
  CHECK(alignment(std::vector<Layout>{offset}) == doctest::Approx(-100 * std::log(0.9)).epsilon(1e-12));
  CHECK(alignment(std::vector<Layout>{offset}) == doctest::Approx(10.536).epsilon(1e-4));
}

TEST_CASE("property: alignment is translation invariant") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    auto l = testing::random_layout(rng, 2 + static_cast<int>(rng.below(7)), 3, 0.05, 0.4);
    double min_x = 1, min_y = 1, max_r = 0, max_b = 0;
    for (const auto& e : l.elements) {
      min_x = std::min(min_x, e.x);
      min_y = std::min(min_y, e.y);
      max_r = std::max(max_r, e.x + e.w);
      max_b = std::max(max_b, e.y + e.h);
    }
    const double dx = rng.uniform(-min_x, 1 - max_r);
    const double dy = rng.uniform(-min_y, 1 - max_b);
    auto moved = l;
    for (auto& e : moved.elements) {
      e.x += dx;
      e.y += dy;
    }
    CHECK(layout_alignment(moved) == doctest::Approx(layout_alignment(l)).epsilon(1e-9));
  }
}

TEST_CASE("max iou") {
  Rng rng(9);
  std::vector<Layout> set;
  for (int i = 0; i < 20; ++i) set.push_back(testing::random_layout(rng, 1 + static_cast<int>(rng.below(5)), 3));
  CHECK(max_iou(set, set) == 1.0);

  std::vector<Layout> other;
  other.push_back(make({{2, 0.1, 0.1, 0.1, 0.1}, {2, 0.3, 0.3, 0.1, 0.1}, {2, 0.5, 0.5, 0.1, 0.1},
                        {2, 0.7, 0.7, 0.1, 0.1}, {2, 0.6, 0.1, 0.1, 0.1}, {2, 0.1, 0.6, 0.1, 0.1}}));
  CHECK(max_iou(other, set) == 0.0);

  for (int t = 0; t < 100; ++t) {
    auto g = testing::random_layout(rng, 2, 1);
    auto r = testing::random_layout(rng, 2, 1);
    const auto& ge = g.elements;
    const auto& re = r.elements;
    const double ident = (iou(ge[0].box(), re[0].box()) + iou(ge[1].box(), re[1].box())) / 2;
    const double cross = (iou(ge[0].box(), re[1].box()) + iou(ge[1].box(), re[0].box())) / 2;
    CHECK(layout_pair_max_iou(g, r) == doctest::Approx(std::max(ident, cross)));
    const double v = max_iou(std::vector<Layout>{g}, std::vector<Layout>{r});
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("frechet distance examples") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXd s(3, 3);
  s << 2, 0.3, 0.1, 0.3, 1, 0.2, 0.1, 0.2, 0.5;
  CHECK(std::abs(frechet_distance(mu, s, mu, s)) <= 1e-6);

  Eigen::VectorXd mu2 = mu;
  mu2(1) = 1;
  CHECK(frechet_distance(mu, s, mu2, s) == doctest::Approx(1.0).epsilon(1e-6));

  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 3);
  CHECK(std::abs(frechet_distance(mu, zero, mu, zero)) <= 1e-9);

  // Diagonal closed form: sum (sqrt(a) - sqrt(b))^2.
  Eigen::MatrixXd a = Eigen::Vector3d(1, 4, 9).asDiagonal();
  Eigen::MatrixXd b = Eigen::Vector3d(4, 1, 0.25).asDiagonal();
  CHECK(frechet_distance(mu, a, mu, b) == doctest::Approx(1 + 1 + 6.25));
}

TEST_CASE("property: frechet distance is non-negative and zero on self") {
  Rng rng(77);
  for (int t = 0; t < 50; ++t) {
    const int d = 2 + static_cast<int>(rng.below(6));
    Eigen::MatrixXd x(40, d), y(40, d);
    for (int i = 0; i < 40; ++i) {
      for (int j = 0; j < d; ++j) {
        x(i, j) = rng.uniform(-1, 1);
        y(i, j) = rng.uniform(-1, 1) * 2 + 0.5;
      }
    }
    const auto gx = fit_gaussian(x);
    const auto gy = fit_gaussian(y);
    CHECK(frechet_distance(gx, gx) <= 1e-6);
    CHECK(frechet_distance(gx, gy) >= -1e-6);
    CHECK(frechet_distance(gx, gy) == doctest::Approx(frechet_distance(gy, gx)).epsilon(1e-6));
  }
}

TEST_CASE("metrics report serializes every field") {
  MetricsReport r;
  r.overlap_all = 1.5;
  r.config_hash = "abc";
  const auto j = r.to_json();
  CHECK(j["overlap_all"] == 1.5);
  CHECK(j.contains("pixel_fid"));
  CHECK(j["config_hash"] == "abc");
}
