// SPDX-License-Identifier: Apache-2.0
#include <filesystem>

#include "doctest.h"
#include "layoutgen/render.hpp"
#include "support/generators.hpp"

using namespace layoutgen;

TEST_CASE("palette hues") {
  const Rgb red = palette_color(0, 5);
  CHECK(red.r == doctest::Approx(0.9));
  CHECK(red.g == doctest::Approx(0.135));
  CHECK(red.b == doctest::Approx(0.135));
  // hue 0.5 -> (v(1-s), v, v)
  const Rgb cyan = palette_color(1, 2);
  CHECK(cyan.r == doctest::Approx(0.135));
  CHECK(cyan.g == doctest::Approx(0.9));
  CHECK(cyan.b == doctest::Approx(0.9));
  CHECK(palette_color(3, 7) == palette_color(3, 7));
  for (int k = 1; k <= 13; ++k) {
    for (int a = 0; a < k; ++a) {
      for (int b = a + 1; b < k; ++b) CHECK_FALSE(palette_color(a, k) == palette_color(b, k));
    }
  }
  CHECK_THROWS(palette_color(5, 5));
}

TEST_CASE("empty layout renders white") {
  const auto r = render(Layout{}, 3);
  CHECK(r.image.height() == 224);
  CHECK(r.image.width() == 224);
  CHECK(r.image.non_white_count() == 0);
}

TEST_CASE("full-canvas element: alpha fill inside, solid border") {
  Layout l;
  l.elements = {{1, 0.0, 0.0, 1.0, 1.0}};
  const auto img = render(l, 2).image;
  const Rgb c = palette_color(1, 2);
  const float inside_r = 0.4f * 1.0f + 0.6f * c.r;
  CHECK(img.at(100, 100, 0) == doctest::Approx(inside_r).epsilon(1e-6));
  CHECK(img.at(1, 1, 1) == doctest::Approx(0.4f + 0.6f * c.g).epsilon(1e-6));
  CHECK(img.rgb(0, 0) == c);
  CHECK(img.rgb(223, 17) == c);
  CHECK(img.rgb(40, 223) == c);
}

TEST_CASE("fully masked geometry renders blank") {
  const CategorySchema schema({"a", "b"});
  const Vocabulary v(schema);
  Rng rng(3);
  const auto seq0 = encode(testing::random_layout(rng, 4, 2), v);
  auto seq = seq0;
  for (int i = 0; i < seq.n; ++i) {
    seq.mask(position_of(i, SlotKind::X));
    seq.mask(position_of(i, SlotKind::Y));
  }
  const auto r = render(seq, v);
  CHECK(r.image.non_white_count() == 0);
  CHECK(r.elements.empty());
}

TEST_CASE("render is deterministic") {
  Rng rng(9);
  for (int t = 0; t < 10; ++t) {
    const auto l = testing::random_layout(rng, 6, 4);
    const auto a = render(l, 4);
    const auto b = render(l, 4);
    CHECK(a.image == b.image);
    CHECK(a.image.hash() == b.image.hash());
  }
}

TEST_CASE("property: occupancy is monotone in appended elements") {
  Rng rng(77);
  for (int t = 0; t < 20; ++t) {
    const auto full = testing::random_layout(rng, 9, 5, 0.01, 0.5);
    std::size_t prev = 0;
    Layout partial;
    for (const auto& e : full.elements) {
      partial.elements.push_back(e);
      const auto count = render(partial, 5).image.non_white_count();
      CHECK(count >= prev);
      prev = count;
    }
  }
}

TEST_CASE("property: masking geometry of one element removes exactly its pixels") {
  const CategorySchema schema({"a", "b", "c"});
  const Vocabulary v(schema);
  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    // Disjoint cells of a 3x3 grid, each box strictly inside its cell.
    Layout l;
    for (int cell = 0; cell < 9; ++cell) {
      if (!rng.bernoulli(0.6)) continue;
      const double cx = (cell % 3) / 3.0, cy = (cell / 3) / 3.0;
      Element e;
      e.category = static_cast<int>(rng.below(3));
      e.x = cx + rng.uniform(0.01, 0.1);
      e.y = cy + rng.uniform(0.01, 0.1);
      e.w = rng.uniform(0.05, 0.2);
      e.h = rng.uniform(0.05, 0.2);
      l.elements.push_back(e);
    }
    if (l.empty()) continue;
    const auto seq = encode(l, v);
    const auto full = render(seq, v).image;
    const int victim = static_cast<int>(rng.below(static_cast<std::uint64_t>(seq.n)));
    auto masked = seq;
    masked.mask(position_of(victim, static_cast<SlotKind>(2 + rng.below(4))));
    const auto part = render(masked, v);
    const Layout decoded = decode(seq, v);
    const PixelRect r = to_pixel_rect(decoded.elements[static_cast<std::size_t>(victim)].box(), 224, 224);
    for (int y = 0; y < 224; ++y) {
      for (int x = 0; x < 224; ++x) {
        const bool inside = x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1;
        if (inside) {
          CHECK(part.image.is_white(y, x));
        } else {
          CHECK(part.image.rgb(y, x) == full.rgb(y, x));
        }
      }
    }
  }
}

TEST_CASE("png round trip at 8-bit precision and svg structure") {
  Layout l;
  l.elements = {{0, 0.1, 0.1, 0.3, 0.2}, {1, 0.5, 0.5, 0.4, 0.4}};
  const auto img = render(l, 2).image;
  const auto path = std::filesystem::temp_directory_path() / "layoutgen_render_test.png";
  write_png(path, img);
  const auto back = read_png(path);
  REQUIRE(back.height() == img.height());
  REQUIRE(back.width() == img.width());
  for (std::size_t i = 0; i < img.pixels().size(); ++i) {
    CHECK(std::abs(back.pixels()[i] - img.pixels()[i]) <= 0.5f / 255.0f + 1e-6f);
  }
  std::filesystem::remove(path);
  const auto svg = to_svg(l, 2);
  CHECK(svg.find("fill-opacity=\"0.6\"") != std::string::npos);
  CHECK(svg.find("stroke-width=\"1\"") != std::string::npos);
  std::size_t rects = 0;
  for (auto p = svg.find("<rect"); p != std::string::npos; p = svg.find("<rect", p + 1)) ++rects;
  CHECK(rects == 3);  // background + two elements
}
