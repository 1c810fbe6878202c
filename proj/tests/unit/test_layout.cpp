// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "layoutgen/error.hpp"
#include "layoutgen/layout.hpp"
#include "layoutgen/layout_io.hpp"
#include "support/generators.hpp"

using namespace layoutgen;

namespace {

CategorySchema three_cats() { return CategorySchema({"a", "b", "c"}); }

ErrorKind kind_of_throw(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an exception");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("discretize boundaries") {
  CHECK(discretize(0.0, 128) == 0);
  CHECK(discretize(1.0, 128) == 127);
  CHECK(discretize(0.5, 128) == 64);
  CHECK(kind_of_throw([] { discretize(-0.01, 128); }) == ErrorKind::Domain);
  CHECK(kind_of_throw([] { discretize(1.0001, 128); }) == ErrorKind::Domain);
  CHECK(kind_of_throw([] { discretize(std::nan(""), 128); }) == ErrorKind::Domain);
}

TEST_CASE("continuize returns bin centers") {
  CHECK(continuize(64, 128) == 0.50390625);
  CHECK(continuize(0, 2) == 0.25);
  CHECK(continuize(127, 128) == 0.99609375);
  CHECK(kind_of_throw([] { continuize(128, 128); }) == ErrorKind::Domain);
  CHECK(kind_of_throw([] { continuize(-1, 128); }) == ErrorKind::Domain);
}

TEST_CASE("schema rejects duplicates and empties") {
  CHECK(kind_of_throw([] { CategorySchema({"a", "a"}); }) == ErrorKind::Schema);
  CHECK(kind_of_throw([] { CategorySchema(std::vector<std::string>{}); }) == ErrorKind::Schema);
  CHECK(kind_of_throw([] { CategorySchema({"a", ""}); }) == ErrorKind::Schema);
  const auto s = three_cats();
  CHECK(s.id_of("c") == 2);
  CHECK(kind_of_throw([&] { (void)s.id_of("zzz"); }) == ErrorKind::Schema);
}

TEST_CASE("vocabulary blocks are disjoint and sized 4+K+B") {
  const Vocabulary v(three_cats(), 128);
  CHECK(v.size() == 4 + 3 + 128);
  CHECK(v.kind_of(Vocabulary::kMask) == TokenKind::Special);
  CHECK(v.kind_of(v.category_token(0)) == TokenKind::Category);
  CHECK(v.kind_of(v.bin_token(0)) == TokenKind::Coordinate);
  for (int id = 0; id < v.size(); ++id) {
    int slots = v.valid_for_slot(id, SlotKind::Special) + v.valid_for_slot(id, SlotKind::Category) +
                v.valid_for_slot(id, SlotKind::X);
    CHECK(slots == 1);
  }
  CHECK(v.fingerprint() != Vocabulary(CategorySchema({"a", "b", "d"}), 128).fingerprint());
  CHECK(v.fingerprint() != Vocabulary(three_cats(), 64).fingerprint());
}

TEST_CASE("sort_elements orders") {
  Layout single;
  single.elements = {{1, 0.2, 0.3, 0.1, 0.1}};
  for (auto k : {ElementOrder::Position, ElementOrder::Category, ElementOrder::AsIs, ElementOrder::Random}) {
    CHECK(sort_elements(single, {k, 3}).elements == single.elements);
  }

  Layout two;
  two.elements = {{0, 0.1, 0.5, 0.2, 0.2}, {0, 0.6, 0.1, 0.2, 0.2}};
  const auto pos = sort_elements(two, {ElementOrder::Position, 0});
  CHECK(pos.elements[0] == two.elements[1]);
  CHECK(pos.elements[1] == two.elements[0]);

  Layout cats;
  cats.elements = {{2, 0.1, 0.1, 0.1, 0.1}, {1, 0.2, 0.2, 0.1, 0.1}, {2, 0.3, 0.3, 0.1, 0.1}};
  const auto bycat = sort_elements(cats, {ElementOrder::Category, 0});
  CHECK(bycat.elements[0] == cats.elements[1]);
  CHECK(bycat.elements[1] == cats.elements[0]);
  CHECK(bycat.elements[2] == cats.elements[2]);

  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    const Layout l = testing::random_layout(rng, 1 + static_cast<int>(rng.below(9)), 3);
    for (auto k : {ElementOrder::Position, ElementOrder::Category, ElementOrder::Random}) {
      auto sorted = sort_elements(l, {k, static_cast<std::uint64_t>(t)}).elements;
      auto orig = l.elements;
      auto key = [](const Element& a, const Element& b) {
        return std::tie(a.category, a.x, a.y, a.w, a.h) < std::tie(b.category, b.x, b.y, b.w, b.h);
      };
      std::sort(sorted.begin(), sorted.end(), key);
      std::sort(orig.begin(), orig.end(), key);
      CHECK(sorted == orig);
    }
  }
}

TEST_CASE("encode produces the 5n+2 layout") {
  const Vocabulary v(three_cats(), 128);
  Layout l;
  l.elements = {{0, 0.0, 0.0, 1.0, 1.0}};
  const auto seq = encode(l, v);
  const std::vector<int> expected = {Vocabulary::kBos, v.category_token(0), v.bin_token(0), v.bin_token(0),
                                     v.bin_token(127), v.bin_token(127), Vocabulary::kEos};
  CHECK(seq.ids == expected);
  CHECK(seq.num_masked() == 0);
  CHECK(std::count(seq.conditioned.begin(), seq.conditioned.end(), 1) == 0);

  Rng rng(5);
  const auto three = testing::random_layout(rng, 3, 3);
  CHECK(encode(three, v).size() == 17);

  const auto ten = testing::random_layout(rng, 10, 3);
  CHECK(kind_of_throw([&] { encode(ten, v, 9); }) == ErrorKind::Capacity);

  Layout bad;
  bad.elements = {{7, 0.1, 0.1, 0.1, 0.1}};
  CHECK(kind_of_throw([&] { encode(bad, v); }) == ErrorKind::Schema);
}

TEST_CASE("decode errors") {
  const Vocabulary v(three_cats(), 128);
  Layout l;
  l.elements = {{1, 0.2, 0.3, 0.4, 0.5}};
  auto seq = encode(l, v);
  auto masked = seq;
  masked.mask(2);
  CHECK(kind_of_throw([&] { decode(masked, v); }) == ErrorKind::IncompleteSequence);

  auto malformed = seq;
  malformed.ids[2] = v.category_token(0);
  CHECK(kind_of_throw([&] { decode(malformed, v); }) == ErrorKind::MalformedSequence);

  auto wrong_len = seq;
  wrong_len.ids.pop_back();
  CHECK(kind_of_throw([&] { decode(wrong_len, v); }) == ErrorKind::MalformedSequence);
}

TEST_CASE("degenerate sizes survive the round trip as half-bin widths") {
  const Vocabulary v(three_cats(), 128);
  Layout l;
  l.elements = {{0, 0.5, 0.5, 0.001, 0.002}};
  const auto back = decode(encode(l, v), v);
  REQUIRE(back.size() == 1);
  CHECK(back.elements[0].w == doctest::Approx(0.5 / 128));
  CHECK(back.elements[0].h == doctest::Approx(0.5 / 128));
}

TEST_CASE("property: round trip within half a bin and length law") {
  const Vocabulary v(three_cats(), 128);
  Rng rng(2024);
  for (int t = 0; t < 300; ++t) {
    const int n = 1 + static_cast<int>(rng.below(9));
    const Layout l = testing::random_raw_layout(rng, n, 3);
    const auto seq = encode(l, v);
    CHECK(seq.size() == 5 * n + 2);
    const Layout back = decode(seq, v);
    REQUIRE(back.size() == n);
    CHECK(category_multiset(back) == category_multiset(l));
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 4; ++k) {
        CHECK(std::abs(back.elements[static_cast<std::size_t>(i)].attr(k) -
                       l.elements[static_cast<std::size_t>(i)].attr(k)) <= 1.0 / 256 + 1e-9);
      }
    }
  }
}

TEST_CASE("masking refuses conditioned and special positions") {
  const Vocabulary v(three_cats(), 128);
  Layout l;
  l.elements = {{1, 0.2, 0.3, 0.4, 0.5}};
  auto seq = encode(l, v);
  CHECK(kind_of_throw([&] { seq.mask(0); }) == ErrorKind::Precondition);
  seq.conditioned[1] = 1;
  CHECK(kind_of_throw([&] { seq.mask(1); }) == ErrorKind::Precondition);
  seq.mask(3);
  CHECK(seq.masked_positions() == std::vector<int>{3});
  CHECK_FALSE(seq.geometry_known(0));
}

TEST_CASE("slot kinds cycle after BOS") {
  CHECK(slot_kind_at(0, 2) == SlotKind::Special);
  CHECK(slot_kind_at(1, 2) == SlotKind::Category);
  CHECK(slot_kind_at(2, 2) == SlotKind::X);
  CHECK(slot_kind_at(5, 2) == SlotKind::H);
  CHECK(slot_kind_at(6, 2) == SlotKind::Category);
  CHECK(slot_kind_at(11, 2) == SlotKind::Special);
  CHECK(element_index_of(0, 2) == -1);
  CHECK(element_index_of(5, 2) == 0);
  CHECK(element_index_of(6, 2) == 1);
  CHECK(element_index_of(11, 2) == -1);
  CHECK(position_of(1, SlotKind::W) == 9);
}

TEST_CASE("layout json keeps field order and values") {
  const auto schema = three_cats();
  Layout l;
  l.source_id = "page-1";
  l.canvas = {612, 792};
  l.elements = {{2, 0.125, 0.25, 0.5, 0.0625}};
  const auto text = layout_to_json(l, schema).dump();
  CHECK(text == R"({"id":"page-1","canvas":[612.0,792.0],"elements":[{"category":"c","bbox":[0.125,0.25,0.5,0.0625]}]})");
  const Layout back = layout_from_json(nlohmann::json::parse(text), schema);
  CHECK(back.elements == l.elements);
  CHECK(back.source_id == "page-1");
  CHECK(back.canvas == l.canvas);
  CHECK(kind_of_throw([&] { layout_from_json(nlohmann::json::parse(R"({"id":"x","elements":[{"category":"q","bbox":[0,0,1,1]}]})"), schema); }) ==
        ErrorKind::Schema);
}
