// SPDX-License-Identifier: Apache-2.0
#include <filesystem>

#include "doctest.h"
#include "layoutgen/config.hpp"
#include "layoutgen/error.hpp"
#include "layoutgen/layout_io.hpp"

using namespace layoutgen;

TEST_CASE("defaults and typed getters") {
  const Config c;
  CHECK(c.get_double("matcher.alpha1") == 10000.0);
  CHECK(c.get_int("decoder.bins") == 128);
  CHECK(c.get_bool("decoder.use_wireframe"));
  CHECK(c.get_int_list("matcher.iterations") == std::vector<int>{1, 2, 4});
  CHECK(c.get_double_list("probe.noises") == std::vector<double>{0.1, 0.2, 0.5});
  CHECK_THROWS_AS(c.get("decoder.nonexistent"), Error);
}

TEST_CASE("parsing layers and rejects unknown keys") {
  Config c;
  c.parse("# comment\n\ndecoder.layers = 2\n  matcher.delta=0.1  # trailing\n");
  CHECK(c.get_int("decoder.layers") == 2);
  CHECK(c.get_double("matcher.delta") == 0.1);
  try {
    c.parse("decoder.layerz = 3");
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
  CHECK_THROWS_AS(c.parse("no equals sign here"), Error);

  const auto dir = std::filesystem::temp_directory_path() / "layoutgen_test_config";
  std::filesystem::create_directories(dir);
  write_text_file(dir / "a.cfg", "decoder.layers=3\n");
  c.load_file(dir / "a.cfg");
  CHECK(c.get_int("decoder.layers") == 3);
  c.set("decoder.layers", "5");
  CHECK(c.get_int("decoder.layers") == 5);
  c.set("decoder.layers", "five");
  CHECK_THROWS_AS(c.get_int("decoder.layers"), Error);
}

TEST_CASE("section hashes track only their section") {
  Config a, b;
  CHECK(a.hash("decoder.") == b.hash("decoder."));
  b.set("locator.depth", "34");
  CHECK(a.hash("decoder.") == b.hash("decoder."));
  CHECK(a.hash("locator.") != b.hash("locator."));
  CHECK(a.hash() != b.hash());
  for (const auto& [k, v] : a.section("matcher.")) CHECK(k.rfind("matcher.", 0) == 0);
}
