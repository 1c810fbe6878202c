// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "layoutgen/corpus.hpp"
#include "layoutgen/error.hpp"
#include "layoutgen/layout_io.hpp"
#include "layoutgen/metrics.hpp"

using namespace layoutgen;
using nlohmann::json;

namespace {

json coco_page(int id, double w, double h) { return {{"id", id}, {"width", w}, {"height", h}, {"file_name", "p" + std::to_string(id)}}; }
json coco_ann(int image, int cat, double x, double y, double w, double h) {
  return {{"image_id", image}, {"category_id", cat}, {"bbox", {x, y, w, h}}};
}
json coco_categories() {
  return json::array({{{"id", 1}, {"name", "text"}}, {{"id", 2}, {"name", "title"}}, {{"id", 9}, {"name", "footnote"}}});
}

}  // namespace

TEST_CASE("coco ingestion normalizes by the page size") {
  json coco;
  coco["images"] = json::array({coco_page(1, 500, 1000)});
  coco["categories"] = coco_categories();
  coco["annotations"] = json::array({coco_ann(1, 2, 50, 100, 200, 300)});
  const auto m = ingest_coco_style(coco, document_schema(), "train");
  REQUIRE(m.layouts.size() == 1);
  const auto& e = m.layouts[0].elements[0];
  CHECK(e.category == 1);
  CHECK(e.x == doctest::Approx(0.1));
  CHECK(e.y == doctest::Approx(0.1));
  CHECK(e.w == doctest::Approx(0.4));
  CHECK(e.h == doctest::Approx(0.3));
  CHECK(m.stats.kept == 1);
}

TEST_CASE("coco ingestion filters and counts") {
  json coco;
  coco["images"] = json::array({coco_page(1, 100, 100), coco_page(2, 100, 100)});
  coco["categories"] = coco_categories();
  auto anns = json::array();
  for (int i = 0; i < 10; ++i) anns.push_back(coco_ann(1, 1, i * 10, 0, 5, 5));
  anns.push_back(coco_ann(2, 1, 0, 0, 10, 10));
  anns.push_back(coco_ann(2, 9, 0, 0, 10, 10));   // label outside the schema
  anns.push_back(coco_ann(7, 1, 0, 0, 10, 10));   // no image record
  coco["annotations"] = anns;
  const auto m = ingest_coco_style(coco, document_schema(), "train");
  CHECK(m.layouts.size() == 1);
  CHECK(m.stats.dropped_too_many == 1);
  CHECK(m.stats.dropped_unknown_category == 1);
  CHECK(m.stats.skipped_missing_image == 1);
  for (const auto& l : m.layouts) CHECK_NOTHROW(validate_layout(l, m.schema));

  json empty;
  empty["images"] = json::array();
  empty["annotations"] = json::array();
  const auto e = ingest_coco_style(empty, document_schema(), "train");
  CHECK(e.layouts.empty());
  CHECK(e.stats.to_json() == FilterStats{}.to_json());

  const auto dir = std::filesystem::temp_directory_path() / "layoutgen_test_coco";
  std::filesystem::create_directories(dir);
  write_text_file(dir / "bad.json", "{ not json");
  try {
    ingest_coco_style_file(dir / "bad.json", document_schema(), "train");
    FAIL("expected data error");
  } catch (const Error& ex) {
    CHECK(ex.kind() == ErrorKind::Data);
  }
}

TEST_CASE("synthetic corpus") {
  SyntheticCorpusSpec spec;
  spec.count = 300;
  const auto a = synth_corpus(spec);
  const auto b = synth_corpus(spec);
  CHECK(a.layouts.size() == 300);
  CHECK(to_jsonl(a.layouts, a.schema) == to_jsonl(b.layouts, b.schema));
  CHECK(alignment(a.layouts) == 0.0);
  CHECK(overlap(a.layouts, false).value == 0.0);
  for (const auto& l : a.layouts) {
    CHECK_NOTHROW(validate_layout(l, a.schema));
    CHECK(l.size() >= spec.min_elements);
    CHECK(l.size() <= spec.max_elements);
  }
  spec.seed = 8;
  CHECK(to_jsonl(synth_corpus(spec).layouts, a.schema) != to_jsonl(a.layouts, a.schema));
}

TEST_CASE("perturbation") {
  SyntheticCorpusSpec spec;
  spec.count = 200;
  const auto corpus = synth_corpus(spec);

  PerturbConfig zero;
  zero.noise = 0.0;
  const auto p0 = perturb(corpus.layouts[0], zero, 1);
  CHECK(p0.flags.count() == 0);
  CHECK(to_jsonl(std::vector<Layout>{p0.layout}, corpus.schema) ==
        to_jsonl(std::vector<Layout>{corpus.layouts[0]}, corpus.schema));

  PerturbConfig cfg;
  cfg.noise = 0.5;
  std::vector<Layout> noisy;
  for (std::size_t i = 0; i < corpus.layouts.size(); ++i) {
    const auto p = perturb(corpus.layouts[i], cfg, i);
    const auto again = perturb(corpus.layouts[i], cfg, i);
    CHECK(to_jsonl(std::vector<Layout>{p.layout}, corpus.schema) ==
          to_jsonl(std::vector<Layout>{again.layout}, corpus.schema));
    // Flags mark exactly the attributes whose value changed.
    for (std::size_t e = 0; e < p.layout.elements.size(); ++e) {
      for (int k = 0; k < 4; ++k) {
        const bool changed = p.layout.elements[e].attr(k) != corpus.layouts[i].elements[e].attr(k);
        CHECK(p.flags.elements[e].flags[static_cast<std::size_t>(k)] == changed);
      }
      CHECK(p.layout.elements[e].category == corpus.layouts[i].elements[e].category);
    }
    noisy.push_back(p.layout);
  }
  CHECK(overlap(noisy, false).value > overlap(corpus.layouts, false).value);
}

TEST_CASE("split assignment is deterministic and roughly proportional") {
  int train = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto id = "screen-" + std::to_string(i);
    CHECK(split_of(id, 3) == split_of(id, 3));
    train += split_of(id, 3) == "train";
  }
  CHECK(train > 1600);
  CHECK(train < 1800);
}

TEST_CASE("hierarchy ingestion") {
  const auto dir = std::filesystem::temp_directory_path() / "layoutgen_test_hier";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto leaf = [](const char* label, int l, int t, int r, int b) {
    return json{{"componentLabel", label}, {"bounds", {l, t, r, b}}};
  };
  std::vector<std::filesystem::path> files;
  for (int s = 0; s < 30; ++s) {
    json root{{"bounds", {0, 0, 1440, 2560}},
              {"children", json::array({leaf("Text", 0, 0, 720, 256),
                                        json{{"class", "Layout"},
                                             {"bounds", {0, 256, 1440, 2560}},
                                             {"children", json::array({leaf("Image", 0, 256, 1440, 1280),
                                                                       leaf("Icon", 0, 1280, 144, 1424)})}}})}};
    json doc{{"activity", {{"root", root}}}};
    const auto f = dir / ("screen" + std::to_string(s) + ".json");
    write_text_file(f, doc.dump());
    files.push_back(f);
  }
  write_text_file(dir / "broken.json", "[1,2");
  files.push_back(dir / "broken.json");

  const auto h = ingest_hierarchy(files, std::nullopt, 11);
  CHECK(h.stats.skipped_malformed == 1);
  CHECK(h.schema.size() == 3);
  CHECK(h.train.layouts.size() + h.val.layouts.size() + h.test.layouts.size() == 30);
  const auto& l = (h.train.layouts.empty() ? h.test.layouts : h.train.layouts).front();
  REQUIRE(l.elements.size() == 3);
  CHECK(l.elements[0].w == doctest::Approx(0.5));
  CHECK(l.elements[0].h == doctest::Approx(0.1));

  const auto only_text = ingest_hierarchy(files, std::vector<std::string>{"Text"}, 11);
  CHECK(only_text.stats.dropped_unknown_category == 60);
  const auto again = ingest_hierarchy(files, std::nullopt, 11);
  CHECK(again.train.layouts.size() == h.train.layouts.size());
}

TEST_CASE("element count histogram") {
  SyntheticCorpusSpec spec;
  spec.count = 100;
  const auto h = element_count_histogram(synth_corpus(spec).layouts, 9);
  CHECK(h.size() == 10);
  int total = 0;
  for (int v : h) total += v;
  CHECK(total == 100);
  CHECK(h[0] == 0);
}
