// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "models/prelude.hpp"
#include "layoutgen/error.hpp"
#include "layoutgen/models/locator.hpp"
#include "layoutgen/models/locator_data.hpp"
#include "models/fixtures.hpp"

using namespace layoutgen;

namespace {

Detection det(Box b, double objectness, std::array<double, 4> probs) {
  Detection d;
  d.box = b;
  d.objectness = objectness;
  d.probs = probs;
  return d;
}

const std::vector<Box> kElements{{0.1, 0.1, 0.2, 0.2}, {0.5, 0.1, 0.3, 0.2}, {0.1, 0.6, 0.8, 0.3}};

LocatorConfig small_locator(const std::string& kind) {
  LocatorConfig c;
  c.kind = kind;
  c.depth = 10;
  c.width = 4;
  c.image_size = 64;
  c.proposals = 8;
  c.head_width = 32;
  c.batch = 4;
  c.steps = 2;
  c.warmup = 1;
  c.tagger_dim = 32;
  c.tagger_layers = 1;
  c.tagger_heads = 2;
  return c;
}

std::vector<LocatorRecord> records(int count) {
  const auto corpus = testing::small_corpus(count);
  PerturbConfig pc;
  pc.noise = 0.3;
  std::vector<LocatorRecord> out;
  for (int i = 0; i < count; ++i) {
    auto p = perturb(corpus.layouts[static_cast<std::size_t>(i)], pc, static_cast<std::uint64_t>(i));
    out.push_back({p.layout, p.flags, corpus.layouts[static_cast<std::size_t>(i)].source_id, 1});
  }
  return out;
}

}  // namespace

TEST_CASE("associate examples") {
  const auto none = associate({}, kElements, 0.3);
  REQUIRE(none.flags.size() == 3);
  CHECK(none.flags.count() == 0);

  const auto one = associate({det(kElements[2], 0.9, {0.9, 0.1, 0.1, 0.1})}, kElements, 0.3);
  CHECK(one.flags.elements[0].count() == 0);
  CHECK(one.flags.elements[1].count() == 0);
  CHECK(one.flags.elements[2].flags == std::array<bool, 4>{true, false, false, false});

  const auto two = associate({det(kElements[2], 0.9, {0.9, 0.1, 0.1, 0.1}), det(kElements[2], 0.8, {0.1, 0.9, 0.1, 0.1})},
                             kElements, 0.3);
  CHECK(two.flags.elements[2].flags == std::array<bool, 4>{true, true, false, false});
  CHECK(two.flags.elements[0].count() == 0);
  CHECK(two.probs[2][0] == 0.9);
  CHECK(two.probs[2][1] == 0.9);
}

TEST_CASE("associate ignores low-IoU detections and takes free elements first") {
  // Far from everything.
  const auto miss = associate({det({0.9, 0.9, 0.05, 0.05}, 0.9, {1, 1, 1, 1})}, kElements, 0.3);
  CHECK(miss.flags.count() == 0);
  // Two identical elements: the second detection claims the unclaimed copy.
  const std::vector<Box> twins{{0.1, 0.1, 0.2, 0.2}, {0.1, 0.1, 0.2, 0.2}};
  const auto v = associate({det(twins[0], 0.9, {1, 0, 0, 0}), det(twins[0], 0.8, {0, 0, 0, 1})}, twins, 0.3);
  CHECK(v.flags.elements[0].flags == std::array<bool, 4>{true, false, false, false});
  CHECK(v.flags.elements[1].flags == std::array<bool, 4>{false, false, false, true});
}

TEST_CASE("associate output does not depend on input order for fixed objectness") {
  std::vector<Detection> d{det({0.12, 0.1, 0.2, 0.2}, 0.9, {1, 0, 0, 0}), det({0.5, 0.12, 0.3, 0.2}, 0.7, {0, 1, 0, 0}),
                           det({0.1, 0.6, 0.7, 0.3}, 0.8, {0, 0, 1, 1})};
  const auto a = associate(d, kElements, 0.3);
  std::reverse(d.begin(), d.end());
  const auto b = associate(d, kElements, 0.3);
  CHECK(a.flags == b.flags);
  CHECK(associate(d, kElements, 0.3).flags == b.flags);
}

TEST_CASE("nms keeps the best of overlapping boxes") {
  const std::vector<Box> boxes{{0, 0, 0.5, 0.5}, {0.01, 0, 0.5, 0.5}, {0.6, 0.6, 0.3, 0.3}};
  CHECK(nms(boxes, {0.5, 0.9, 0.7}, 0.5) == std::vector<int>{1, 2});
  CHECK(nms(boxes, {0.5, 0.9, 0.7}, 0.999).size() == 3);
}

TEST_CASE("flag scores") {
  MaskAnnotation truth, none, perfect;
  truth.elements.resize(2);
  truth.elements[0].flags = {true, false, true, false};
  none.elements.resize(2);
  const auto zero = score_flags({none}, {truth});
  CHECK(zero.recall == 0.0);
  CHECK(zero.false_negative == 2);
  const auto full = score_flags({truth}, {truth});
  CHECK(full.precision == 1.0);
  CHECK(full.recall == 1.0);
  CHECK(full.f1 == 1.0);
  MaskAnnotation half = truth;
  half.elements[1].flags = {true, true, false, false};
  const auto h = score_flags({half}, {truth});
  CHECK(h.precision == doctest::Approx(0.5));
  CHECK(h.recall == 1.0);
  CHECK(h.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("pixel locator checks resolution and detects deterministically") {
  const auto schema = document_schema();
  auto cfg = small_locator("pixel");
  cfg.score_threshold = 0.0;
  torch::manual_seed(2);
  Locator loc(cfg, schema);
  const auto recs = records(2);
  const auto image = render(recs[0].layout, schema.size(), loc.render_options()).image;
  const auto a = loc.detect(image);
  const auto b = loc.detect(image);
  REQUIRE(a.size() == b.size());
  CHECK_FALSE(a.empty());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].box == b[i].box);
    CHECK(a[i].probs == b[i].probs);
    CHECK(a[i].box.x >= 0.0);
    CHECK(a[i].box.x + a[i].box.w <= 1.0 + 1e-6);
    for (double p : a[i].probs) CHECK((p >= 0.0 && p <= 1.0));
  }
  const auto wrong = render(recs[0].layout, schema.size(), {}).image;
  try {
    loc.detect(wrong);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

TEST_CASE("locator training rejects empty data and runs for both kinds") {
  const auto schema = document_schema();
  for (const char* kind : {"pixel", "object"}) {
    Locator loc(small_locator(kind), schema);
    try {
      train_locator(loc, {}, 1);
      FAIL("expected a data error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Data);
    }
    const auto recs = records(6);
    const auto report = train_locator(loc, recs, 1);
    CHECK(report.losses.size() == 2);
    for (double l : report.losses) CHECK(std::isfinite(l));
    const auto verdicts = loc.locate({recs[0].layout, recs[1].layout});
    REQUIRE(verdicts.size() == 2);
    CHECK(verdicts[0].flags.size() == recs[0].layout.size());
  }
}

TEST_CASE("object tagger learns a trivial labeling") {
  // Every x flag set, nothing else: the tagger only has to learn the slot.
  const auto schema = document_schema();
  auto cfg = small_locator("object");
  cfg.steps = 120;
  cfg.batch = 16;
  cfg.lr = 3e-3;
  cfg.warmup = 10;
  auto recs = records(32);
  for (auto& r : recs) {
    for (auto& e : r.mask.elements) e.flags = {true, false, false, false};
  }
  torch::manual_seed(3);
  Locator loc(cfg, schema);
  train_locator(loc, recs, 3);
  const auto s = evaluate_locator(loc, recs, 8);
  CHECK(s.f1 > 0.95);
}

TEST_CASE("locator checkpoint round trip") {
  const auto schema = document_schema();
  const auto recs = records(3);
  for (const char* kind : {"pixel", "object"}) {
    torch::manual_seed(7);
    Locator loc(small_locator(kind), schema);
    const auto path = std::filesystem::temp_directory_path() / (std::string("layoutgen_test_loc_") + kind + ".pt");
    save_locator(path, loc);
    auto back = load_locator(path, &schema);
    CHECK(back->config().kind == kind);
    CHECK(nn::parameter_digest(back->module()) == nn::parameter_digest(loc.module()));
    const auto a = loc.locate({recs[0].layout});
    const auto b = back->locate({recs[0].layout});
    CHECK(a[0].flags == b[0].flags);
    CHECK((a[0].probs == b[0].probs));
    std::filesystem::remove(path);
  }
}

TEST_CASE("locator dataset persistence round trip") {
  const auto schema = document_schema();
  LocatorDataset ds;
  ds.records = records(4);
  ds.coverage.conditions = 5;
  ds.coverage.dropped_retrieval_miss = 1;
  const auto dir = std::filesystem::temp_directory_path() / "layoutgen_test_locdata";
  std::filesystem::remove_all(dir);
  RenderOptions ro;
  ro.height = ro.width = 32;
  save_locator_dataset(dir, ds, schema, ro);
  CHECK(std::filesystem::exists(dir / "record_00000.png"));
  CategorySchema loaded_schema;
  const auto back = load_locator_dataset(dir, &loaded_schema);
  CHECK(loaded_schema.fingerprint() == schema.fingerprint());
  REQUIRE(back.records.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back.records[i].mask == ds.records[i].mask);
    CHECK((back.records[i].layout.elements == ds.records[i].layout.elements));
    CHECK(back.records[i].source_id == ds.records[i].source_id);
  }
  CHECK(back.coverage.dropped_retrieval_miss == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("locator dataset from decoder snapshots") {
  const auto corpus = testing::small_corpus(12);
  const auto cfg = testing::tiny_decoder_config();
  torch::manual_seed(6);
  LayoutDecoder decoder(cfg, Vocabulary(corpus.schema, cfg.num_bins));
  decoder->eval();
  const CorpusIndex index(corpus.layouts);
  LocatorDataOptions opts;
  const auto ds = build_locator_dataset(decoder, element_count_histogram(corpus.layouts, 9), corpus.layouts, index, opts);
  CHECK(ds.coverage.conditions == 12);
  CHECK(ds.coverage.emitted + ds.coverage.dropped_retrieval_miss + ds.coverage.dropped_missing_snapshot == 36);
  CHECK(ds.coverage.emitted > 0);
  for (std::size_t i = 1; i < ds.records.size(); ++i) {
    const auto& a = ds.records[i - 1];
    const auto& b = ds.records[i];
    CHECK((a.source_id < b.source_id || (a.source_id == b.source_id && a.iteration < b.iteration)));
  }
  for (const auto& r : ds.records) {
    CHECK(r.mask.size() == r.layout.size());
    CHECK((r.iteration == 1 || r.iteration == 2 || r.iteration == 4));
  }
}
