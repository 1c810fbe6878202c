// SPDX-License-Identifier: Apache-2.0
#include "models/prelude.hpp"
#include "layoutgen/error.hpp"
#include "layoutgen/models/features.hpp"
#include "models/fixtures.hpp"

using namespace layoutgen;

namespace {

FeatureConfig small_features(FeatureSpace space) {
  FeatureConfig c;
  c.space = space;
  c.feature_dim = 16;
  c.steps = 3;
  c.batch = 8;
  c.image_size = 32;
  return c;
}

}  // namespace

TEST_CASE("fid of a set against itself is zero in both spaces") {
  const auto corpus = testing::small_corpus(64);
  for (auto space : {FeatureSpace::Seq, FeatureSpace::Pixel}) {
    torch::manual_seed(1);
    FeatureModel model(small_features(space), corpus.schema);
    train_feature_extractor(model, corpus.layouts, 1);
    CHECK(fid(model, corpus.layouts, corpus.layouts) <= 1e-4);
    CHECK(model.embed(corpus.layouts).cols() == 16);
  }
}

TEST_CASE("fid refuses statistics from different feature models") {
  const auto corpus = testing::small_corpus(20);
  torch::manual_seed(1);
  FeatureModel a(small_features(FeatureSpace::Seq), corpus.schema);
  torch::manual_seed(2);
  FeatureModel b(small_features(FeatureSpace::Seq), corpus.schema);
  const auto sa = feature_stats(a, corpus.layouts);
  const auto sb = feature_stats(b, corpus.layouts);
  CHECK(sa.model_hash != sb.model_hash);
  try {
    fid(sa, sb);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
  // Fewer layouts than feature dimensions.
  const std::vector<Layout> few(corpus.layouts.begin(), corpus.layouts.begin() + 10);
  bool warn = false;
  fid(a, few, few, &warn);
  CHECK(warn);
}

TEST_CASE("feature model checkpoint keeps its hash") {
  const auto corpus = testing::small_corpus(20);
  torch::manual_seed(3);
  FeatureModel model(small_features(FeatureSpace::Pixel), corpus.schema);
  const auto path = std::filesystem::temp_directory_path() / "layoutgen_test_features.pt";
  save_feature_model(path, model);
  auto back = load_feature_model(path, &corpus.schema);
  CHECK(back.hash() == model.hash());
  CHECK(fid(feature_stats(back, corpus.layouts), feature_stats(model, corpus.layouts)) <= 1e-6);
  std::filesystem::remove(path);
}
