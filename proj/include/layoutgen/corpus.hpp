// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "layoutgen/layout.hpp"
#include "layoutgen/matcher.hpp"

namespace layoutgen {

/// text, title, list, table, figure
CategorySchema document_schema();
/// The 13 most frequent mobile-UI component labels used by prior layout work.
CategorySchema ui_schema();

struct FilterStats {
  int kept = 0;
  int dropped_too_many = 0;        // n > max_elements
  int dropped_unknown_category = 0;  // elements whose label is outside the schema
  int dropped_empty = 0;           // layouts left with no elements
  int skipped_missing_image = 0;   // annotations without an image record
  int skipped_malformed = 0;       // unreadable screens / degenerate boxes

  nlohmann::ordered_json to_json() const;
};

struct DatasetManifest {
  std::string split;
  std::vector<Layout> layouts;
  CategorySchema schema;
  FilterStats stats;
};

struct SyntheticCorpusSpec {
  std::uint64_t seed = 7;
  int count = 5000;
  int min_columns = 1;
  int max_columns = 2;
  double min_margin = 0.0625;
  double max_margin = 0.125;
  double gutter = 0.03125;
  double spacing = 0.03125;
  double jitter = 0.0;
  int min_elements = 3;
  int max_elements = kDefaultMaxElements;
  int max_figures = 3;
};

/// Column-grid document pages: one full-width title, 1..max_figures figures, the
/// rest text (with occasional list/table blocks), stacked top to bottom per column.
DatasetManifest synth_corpus(const SyntheticCorpusSpec& spec);
Layout synth_layout(const SyntheticCorpusSpec& spec, std::uint64_t index);

struct PerturbConfig {
  double noise = 0.1;
  double element_prob = 0.5;
  double attribute_prob = 0.5;
  int num_bins = kDefaultNumBins;  // sizes are floored at one bin width
};

struct PerturbedLayout {
  Layout layout;
  MaskAnnotation flags;
};

/// Each element is perturbed with probability element_prob: a non-empty random
/// attribute subset gets additive Uniform(-noise, noise), then clamped. A flag
/// is set iff the stored value actually changed.
PerturbedLayout perturb(const Layout& layout, const PerturbConfig& cfg, std::uint64_t seed);

/// Deterministic split by seeded hash of the source id: 0.85 / 0.05 / 0.10.
std::string split_of(const std::string& source_id, std::uint64_t seed);

/// COCO-style: images[] {id, width, height}, annotations[] {image_id, bbox, category_id},
/// categories[] {id, name}. Absolute-pixel top-left boxes are normalized by the image size.
DatasetManifest ingest_coco_style(const nlohmann::json& coco, const CategorySchema& schema,
                                  const std::string& split_name, int max_elements = kDefaultMaxElements);
DatasetManifest ingest_coco_style_file(const std::filesystem::path& path, const CategorySchema& schema,
                                       const std::string& split_name, int max_elements = kDefaultMaxElements);

struct HierarchyIngest {
  CategorySchema schema;
  DatasetManifest train, val, test;
  FilterStats stats;
};

/// Per-screen view hierarchies: nodes with "bounds" [l,t,r,b], a label in
/// "componentLabel" (or "class"), optional "children". Leaves are flattened.
/// Without explicit categories the 13 most frequent leaf labels form the schema.
HierarchyIngest ingest_hierarchy(const std::vector<std::filesystem::path>& files,
                                 const std::optional<std::vector<std::string>>& explicit_categories,
                                 std::uint64_t split_seed, int max_elements = kDefaultMaxElements,
                                 int num_categories = 13);

/// Histogram of element counts (index n holds the number of layouts with n elements).
std::vector<int> element_count_histogram(const std::vector<Layout>& layouts, int max_elements);

}  // namespace layoutgen
