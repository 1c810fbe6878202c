// SPDX-License-Identifier: Apache-2.0
//
// Locator training data: intermediate decoder outputs, each matched against the
// closest real layout with the same categories and annotated per attribute.
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "layoutgen/matcher.hpp"
#include "layoutgen/models/decoder.hpp"
#include "layoutgen/models/locator.hpp"
#include "layoutgen/models/refinement.hpp"

namespace layoutgen {

struct LocatorDataOptions {
  std::vector<int> snapshot_iterations{1, 2, 4};
  int iterations = 10;
  GenerationMode mode = GenerationMode::CToSP;
  MatchCostParams params;
  int candidate_cap = 32;
  std::uint64_t seed = 0;
  int batch = 64;
};

struct CoverageReport {
  int conditions = 0;
  int emitted = 0;
  int dropped_retrieval_miss = 0;
  int dropped_missing_snapshot = 0;  // generation stopped before the iteration
  nlohmann::ordered_json to_json() const;
};

struct LocatorDataset {
  std::vector<LocatorRecord> records;  // sorted by source id, then iteration
  CoverageReport coverage;
};

/// Runs the decoder (least-confidence refinement) on the condition of every
/// layout in `conditions` and turns the chosen snapshots into records.
LocatorDataset build_locator_dataset(LayoutDecoder& decoder, const std::vector<int>& count_histogram,
                                     const std::vector<Layout>& conditions, const CorpusIndex& index,
                                     const LocatorDataOptions& options);

/// record_NNNNN.png + record_NNNNN.json per record, plus schema.json and coverage.json.
void save_locator_dataset(const std::filesystem::path& dir, const LocatorDataset& data, const CategorySchema& schema,
                          const RenderOptions& render_options);
/// Reads the JSON sidecars; images are re-rendered from the boxes when needed.
LocatorDataset load_locator_dataset(const std::filesystem::path& dir, CategorySchema* schema_out = nullptr);

}  // namespace layoutgen
