// SPDX-License-Identifier: Apache-2.0
//
// Object-space vs pixel-space representation probe: both locator kinds learn to
// flag attributes of randomly perturbed layouts, whose labels are exact.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "layoutgen/config.hpp"
#include "layoutgen/models/locator.hpp"

namespace layoutgen {

struct ProbeConfig {
  std::vector<double> noises{0.1, 0.2, 0.5};
  double element_prob = 0.5;
  double attribute_prob = 0.5;
  int train_size = 4000;
  int test_size = 500;
  LocatorConfig pixel;
  LocatorConfig object;
  std::uint64_t seed = 0;

  static ProbeConfig from(const Config& cfg);
};

struct ProbeRow {
  std::string space;  // pixel | object
  double noise = 0.0;
  FlagScores scores;
  double train_seconds = 0.0;
};

struct ProbeTable {
  std::vector<ProbeRow> rows;
  const ProbeRow* find(const std::string& space, double noise) const;
  nlohmann::ordered_json to_json() const;
};

/// The first train_size layouts train, the next test_size evaluate.
std::vector<LocatorRecord> probe_records(const std::vector<Layout>& layouts, double noise, const ProbeConfig& cfg,
                                         std::uint64_t seed);

ProbeTable run_probe(const ProbeConfig& cfg, const std::vector<Layout>& corpus, const CategorySchema& schema,
                     const std::function<void(const ProbeRow&)>& on_row = {});

}  // namespace layoutgen
