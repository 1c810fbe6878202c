// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/models/probe.hpp"

#include <cmath>

#include "layoutgen/corpus.hpp"
#include "layoutgen/error.hpp"
#include "layoutgen/rng.hpp"

namespace layoutgen {

ProbeConfig ProbeConfig::from(const Config& cfg) {
  ProbeConfig p;
  p.noises = cfg.get_double_list("probe.noises");
  p.element_prob = cfg.get_double("probe.element_prob");
  p.attribute_prob = cfg.get_double("probe.attribute_prob");
  p.train_size = cfg.get_int("probe.train_size");
  p.test_size = cfg.get_int("probe.test_size");
  Config pixel = cfg, object = cfg;
  pixel.set("locator.kind", "pixel");
  object.set("locator.kind", "object");
  p.pixel = LocatorConfig::from(pixel);
  p.object = LocatorConfig::from(object);
  // Schedules are probe-specific whatever the locator profile says.
  p.pixel.steps = cfg.get_int("probe.pixel_steps");
  p.object.steps = cfg.get_int("probe.object_steps");
  p.object.lr = cfg.get_double("probe.object_lr");
  p.pixel.validate();
  p.object.validate();
  require(!p.noises.empty() && p.train_size > 0 && p.test_size > 0, ErrorKind::Config, "empty probe configuration");
  return p;
}

const ProbeRow* ProbeTable::find(const std::string& space, double noise) const {
  for (const auto& r : rows) {
    if (r.space == space && std::abs(r.noise - noise) < 1e-12) return &r;
  }
  return nullptr;
}

nlohmann::ordered_json ProbeTable::to_json() const {
  auto out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["space"] = r.space;
    j["noise"] = r.noise;
    j["precision"] = r.scores.precision;
    j["recall"] = r.scores.recall;
    j["f1"] = r.scores.f1;
    j["train_seconds"] = r.train_seconds;
    out.push_back(j);
  }
  return out;
}

std::vector<LocatorRecord> probe_records(const std::vector<Layout>& layouts, double noise, const ProbeConfig& cfg,
                                         std::uint64_t seed) {
  PerturbConfig pc;
  pc.noise = noise;
  pc.element_prob = cfg.element_prob;
  pc.attribute_prob = cfg.attribute_prob;
  pc.num_bins = cfg.pixel.num_bins;
  std::vector<LocatorRecord> out;
  out.reserve(layouts.size());
  for (std::size_t i = 0; i < layouts.size(); ++i) {
    auto p = perturb(layouts[i], pc, splitmix64(seed ^ (i + 1)));
    LocatorRecord r;
    r.layout = std::move(p.layout);
    r.mask = std::move(p.flags);
    r.source_id = layouts[i].source_id;
    out.push_back(std::move(r));
  }
  return out;
}

ProbeTable run_probe(const ProbeConfig& cfg, const std::vector<Layout>& corpus, const CategorySchema& schema,
                     const std::function<void(const ProbeRow&)>& on_row) {
  require(static_cast<int>(corpus.size()) >= cfg.train_size + cfg.test_size, ErrorKind::Data,
          "probe needs " + std::to_string(cfg.train_size + cfg.test_size) + " layouts, corpus has " +
              std::to_string(corpus.size()));
  const std::vector<Layout> train_src(corpus.begin(), corpus.begin() + cfg.train_size);
  const std::vector<Layout> test_src(corpus.begin() + cfg.train_size,
                                     corpus.begin() + cfg.train_size + cfg.test_size);
  ProbeTable table;
  for (std::size_t ni = 0; ni < cfg.noises.size(); ++ni) {
    const double noise = cfg.noises[ni];
    const auto train = probe_records(train_src, noise, cfg, splitmix64(cfg.seed ^ (0x100 + ni)));
    const auto test = probe_records(test_src, noise, cfg, splitmix64(cfg.seed ^ (0x200 + ni)));
    for (const auto* lc : {&cfg.pixel, &cfg.object}) {
      torch::manual_seed(cfg.seed);
      Locator locator(*lc, schema);
      const auto report = train_locator(locator, train, cfg.seed);
      ProbeRow row;
      row.space = lc->kind;
      row.noise = noise;
      row.scores = evaluate_locator(locator, test);
      row.train_seconds = report.seconds;
      if (on_row) on_row(row);
      table.rows.push_back(row);
    }
  }
  return table;
}

}  // namespace layoutgen
