// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/models/locator_data.hpp"

#include <algorithm>
#include <cstdio>

#include "layoutgen/error.hpp"
#include "layoutgen/layout_io.hpp"
#include "layoutgen/rng.hpp"

namespace layoutgen {

nlohmann::ordered_json CoverageReport::to_json() const {
  nlohmann::ordered_json j;
  j["conditions"] = conditions;
  j["emitted"] = emitted;
  j["dropped_retrieval_miss"] = dropped_retrieval_miss;
  j["dropped_missing_snapshot"] = dropped_missing_snapshot;
  return j;
}

LocatorDataset build_locator_dataset(LayoutDecoder& decoder, const std::vector<int>& count_histogram,
                                     const std::vector<Layout>& conditions, const CorpusIndex& index,
                                     const LocatorDataOptions& options) {
  for (int t : options.snapshot_iterations) {
    require(t >= 1 && t <= options.iterations, ErrorKind::Config,
            "snapshot iteration " + std::to_string(t) + " outside 1.." + std::to_string(options.iterations));
  }
  LocatorDataset out;
  out.coverage.conditions = static_cast<int>(conditions.size());
  RefinementOptions ropts;
  ropts.batch = options.batch;
  for (std::size_t begin = 0; begin < conditions.size(); begin += static_cast<std::size_t>(options.batch)) {
    const auto end = std::min(conditions.size(), begin + static_cast<std::size_t>(options.batch));
    std::vector<GenerationTask> tasks;
    for (std::size_t i = begin; i < end; ++i) {
      tasks.push_back(GenerationTask::from_layout(conditions[i], options.mode, MaskPolicy::LeastConf,
                                                  options.iterations, splitmix64(options.seed ^ (i + 1))));
    }
    const auto results = generate_batch(tasks, decoder, count_histogram, nullptr, ropts);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& trace = results[i - begin].trace;
      for (int t : options.snapshot_iterations) {
        const auto snap = std::find_if(trace.iterations.begin(), trace.iterations.end(),
                                       [t](const IterationSnapshot& s) { return s.iteration == t; });
        if (snap == trace.iterations.end()) {
          ++out.coverage.dropped_missing_snapshot;
          continue;
        }
        try {
          const auto seed = splitmix64(options.seed ^ (i * 131 + static_cast<std::size_t>(t)));
          const auto hit = retrieve_reference(snap->layout, index, options.params, options.candidate_cap, seed);
          LocatorRecord r;
          r.layout = snap->layout;
          r.mask = annotate_masks(snap->layout, index.corpus()[static_cast<std::size_t>(hit.corpus_index)], hit.match,
                                  options.params);
          r.source_id = conditions[i].source_id.empty() ? std::to_string(i) : conditions[i].source_id;
          r.layout.source_id = r.source_id;
          r.iteration = t;
          out.records.push_back(std::move(r));
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::RetrievalMiss) throw;
          ++out.coverage.dropped_retrieval_miss;
        }
      }
    }
  }
  std::stable_sort(out.records.begin(), out.records.end(), [](const LocatorRecord& a, const LocatorRecord& b) {
    return std::tie(a.source_id, a.iteration) < std::tie(b.source_id, b.iteration);
  });
  out.coverage.emitted = static_cast<int>(out.records.size());
  return out;
}

namespace {

std::string record_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "record_%05zu", i);
  return buf;
}

}  // namespace

void save_locator_dataset(const std::filesystem::path& dir, const LocatorDataset& data, const CategorySchema& schema,
                          const RenderOptions& render_options) {
  std::filesystem::create_directories(dir);
  save_schema(dir / "schema.json", schema);
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    nlohmann::ordered_json j;
    j["boxes"] = nlohmann::ordered_json::array();
    j["category"] = nlohmann::ordered_json::array();
    j["mask"] = nlohmann::ordered_json::array();
    for (int e = 0; e < r.layout.size(); ++e) {
      const auto& el = r.layout.elements[static_cast<std::size_t>(e)];
      j["boxes"].push_back({el.x, el.y, el.w, el.h});
      j["category"].push_back(el.category);
      const auto& f = r.mask.elements[static_cast<std::size_t>(e)].flags;
      j["mask"].push_back({f[0], f[1], f[2], f[3]});
    }
    j["source_id"] = r.source_id;
    j["iteration"] = r.iteration;
    const auto stem = record_stem(i);
    write_png(dir / (stem + ".png"), render(r.layout, schema.size(), render_options).image);
    write_text_file(dir / (stem + ".json"), j.dump() + "\n");
  }
  write_text_file(dir / "coverage.json", data.coverage.to_json().dump(2) + "\n");
}

LocatorDataset load_locator_dataset(const std::filesystem::path& dir, CategorySchema* schema_out) {
  require(std::filesystem::is_directory(dir), ErrorKind::Data, "locator dataset directory not found: " + dir.string());
  const auto schema = load_schema(dir / "schema.json");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("record_", 0) == 0 && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  LocatorDataset out;
  for (const auto& path : files) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(path));
      LocatorRecord r;
      const auto& boxes = j.at("boxes");
      const auto& cats = j.at("category");
      const auto& mask = j.at("mask");
      require(boxes.size() == cats.size() && boxes.size() == mask.size(), ErrorKind::Data,
              "inconsistent record arrays");
      for (std::size_t e = 0; e < boxes.size(); ++e) {
        Element el;
        el.category = cats[e].get<int>();
        el.x = boxes[e].at(0).get<double>();
        el.y = boxes[e].at(1).get<double>();
        el.w = boxes[e].at(2).get<double>();
        el.h = boxes[e].at(3).get<double>();
        r.layout.elements.push_back(el);
        AttributeFlags f;
        for (std::size_t k = 0; k < 4; ++k) f.flags[k] = mask[e].at(k).get<bool>();
        r.mask.elements.push_back(f);
      }
      r.source_id = j.at("source_id").get<std::string>();
      r.layout.source_id = r.source_id;
      r.iteration = j.at("iteration").get<int>();
      validate_layout(r.layout, schema);
      out.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Data, "bad locator record " + path.string() + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::Data, "bad locator record " + path.string() + ": " + e.what());
    }
  }
  if (std::filesystem::exists(dir / "coverage.json")) {
    const auto c = nlohmann::json::parse(read_text_file(dir / "coverage.json"));
    out.coverage.conditions = c.value("conditions", 0);
    out.coverage.dropped_retrieval_miss = c.value("dropped_retrieval_miss", 0);
    out.coverage.dropped_missing_snapshot = c.value("dropped_missing_snapshot", 0);
  }
  out.coverage.emitted = static_cast<int>(out.records.size());
  if (schema_out) *schema_out = schema;
  return out;
}

}  // namespace layoutgen
