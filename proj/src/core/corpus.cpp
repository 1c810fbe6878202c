// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "layoutgen/error.hpp"
#include "layoutgen/layout_io.hpp"
#include "layoutgen/rng.hpp"

namespace layoutgen {

CategorySchema document_schema() {
  return CategorySchema({"text", "title", "list", "table", "figure"}, 792.0 / 612.0);
}

CategorySchema ui_schema() {
  return CategorySchema({"Toolbar", "Image", "Text", "Icon", "Text Button", "Input", "List Item",
                         "Advertisement", "Pager Indicator", "Web View", "Background Image", "Drawer", "Modal"},
                        2560.0 / 1440.0);
}

nlohmann::ordered_json FilterStats::to_json() const {
  nlohmann::ordered_json j;
  j["kept"] = kept;
  j["dropped_too_many"] = dropped_too_many;
  j["dropped_unknown_category"] = dropped_unknown_category;
  j["dropped_empty"] = dropped_empty;
  j["skipped_missing_image"] = skipped_missing_image;
  j["skipped_malformed"] = skipped_malformed;
  return j;
}

// ---------------------------------------------------------------------------
// Synthetic pages

namespace {

constexpr int kText = 0, kTitle = 1, kList = 2, kTable = 3, kFigure = 4;

template <std::size_t N>
double pick(Rng& rng, const double (&choices)[N]) {
  return choices[rng.below(N)];
}

}  // namespace

Layout synth_layout(const SyntheticCorpusSpec& spec, std::uint64_t index) {
  Rng rng(splitmix64(spec.seed) ^ splitmix64(index + 0x51ed));
  static constexpr double kTitleH[] = {0.03125, 0.046875, 0.0625};
  static constexpr double kTextH[] = {0.0625, 0.09375, 0.125, 0.15625, 0.1875};
  static constexpr double kFigureH[] = {0.15625, 0.1875, 0.25, 0.3125};

  const double margin = std::round(rng.uniform(spec.min_margin, spec.max_margin) * 64.0) / 64.0;
  const int columns = rng.range(spec.min_columns, spec.max_columns);
  const double col_w = (1.0 - 2.0 * margin - (columns - 1) * spec.gutter) / columns;
  const int target = rng.range(spec.min_elements, spec.max_elements);
  const int figures = rng.range(1, std::max(1, std::min(spec.max_figures, target - 2)));

  std::vector<int> blocks;
  for (int i = 0; i < figures; ++i) blocks.push_back(kFigure);
  for (int i = 0; i < target - 1 - figures; ++i) {
    const double u = rng.uniform();
    blocks.push_back(u < 0.12 ? kList : (u < 0.2 ? kTable : kText));
  }
  rng.shuffle(std::span<int>(blocks));

  Layout out;
  out.source_id = "synth-" + std::to_string(spec.seed) + "-" + std::to_string(index);
  out.canvas = {612.0, 792.0};
  const double title_h = pick(rng, kTitleH);
  out.elements.push_back({kTitle, margin, margin, 1.0 - 2.0 * margin, title_h});
  const double content_top = margin + title_h + spec.spacing;
  const double bottom = 1.0 - margin;

  int col = 0;
  double y = content_top;
  for (int kind : blocks) {
    const double h = (kind == kFigure || kind == kTable) ? pick(rng, kFigureH) : pick(rng, kTextH);
    if (y + h > bottom) {
      if (++col >= columns) break;
      y = content_top;
      if (y + h > bottom) break;
    }
    const double x = margin + col * (col_w + spec.gutter);
    out.elements.push_back({kind, x, y, col_w, h});
    y += h + spec.spacing;
  }

  if (spec.jitter > 0.0) {
    for (auto& e : out.elements) {
      for (int k = 0; k < 4; ++k) {
        const double lo = k >= 2 ? 1.0 / 128.0 : 0.0;
        e.attr(k) = std::clamp(e.attr(k) + rng.uniform(-spec.jitter, spec.jitter), lo, 1.0);
      }
    }
  }
  return out;
}

DatasetManifest synth_corpus(const SyntheticCorpusSpec& spec) {
  require(spec.count >= 0, ErrorKind::Config, "synthetic count must be non-negative");
  require(spec.min_columns >= 1 && spec.max_columns >= spec.min_columns, ErrorKind::Config, "bad column range");
  require(spec.min_elements >= 2 && spec.max_elements >= spec.min_elements, ErrorKind::Config,
          "bad element-count range");
  DatasetManifest m;
  m.split = "synthetic";
  m.schema = document_schema();
  m.layouts.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) m.layouts.push_back(synth_layout(spec, static_cast<std::uint64_t>(i)));
  m.stats.kept = spec.count;
  return m;
}

// ---------------------------------------------------------------------------
// Perturbation

PerturbedLayout perturb(const Layout& layout, const PerturbConfig& cfg, std::uint64_t seed) {
  require(cfg.noise >= 0.0, ErrorKind::Config, "noise range must be non-negative");
  Rng rng(seed);
  PerturbedLayout out{layout, {}};
  out.flags.elements.resize(layout.elements.size());
  const double min_size = 1.0 / cfg.num_bins;
  for (std::size_t i = 0; i < layout.elements.size(); ++i) {
    if (!rng.bernoulli(cfg.element_prob)) continue;
    std::array<bool, 4> chosen{};
    do {
      for (auto& c : chosen) c = rng.bernoulli(cfg.attribute_prob);
    } while (!(chosen[0] || chosen[1] || chosen[2] || chosen[3]));
    Element& e = out.layout.elements[i];
    for (int k = 0; k < 4; ++k) {
      if (!chosen[static_cast<std::size_t>(k)]) continue;
      const double before = e.attr(k);
      const double lo = k >= 2 ? min_size : 0.0;
      e.attr(k) = std::clamp(before + rng.uniform(-cfg.noise, cfg.noise), lo, 1.0);
      out.flags.elements[i].flags[static_cast<std::size_t>(k)] = e.attr(k) != before;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ingestion

std::string split_of(const std::string& source_id, std::uint64_t seed) {
  const double u = static_cast<double>(splitmix64(fnv1a64(source_id) ^ splitmix64(seed)) >> 11) * 0x1.0p-53;
  if (u < 0.85) return "train";
  if (u < 0.90) return "val";
  return "test";
}

namespace {

// Clamp an absolute box to its canvas and normalize; nullopt for degenerate boxes.
std::optional<Element> normalized_element(int category, double x, double y, double w, double h, double cw,
                                          double ch) {
  if (!(cw > 0 && ch > 0) || !(w > 0 && h > 0)) return std::nullopt;
  const double x0 = std::clamp(x, 0.0, cw), y0 = std::clamp(y, 0.0, ch);
  const double x1 = std::clamp(x + w, 0.0, cw), y1 = std::clamp(y + h, 0.0, ch);
  if (x1 <= x0 || y1 <= y0) return std::nullopt;
  return Element{category, x0 / cw, y0 / ch, (x1 - x0) / cw, (y1 - y0) / ch};
}

}  // namespace

DatasetManifest ingest_coco_style(const nlohmann::json& coco, const CategorySchema& schema,
                                  const std::string& split_name, int max_elements) {
  DatasetManifest m;
  m.split = split_name;
  m.schema = schema;
  try {
    std::unordered_map<std::int64_t, std::optional<int>> category_map;
    if (coco.contains("categories")) {
      for (const auto& c : coco.at("categories")) {
        category_map[c.at("id").get<std::int64_t>()] = schema.find(c.at("name").get<std::string>());
      }
    }
    struct Image {
      double width, height;
      std::string name;
      std::vector<Element> elements;
      bool dropped_category = false;
    };
    std::map<std::int64_t, Image> images;
    if (coco.contains("images")) {
      for (const auto& im : coco.at("images")) {
        Image rec{im.at("width").get<double>(), im.at("height").get<double>(), {}, {}, false};
        const auto id = im.at("id").get<std::int64_t>();
        rec.name = im.contains("file_name") ? im.at("file_name").get<std::string>() : std::to_string(id);
        images.emplace(id, std::move(rec));
      }
    }
    if (coco.contains("annotations")) {
      for (const auto& a : coco.at("annotations")) {
        auto it = images.find(a.at("image_id").get<std::int64_t>());
        if (it == images.end()) {
          ++m.stats.skipped_missing_image;
          continue;
        }
        const auto cat_id = a.at("category_id").get<std::int64_t>();
        std::optional<int> cat;
        if (auto c = category_map.find(cat_id); c != category_map.end()) {
          cat = c->second;
        } else if (schema.contains(static_cast<int>(cat_id))) {
          cat = static_cast<int>(cat_id);
        }
        if (!cat) {
          ++m.stats.dropped_unknown_category;
          continue;
        }
        const auto& bbox = a.at("bbox");
        auto e = normalized_element(*cat, bbox.at(0).get<double>(), bbox.at(1).get<double>(),
                                    bbox.at(2).get<double>(), bbox.at(3).get<double>(), it->second.width,
                                    it->second.height);
        if (!e) {
          ++m.stats.skipped_malformed;
          continue;
        }
        it->second.elements.push_back(*e);
      }
    }
    for (auto& [id, im] : images) {
      if (im.elements.empty()) {
        ++m.stats.dropped_empty;
        continue;
      }
      if (static_cast<int>(im.elements.size()) > max_elements) {
        ++m.stats.dropped_too_many;
        continue;
      }
      Layout l;
      l.source_id = im.name;
      l.canvas = {im.width, im.height};
      l.elements = std::move(im.elements);
      m.layouts.push_back(std::move(l));
    }
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorKind::Data, std::string("malformed COCO-style annotation file: ") + ex.what());
  }
  std::sort(m.layouts.begin(), m.layouts.end(),
            [](const Layout& a, const Layout& b) { return a.source_id < b.source_id; });
  m.stats.kept = static_cast<int>(m.layouts.size());
  return m;
}

DatasetManifest ingest_coco_style_file(const std::filesystem::path& path, const CategorySchema& schema,
                                       const std::string& split_name, int max_elements) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& ex) {
    fail(ErrorKind::Data, "cannot parse " + path.string() + ": " + ex.what());
  }
  return ingest_coco_style(j, schema, split_name, max_elements);
}

namespace {

struct RawLeaf {
  std::string label;
  double l, t, r, b;
};

struct RawScreen {
  std::string id;
  double width = 0, height = 0;
  std::vector<RawLeaf> leaves;
};

std::string node_label(const nlohmann::json& node) {
  if (node.contains("componentLabel")) return node.at("componentLabel").get<std::string>();
  if (node.contains("class")) return node.at("class").get<std::string>();
  return {};
}

void collect_leaves(const nlohmann::json& node, std::vector<RawLeaf>& out) {
  const bool has_children = node.contains("children") && node.at("children").is_array() &&
                            std::any_of(node.at("children").begin(), node.at("children").end(),
                                        [](const nlohmann::json& c) { return c.is_object(); });
  if (has_children) {
    for (const auto& c : node.at("children")) {
      if (c.is_object()) collect_leaves(c, out);
    }
    return;
  }
  const auto& b = node.at("bounds");
  out.push_back({node_label(node), b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                 b.at(3).get<double>()});
}

}  // namespace

HierarchyIngest ingest_hierarchy(const std::vector<std::filesystem::path>& files,
                                 const std::optional<std::vector<std::string>>& explicit_categories,
                                 std::uint64_t split_seed, int max_elements, int num_categories) {
  HierarchyIngest out;
  std::vector<RawScreen> screens;
  for (const auto& f : files) {
    try {
      const auto j = nlohmann::json::parse(read_text_file(f));
      const nlohmann::json& root =
          j.contains("activity") ? j.at("activity").at("root") : (j.contains("root") ? j.at("root") : j);
      const auto& rb = root.at("bounds");
      RawScreen s;
      s.id = f.stem().string();
      s.width = rb.at(2).get<double>() - rb.at(0).get<double>();
      s.height = rb.at(3).get<double>() - rb.at(1).get<double>();
      if (!(s.width > 0 && s.height > 0)) throw std::runtime_error("degenerate root bounds");
      collect_leaves(root, s.leaves);
      // Leaf bounds are absolute; shift to the root origin.
      for (auto& leaf : s.leaves) {
        leaf.l -= rb.at(0).get<double>();
        leaf.r -= rb.at(0).get<double>();
        leaf.t -= rb.at(1).get<double>();
        leaf.b -= rb.at(1).get<double>();
      }
      screens.push_back(std::move(s));
    } catch (const std::exception&) {
      ++out.stats.skipped_malformed;
    }
  }

  if (explicit_categories) {
    out.schema = CategorySchema(*explicit_categories, 2560.0 / 1440.0);
  } else {
    std::map<std::string, int> freq;
    for (const auto& s : screens) {
      for (const auto& leaf : s.leaves) {
        if (!leaf.label.empty()) ++freq[leaf.label];
      }
    }
    std::vector<std::pair<std::string, int>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> names;
    for (std::size_t i = 0; i < ranked.size() && static_cast<int>(i) < num_categories; ++i) {
      names.push_back(ranked[i].first);
    }
    require(!names.empty(), ErrorKind::Data, "no labelled leaves found in the hierarchy files");
    out.schema = CategorySchema(names, 2560.0 / 1440.0);
  }

  for (auto* m : {&out.train, &out.val, &out.test}) m->schema = out.schema;
  out.train.split = "train";
  out.val.split = "val";
  out.test.split = "test";

  for (const auto& s : screens) {
    Layout l;
    l.source_id = s.id;
    l.canvas = {s.width, s.height};
    for (const auto& leaf : s.leaves) {
      auto cat = out.schema.find(leaf.label);
      if (!cat) {
        ++out.stats.dropped_unknown_category;
        continue;
      }
      auto e = normalized_element(*cat, leaf.l, leaf.t, leaf.r - leaf.l, leaf.b - leaf.t, s.width, s.height);
      if (!e) {
        ++out.stats.skipped_malformed;
        continue;
      }
      l.elements.push_back(*e);
    }
    if (l.elements.empty()) {
      ++out.stats.dropped_empty;
      continue;
    }
    if (l.size() > max_elements) {
      ++out.stats.dropped_too_many;
      continue;
    }
    const std::string split = split_of(l.source_id, split_seed);
    (split == "train" ? out.train : split == "val" ? out.val : out.test).layouts.push_back(std::move(l));
  }
  for (auto* m : {&out.train, &out.val, &out.test}) {
    std::sort(m->layouts.begin(), m->layouts.end(),
              [](const Layout& a, const Layout& b) { return a.source_id < b.source_id; });
    m->stats.kept = static_cast<int>(m->layouts.size());
  }
  out.stats.kept = out.train.stats.kept + out.val.stats.kept + out.test.stats.kept;
  return out;
}

std::vector<int> element_count_histogram(const std::vector<Layout>& layouts, int max_elements) {
  std::vector<int> hist(static_cast<std::size_t>(max_elements) + 1, 0);
  for (const auto& l : layouts) {
    if (l.size() >= 1 && l.size() <= max_elements) ++hist[static_cast<std::size_t>(l.size())];
  }
  return hist;
}

}  // namespace layoutgen
