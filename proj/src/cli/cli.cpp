// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "layoutgen/config.hpp"
#include "layoutgen/corpus.hpp"
#include "layoutgen/error.hpp"
#include "layoutgen/layout_io.hpp"
#include "layoutgen/metrics.hpp"
#include "layoutgen/models/decoder.hpp"
#include "layoutgen/models/features.hpp"
#include "layoutgen/models/locator.hpp"
#include "layoutgen/models/locator_data.hpp"
#include "layoutgen/models/probe.hpp"
#include "layoutgen/models/refinement.hpp"
#include "layoutgen/render.hpp"

namespace layoutgen {
namespace {

namespace fs = std::filesystem;

struct Globals {
  std::vector<std::string> config_files;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string data_dir;
  Config config;

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    if (path.is_absolute() || data_dir.empty()) return path;
    return fs::path(data_dir) / path;
  }
};

void log(const std::string& msg) { std::cerr << msg << std::endl; }

MatchCostParams match_params(const Config& cfg) {
  MatchCostParams p;
  p.alpha1 = cfg.get_double("matcher.alpha1");
  p.alpha2 = cfg.get_double("matcher.alpha2");
  p.alpha3 = cfg.get_double("matcher.alpha3");
  p.alpha4 = cfg.get_double("matcher.alpha4");
  p.delta = cfg.get_double("matcher.delta");
  p.validate();
  return p;
}

CategorySchema schema_by_name(const std::string& name, const Globals& g) {
  if (name == "document") return document_schema();
  if (name == "ui") return ui_schema();
  return load_schema(g.resolve(name));
}

void write_manifest(const fs::path& dir, const DatasetManifest& m) {
  write_jsonl(dir / (m.split + ".jsonl"), m.layouts, m.schema);
}

/// Loads schema.json and one split from a dataset directory.
std::vector<Layout> read_split(const fs::path& dir, const std::string& split, CategorySchema& schema) {
  schema = load_schema(dir / "schema.json");
  return read_jsonl(dir / (split + ".jsonl"), schema);
}

// Subcommands -------------------------------------------------------------------

struct IngestArgs {
  std::string format = "coco";
  std::vector<std::string> inputs;
  std::string schema = "document";
  std::string split = "train";
  std::string out;
  bool frequency_schema = false;
};

void run_ingest(const IngestArgs& a, Globals& g) {
  const fs::path out = g.resolve(a.out);
  fs::create_directories(out);
  const int max_elements = g.config.get_int("decoder.max_elements");
  nlohmann::ordered_json stats;
  if (a.format == "coco") {
    require(a.inputs.size() == 1, ErrorKind::Config, "coco ingestion takes exactly one annotation file");
    const auto schema = schema_by_name(a.schema, g);
    const auto m = ingest_coco_style_file(g.resolve(a.inputs[0]), schema, a.split, max_elements);
    save_schema(out / "schema.json", m.schema);
    write_manifest(out, m);
    stats[a.split] = m.stats.to_json();
  } else if (a.format == "hierarchy") {
    std::vector<fs::path> files;
    for (const auto& in : a.inputs) {
      const auto p = g.resolve(in);
      if (fs::is_directory(p)) {
        for (const auto& e : fs::recursive_directory_iterator(p)) {
          if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
        }
      } else {
        files.push_back(p);
      }
    }
    std::sort(files.begin(), files.end());
    std::optional<std::vector<std::string>> explicit_categories;
    if (!a.frequency_schema) explicit_categories = schema_by_name(a.schema == "document" ? "ui" : a.schema, g).names();
    const auto h = ingest_hierarchy(files, explicit_categories, g.seed, max_elements);
    save_schema(out / "schema.json", h.schema);
    write_manifest(out, h.train);
    write_manifest(out, h.val);
    write_manifest(out, h.test);
    stats["all"] = h.stats.to_json();
  } else {
    fail(ErrorKind::Config, "unknown ingest format '" + a.format + "' (coco|hierarchy)");
  }
  write_text_file(out / "stats.json", stats.dump(2) + "\n");
  std::cout << stats.dump(2) << std::endl;
}

void run_synth(const std::string& out_dir, std::optional<int> count, Globals& g) {
  SyntheticCorpusSpec spec;
  spec.count = count ? *count : g.config.get_int("synth.count");
  spec.jitter = g.config.get_double("synth.jitter");
  spec.min_columns = g.config.get_int("synth.min_columns");
  spec.max_columns = g.config.get_int("synth.max_columns");
  if (g.seed_given) spec.seed = g.seed;
  const auto m = synth_corpus(spec);
  const fs::path out = g.resolve(out_dir);
  fs::create_directories(out);
  save_schema(out / "schema.json", m.schema);
  std::map<std::string, std::vector<Layout>> splits{{"train", {}}, {"val", {}}, {"test", {}}};
  for (const auto& l : m.layouts) splits[split_of(l.source_id, spec.seed)].push_back(l);
  nlohmann::ordered_json summary;
  for (const auto& [name, layouts] : splits) {
    write_jsonl(out / (name + ".jsonl"), layouts, m.schema);
    summary[name] = layouts.size();
  }
  write_text_file(out / "stats.json", summary.dump(2) + "\n");
  std::cout << summary.dump() << std::endl;
}

void run_train_decoder(const std::string& data, const std::string& out, Globals& g) {
  CategorySchema schema;
  const auto corpus = read_split(g.resolve(data), "train", schema);
  require(!corpus.empty(), ErrorKind::Data, "training split is empty");
  const auto cfg = DecoderConfig::from(g.config);
  torch::manual_seed(g.seed);
  LayoutDecoder model(cfg, Vocabulary(schema, cfg.num_bins));
  const auto report = train_decoder(model, corpus, g.seed, [](int step, double loss) {
    if (step % 50 == 0) log("step " + std::to_string(step) + " loss " + std::to_string(loss));
  });
  DecoderBundle bundle{model, schema, element_count_histogram(corpus, cfg.max_elements), report.seconds,
                       g.config.hash("decoder.")};
  save_decoder(g.resolve(out), bundle);
  nlohmann::ordered_json j;
  j["final_loss"] = report.losses.empty() ? 0.0 : report.losses.back();
  j["train_seconds"] = report.seconds;
  std::cout << j.dump() << std::endl;
}

void run_build_locator_data(const std::string& decoder_path, const std::string& data, const std::string& out,
                            std::optional<int> limit, Globals& g) {
  CategorySchema schema;
  const auto corpus = read_split(g.resolve(data), "train", schema);
  auto bundle = load_decoder(g.resolve(decoder_path), &schema);
  std::vector<Layout> conditions = corpus;
  if (limit && *limit < static_cast<int>(conditions.size())) conditions.resize(static_cast<std::size_t>(*limit));
  LocatorDataOptions opts;
  opts.snapshot_iterations = g.config.get_int_list("matcher.iterations");
  opts.iterations = g.config.get_int("matcher.decoder_iters");
  opts.params = match_params(g.config);
  opts.candidate_cap = g.config.get_int("matcher.candidate_cap");
  opts.seed = g.seed;
  opts.batch = g.config.get_int("generate.batch");
  const CorpusIndex index(corpus);
  const auto ds = build_locator_dataset(bundle.model, bundle.count_histogram, conditions, index, opts);
  RenderOptions ro;
  ro.height = ro.width = LocatorConfig::from(g.config).image_size;
  save_locator_dataset(g.resolve(out), ds, schema, ro);
  std::cout << ds.coverage.to_json().dump() << std::endl;
}

void run_train_locator(const std::string& data, const std::string& out, Globals& g) {
  CategorySchema schema;
  const auto ds = load_locator_dataset(g.resolve(data), &schema);
  torch::manual_seed(g.seed);
  Locator locator(LocatorConfig::from(g.config), schema);
  const auto report = train_locator(locator, ds.records, g.seed, [](int step, double loss) {
    if (step % 25 == 0) log("step " + std::to_string(step) + " loss " + std::to_string(loss));
  });
  save_locator(g.resolve(out), locator);
  nlohmann::ordered_json j;
  j["final_loss"] = report.losses.empty() ? 0.0 : report.losses.back();
  j["train_seconds"] = report.seconds;
  std::cout << j.dump() << std::endl;
}

void run_eval_locator(const std::string& ckpt, const std::string& data, const std::string& out, Globals& g) {
  CategorySchema schema;
  const auto ds = load_locator_dataset(g.resolve(data), &schema);
  auto locator = load_locator(g.resolve(ckpt), &schema);
  const auto scores = evaluate_locator(*locator, ds.records);
  const auto text = scores.to_json().dump(2);
  if (!out.empty()) write_text_file(g.resolve(out), text + "\n");
  std::cout << text << std::endl;
}

struct GenerateArgs {
  std::string decoder, locator, conditions, out, trace_dir;
  std::string mode = "c2sp";
  std::string policy = "conf";
  std::optional<int> iters;
  int count = 0;
};

void run_generate(const GenerateArgs& a, Globals& g) {
  auto bundle = load_decoder(g.resolve(a.decoder));
  std::unique_ptr<Locator> locator;
  if (!a.locator.empty()) locator = load_locator(g.resolve(a.locator), &bundle.schema);
  const auto mode = parse_generation_mode(a.mode);
  const auto policy = parse_mask_policy(a.policy);
  require(policy != MaskPolicy::Locator || locator, ErrorKind::Config, "--policy locator needs --locator");
  const int iters = a.iters ? *a.iters : g.config.get_int("generate.iters");
  std::vector<GenerationTask> tasks;
  if (mode == GenerationMode::Uncond) {
    require(a.count > 0, ErrorKind::Config, "unconditional generation needs --count");
    for (int i = 0; i < a.count; ++i) {
      GenerationTask t;
      t.mode = mode;
      t.policy = policy;
      t.iterations = iters;
      t.seed = g.seed + static_cast<std::uint64_t>(i);
      tasks.push_back(t);
    }
  } else {
    require(!a.conditions.empty(), ErrorKind::Config, "conditional generation needs --conditions");
    auto conds = read_jsonl(g.resolve(a.conditions), bundle.schema);
    if (a.count > 0 && a.count < static_cast<int>(conds.size())) conds.resize(static_cast<std::size_t>(a.count));
    for (std::size_t i = 0; i < conds.size(); ++i) {
      tasks.push_back(GenerationTask::from_layout(conds[i], mode, policy, iters, g.seed + i));
    }
  }
  RefinementOptions ro;
  ro.batch = g.config.get_int("generate.batch");
  ro.flood_fraction = g.config.get_double("generate.flood_fraction");
  ro.flood_keep = g.config.get_double("generate.flood_keep");
  const auto results = generate_batch(tasks, bundle.model, bundle.count_histogram, locator.get(), ro);
  std::vector<Layout> layouts;
  for (std::size_t i = 0; i < results.size(); ++i) {
    layouts.push_back(results[i].layout);
    layouts.back().source_id = "gen-" + std::to_string(i);
    if (!a.trace_dir.empty()) {
      write_trace(g.resolve(a.trace_dir) / ("sample_" + std::to_string(i)), results[i], bundle.schema);
    }
  }
  const auto out = g.resolve(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_jsonl(out, layouts, bundle.schema);
  log("wrote " + std::to_string(layouts.size()) + " layouts to " + out.string());
}

FeatureModel feature_model_for(FeatureSpace space, const fs::path& dir, const std::vector<Layout>& real,
                               const CategorySchema& schema, Globals& g) {
  const auto path = dir / (std::string(to_string(space)) + ".pt");
  if (fs::exists(path)) return load_feature_model(path, &schema);
  log("training " + std::string(to_string(space)) + " feature extractor into " + path.string());
  FeatureModel model(FeatureConfig::from(g.config, space), schema);
  train_feature_extractor(model, real, g.seed);
  fs::create_directories(dir);
  save_feature_model(path, model);
  return model;
}

void run_evaluate(const std::string& gen_path, const std::string& real_path, const std::string& schema_path,
                  const std::string& features, const std::string& out, Globals& g) {
  const auto real_file = g.resolve(real_path);
  const auto schema = load_schema(schema_path.empty() ? real_file.parent_path() / "schema.json" : g.resolve(schema_path));
  const auto gen = read_jsonl(g.resolve(gen_path), schema);
  const auto real = read_jsonl(real_file, schema);
  require(!gen.empty() && !real.empty(), ErrorKind::Data, "evaluate needs non-empty generated and real sets");
  MetricsReport r;
  const auto ov = overlap(gen, false);
  r.overlap_all = ov.value;
  r.skipped_zero_area = ov.skipped_zero_area;
  r.overlap_same_category = overlap(gen, true).value;
  r.alignment = alignment(gen);
  r.max_iou = max_iou(gen, real);
  r.num_generated = static_cast<int>(gen.size());
  r.num_real = static_cast<int>(real.size());
  if (!features.empty()) {
    for (auto space : {FeatureSpace::Seq, FeatureSpace::Pixel}) {
      auto model = feature_model_for(space, g.resolve(features), real, schema, g);
      bool warn = false;
      const double v = fid(model, gen, real, &warn);
      (space == FeatureSpace::Seq ? r.seq_fid : r.pixel_fid) = v;
      r.fid_low_sample_warning = r.fid_low_sample_warning || warn;
    }
  }
  r.config_hash = g.config.hash();
  const auto text = r.to_json().dump(2);
  if (!out.empty()) write_text_file(g.resolve(out), text + "\n");
  std::cout << text << std::endl;
}

void run_probe_cmd(const std::string& data, const std::string& out, Globals& g) {
  const auto dir = g.resolve(data);
  const auto schema = load_schema(dir / "schema.json");
  std::vector<Layout> corpus;
  for (const char* split : {"train", "val", "test"}) {
    if (!fs::exists(dir / (std::string(split) + ".jsonl"))) continue;
    auto part = read_jsonl(dir / (std::string(split) + ".jsonl"), schema);
    corpus.insert(corpus.end(), part.begin(), part.end());
  }
  auto cfg = ProbeConfig::from(g.config);
  cfg.seed = g.seed;
  const auto table = run_probe(cfg, corpus, schema, [](const ProbeRow& r) {
    log(r.space + " noise " + std::to_string(r.noise) + " F1 " + std::to_string(r.scores.f1));
  });
  const auto text = table.to_json().dump(2);
  if (!out.empty()) write_text_file(g.resolve(out), text + "\n");
  std::cout << text << std::endl;
}

void run_render(const std::string& layouts_path, const std::string& schema_path, int index, int size,
                const std::string& out, Globals& g) {
  const auto file = g.resolve(layouts_path);
  const auto schema = load_schema(schema_path.empty() ? file.parent_path() / "schema.json" : g.resolve(schema_path));
  const auto layouts = read_jsonl(file, schema);
  require(index >= 0 && index < static_cast<int>(layouts.size()), ErrorKind::Data,
          "layout index " + std::to_string(index) + " out of range (" + std::to_string(layouts.size()) + ")");
  RenderOptions o;
  o.height = o.width = size;
  const auto dst = g.resolve(out);
  if (dst.extension() == ".svg") {
    write_text_file(dst, to_svg(layouts[static_cast<std::size_t>(index)], schema.size(), o));
  } else {
    write_png(dst, render(layouts[static_cast<std::size_t>(index)], schema.size(), o).image);
  }
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
      return 1;
    case ErrorKind::Invariant:
    case ErrorKind::IncompleteSequence:
    case ErrorKind::MalformedSequence:
      return 3;
    default:
      return 2;
  }
}

}  // namespace

int cli_dispatch(int argc, char** argv) {
  CLI::App app{"Non-autoregressive layout generation with locator-guided refinement", "layoutgen"};
  app.require_subcommand(1);
  Globals g;
  if (const char* env = std::getenv("LAYOUT_DATA_DIR")) g.data_dir = env;
  app.add_option("--config", g.config_files, "key=value config file(s), later files win")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "extra key=value overrides applied after the config files");
  auto* seed_opt = app.add_option("--seed", g.seed, "seed for training, sampling and splits");
  app.add_option("--data-dir", g.data_dir, "base directory for relative paths (default: $LAYOUT_DATA_DIR)");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "ingest a COCO-style file or UI view hierarchies");
  c_ingest->add_option("--format", ingest.format, "coco | hierarchy")->capture_default_str();
  c_ingest->add_option("--input", ingest.inputs, "annotation file, or hierarchy files/directories")->required();
  c_ingest->add_option("--schema", ingest.schema, "document | ui | path to schema.json")->capture_default_str();
  c_ingest->add_option("--split", ingest.split, "split name for coco input")->capture_default_str();
  c_ingest->add_flag("--frequency-schema", ingest.frequency_schema, "hierarchy: pick the 13 most frequent labels");
  c_ingest->add_option("--out", ingest.out, "output dataset directory")->required();

  std::string synth_out;
  std::optional<int> synth_count;
  auto* c_synth = app.add_subcommand("synth", "generate the synthetic column-grid corpus");
  c_synth->add_option("--out", synth_out, "output dataset directory")->required();
  c_synth->add_option("--count", synth_count, "number of layouts (default synth.count)");

  std::string data, out, ckpt, decoder_path, schema_path, features;
  std::optional<int> limit;
  auto* c_train_dec = app.add_subcommand("train-decoder", "train the masked layout decoder");
  c_train_dec->add_option("--data", data, "dataset directory with schema.json and train.jsonl")->required();
  c_train_dec->add_option("--out", out, "checkpoint path")->required();

  auto* c_build = app.add_subcommand("build-locator-data", "collect annotated decoder outputs for the locator");
  c_build->add_option("--decoder", decoder_path, "decoder checkpoint")->required();
  c_build->add_option("--data", data, "dataset directory (train split is used)")->required();
  c_build->add_option("--out", out, "output record directory")->required();
  c_build->add_option("--limit", limit, "use only the first N training layouts as conditions");

  auto* c_train_loc = app.add_subcommand("train-locator", "train the error locator");
  c_train_loc->add_option("--data", data, "locator record directory")->required();
  c_train_loc->add_option("--out", out, "checkpoint path")->required();

  auto* c_eval_loc = app.add_subcommand("eval-locator", "precision/recall/F1 of locator flags");
  c_eval_loc->add_option("--ckpt", ckpt, "locator checkpoint")->required();
  c_eval_loc->add_option("--data", data, "locator record directory")->required();
  c_eval_loc->add_option("--out", out, "optional JSON output path");

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "generate layouts with iterative refinement");
  c_gen->add_option("--decoder", gen.decoder, "decoder checkpoint")->required();
  c_gen->add_option("--locator", gen.locator, "locator checkpoint (for --policy locator)");
  c_gen->add_option("--mode", gen.mode, "uncond | c2sp | cs2p")->capture_default_str();
  c_gen->add_option("--policy", gen.policy, "locator | conf | conf-grouped")->capture_default_str();
  c_gen->add_option("--iters", gen.iters, "refinement iterations (default generate.iters)");
  c_gen->add_option("--conditions", gen.conditions, "jsonl of layouts providing the conditions");
  c_gen->add_option("--n,--count", gen.count, "number of layouts (uncond) or cap on conditions");
  c_gen->add_option("--trace,--trace-dir", gen.trace_dir, "write per-iteration wireframes and trace.json here");
  c_gen->add_option("--out", gen.out, "output jsonl")->required();

  std::string gen_path, real_path;
  auto* c_eval = app.add_subcommand("evaluate", "layout metrics and FID of a generated set");
  c_eval->add_option("--gen", gen_path, "generated jsonl")->required();
  c_eval->add_option("--real", real_path, "real jsonl")->required();
  c_eval->add_option("--schema", schema_path, "schema.json (default: next to --real)");
  c_eval->add_option("--features", features, "feature model directory; trained on --real if empty");
  c_eval->add_option("--out", out, "report path");

  auto* c_probe = app.add_subcommand("probe", "object-space vs pixel-space flagging probe");
  c_probe->add_option("--data", data, "dataset directory")->required();
  c_probe->add_option("--out", out, "JSON table path");

  std::string layouts_path;
  int index = 0, size = 224;
  auto* c_render = app.add_subcommand("render", "render one layout as a wireframe PNG or SVG");
  c_render->add_option("--layouts", layouts_path, "jsonl file")->required();
  c_render->add_option("--schema", schema_path, "schema.json (default: next to --layouts)");
  c_render->add_option("--index", index, "layout index")->capture_default_str();
  c_render->add_option("--size", size, "image size in pixels")->capture_default_str();
  c_render->add_option("--out", out, "output .png or .svg")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    torch::set_num_threads(1);
    for (const auto& f : g.config_files) g.config.load_file(f);
    for (const auto& kv : g.overrides) g.config.parse(kv, "--set");
    if (*c_ingest) run_ingest(ingest, g);
    else if (*c_synth) run_synth(synth_out, synth_count, g);
    else if (*c_train_dec) run_train_decoder(data, out, g);
    else if (*c_build) run_build_locator_data(decoder_path, data, out, limit, g);
    else if (*c_train_loc) run_train_locator(data, out, g);
    else if (*c_eval_loc) run_eval_locator(ckpt, data, out, g);
    else if (*c_gen) run_generate(gen, g);
    else if (*c_eval) run_evaluate(gen_path, real_path, schema_path, features, out, g);
    else if (*c_probe) run_probe_cmd(data, out, g);
    else if (*c_render) run_render(layouts_path, schema_path, index, size, out, g);
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return exit_code(e.kind());
  } catch (const c10::Error& e) {
    std::cerr << "error: " << e.what_without_backtrace() << std::endl;
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
}

}  // namespace layoutgen
