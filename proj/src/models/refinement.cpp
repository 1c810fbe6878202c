// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/models/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "layoutgen/error.hpp"
#include "layoutgen/layout_io.hpp"
#include "layoutgen/render.hpp"

namespace layoutgen {

GenerationMode parse_generation_mode(std::string_view name) {
  if (name == "uncond") return GenerationMode::Uncond;
  if (name == "c2sp") return GenerationMode::CToSP;
  if (name == "cs2p") return GenerationMode::CSToP;
  fail(ErrorKind::Config, "unknown generation mode '" + std::string(name) + "' (uncond, c2sp, cs2p)");
}

MaskPolicy parse_mask_policy(std::string_view name) {
  if (name == "locator") return MaskPolicy::Locator;
  if (name == "conf") return MaskPolicy::LeastConf;
  if (name == "conf-grouped") return MaskPolicy::LeastConfGrouped;
  fail(ErrorKind::Config, "unknown masking policy '" + std::string(name) + "' (locator, conf, conf-grouped)");
}

std::string_view to_string(GenerationMode mode) {
  switch (mode) {
    case GenerationMode::Uncond: return "uncond";
    case GenerationMode::CToSP: return "c2sp";
    case GenerationMode::CSToP: return "cs2p";
  }
  return "?";
}

std::string_view to_string(MaskPolicy policy) {
  switch (policy) {
    case MaskPolicy::Locator: return "locator";
    case MaskPolicy::LeastConf: return "conf";
    case MaskPolicy::LeastConfGrouped: return "conf-grouped";
  }
  return "?";
}

void GenerationTask::validate(int max_elements) const {
  require(iterations >= 1, ErrorKind::Config, "generation needs at least one iteration");
  if (mode == GenerationMode::Uncond) return;
  require(!categories.empty(), ErrorKind::Config, "conditional generation needs categories");
  require(static_cast<int>(categories.size()) <= max_elements, ErrorKind::Capacity,
          "condition has " + std::to_string(categories.size()) + " elements, max is " + std::to_string(max_elements));
  if (mode == GenerationMode::CSToP) {
    require(sizes.size() == categories.size(), ErrorKind::Config, "CS_TO_P needs one size per category");
  }
}

GenerationTask GenerationTask::from_layout(const Layout& real, GenerationMode mode, MaskPolicy policy, int iterations,
                                           std::uint64_t seed) {
  GenerationTask t;
  t.mode = mode;
  t.policy = policy;
  t.iterations = iterations;
  t.seed = seed;
  if (mode == GenerationMode::Uncond) return t;
  for (const auto& e : real.elements) {
    t.categories.push_back(e.category);
    if (mode == GenerationMode::CSToP) t.sizes.push_back({e.w, e.h});
  }
  return t;
}

TokenSequence init_sequence(const GenerationTask& task, const Vocabulary& vocab, int max_elements,
                            const std::vector<int>& count_histogram, ElementOrder order) {
  task.validate(max_elements);
  Layout skeleton;
  if (task.mode == GenerationMode::Uncond) {
    long total = 0;
    for (int n = 1; n < static_cast<int>(count_histogram.size()) && n <= max_elements; ++n) total += count_histogram[static_cast<std::size_t>(n)];
    require(total > 0, ErrorKind::Data, "element-count histogram is empty");
    Rng rng(task.seed);
    long pick = static_cast<long>(rng.below(static_cast<std::uint64_t>(total)));
    int n = 1;
    for (; n < static_cast<int>(count_histogram.size()); ++n) {
      pick -= count_histogram[static_cast<std::size_t>(n)];
      if (pick < 0) break;
    }
    skeleton.elements.assign(static_cast<std::size_t>(n), Element{0, 0, 0, 0, 0});
  } else {
    for (std::size_t i = 0; i < task.categories.size(); ++i) {
      Element e{task.categories[i], 0, 0, 0, 0};
      if (task.mode == GenerationMode::CSToP) {
        e.w = task.sizes[i][0];
        e.h = task.sizes[i][1];
      }
      skeleton.elements.push_back(e);
    }
    if (order == ElementOrder::Category) {
      std::stable_sort(skeleton.elements.begin(), skeleton.elements.end(),
                       [](const Element& a, const Element& b) { return a.category < b.category; });
    }
  }
  auto seq = encode(skeleton, vocab, max_elements, {ElementOrder::AsIs, 0});
  for (int p = 0; p < seq.size(); ++p) {
    const auto k = seq.kinds[static_cast<std::size_t>(p)];
    if (k == SlotKind::Special) continue;
    const bool known = (task.mode == GenerationMode::CToSP && k == SlotKind::Category) ||
                       (task.mode == GenerationMode::CSToP && (k == SlotKind::Category || is_size(k)));
    if (known) {
      seq.conditioned[static_cast<std::size_t>(p)] = 1;
    } else {
      seq.mask(p);
    }
  }
  return seq;
}

int remask_count(int maskable, int t, int iterations) {
  if (t >= iterations) return 0;
  return static_cast<int>(std::ceil(static_cast<double>(maskable) * (iterations - t) / iterations));
}

namespace {

enum class Group { Category, Size, Position };

Group group_of(SlotKind k) {
  if (k == SlotKind::Category) return Group::Category;
  return is_size(k) ? Group::Size : Group::Position;
}

std::vector<int> maskable_positions(const TokenSequence& seq) {
  std::vector<int> out;
  for (int p = 0; p < seq.size(); ++p) {
    if (seq.kinds[static_cast<std::size_t>(p)] != SlotKind::Special && !seq.conditioned[static_cast<std::size_t>(p)]) {
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace

std::vector<int> heuristic_mask_select(const TokenSequence& seq, const std::vector<double>& confidence, int t,
                                       int iterations, MaskPolicy policy) {
  require(confidence.size() == seq.ids.size(), ErrorKind::Precondition, "one confidence per position expected");
  const auto pool_all = maskable_positions(seq);
  int count = remask_count(static_cast<int>(pool_all.size()), t, iterations);
  if (count == 0) return {};
  std::vector<int> pool = pool_all;
  if (policy == MaskPolicy::LeastConfGrouped) {
    std::vector<Group> active;
    for (Group g : {Group::Category, Group::Size, Group::Position}) {
      if (std::any_of(pool_all.begin(), pool_all.end(),
                      [&](int p) { return group_of(seq.kinds[static_cast<std::size_t>(p)]) == g; })) {
        active.push_back(g);
      }
    }
    const int g_count = static_cast<int>(active.size());
    const int phase = std::min(g_count - 1, t * g_count / iterations);
    const Group g = active[static_cast<std::size_t>(phase)];
    pool.clear();
    for (int p : pool_all) {
      if (group_of(seq.kinds[static_cast<std::size_t>(p)]) == g) pool.push_back(p);
    }
    count = std::min<int>(count, static_cast<int>(pool.size()));
  } else {
    require(policy == MaskPolicy::LeastConf, ErrorKind::Precondition, "heuristic selection needs a confidence policy");
  }
  std::stable_sort(pool.begin(), pool.end(), [&](int a, int b) {
    return confidence[static_cast<std::size_t>(a)] < confidence[static_cast<std::size_t>(b)];
  });
  pool.resize(static_cast<std::size_t>(count));
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<int> locator_mask_select(const TokenSequence& seq, const LocatorVerdict& verdict,
                                     const RefinementOptions& options) {
  require(verdict.flags.size() == seq.n, ErrorKind::Precondition, "locator verdict does not cover every element");
  constexpr std::array<SlotKind, 4> kSlots{SlotKind::X, SlotKind::Y, SlotKind::W, SlotKind::H};
  std::vector<std::pair<double, int>> flagged;
  for (int e = 0; e < seq.n; ++e) {
    for (int k = 0; k < 4; ++k) {
      if (!verdict.flags.elements[static_cast<std::size_t>(e)].flags[static_cast<std::size_t>(k)]) continue;
      const int p = position_of(e, kSlots[static_cast<std::size_t>(k)]);
      if (seq.conditioned[static_cast<std::size_t>(p)]) continue;
      const double prob = verdict.probs.empty() ? 1.0 : verdict.probs[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)];
      flagged.emplace_back(prob, p);
    }
  }
  const auto maskable = static_cast<double>(maskable_positions(seq).size());
  if (static_cast<double>(flagged.size()) > options.flood_fraction * maskable) {
    std::stable_sort(flagged.begin(), flagged.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    flagged.resize(static_cast<std::size_t>(std::max(1.0, std::floor(options.flood_keep * maskable))));
  }
  std::vector<int> out;
  for (const auto& f : flagged) out.push_back(f.second);
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

Layout decode_or_invariant(const TokenSequence& seq, const Vocabulary& vocab) {
  try {
    return decode(seq, vocab);
  } catch (const Error& e) {
    fail(ErrorKind::Invariant, std::string("refinement produced an undecodable sequence: ") + e.what());
  }
}

struct TaskState {
  TokenSequence seq;
  std::vector<double> confidence;
  WireframeImage wireframe;
  GenerationResult result;
  bool done = false;
};

void run_chunk(const std::vector<GenerationTask>& tasks, std::size_t begin, std::size_t end, LayoutDecoder& decoder,
               const std::vector<int>& hist, ErrorLocator* locator, const RefinementOptions& options,
               std::vector<GenerationResult>& out) {
  const auto& cfg = decoder->config();
  const auto& vocab = decoder->vocab();
  const auto ropts = decoder_render_options(cfg);
  std::vector<TaskState> states;
  int max_t = 0;
  for (std::size_t i = begin; i < end; ++i) {
    const auto& task = tasks[i];
    if (task.policy == MaskPolicy::Locator) {
      require(locator != nullptr, ErrorKind::Config, "the locator policy needs a locator checkpoint");
    }
    TaskState s;
    s.seq = init_sequence(task, vocab, cfg.max_elements, hist, cfg.order);
    s.confidence.assign(static_cast<std::size_t>(s.seq.size()), 0.0);
    s.wireframe = render(s.seq, vocab, ropts).image;
    states.push_back(std::move(s));
    max_t = std::max(max_t, task.iterations);
  }

  for (int t = 1; t <= max_t; ++t) {
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < states.size(); ++j) {
      if (!states[j].done) active.push_back(j);
    }
    if (active.empty()) break;
    std::vector<TokenSequence> seqs;
    std::vector<WireframeImage> images;
    for (auto j : active) {
      seqs.push_back(states[j].seq);
      images.push_back(states[j].wireframe);
    }
    auto preds = predict_masked(decoder, seqs, &images);

    std::vector<std::size_t> need_locator;
    for (std::size_t a = 0; a < active.size(); ++a) {
      auto& s = states[active[a]];
      auto& pred = preds[a];
      for (int p : pred.replaced) s.confidence[static_cast<std::size_t>(p)] = pred.confidence[static_cast<std::size_t>(p)];
      IterationSnapshot snap;
      snap.iteration = t;
      snap.sequence = pred.filled;
      snap.layout = decode_or_invariant(pred.filled, vocab);
      snap.predicted = pred.replaced;
      snap.wireframe_hash = s.wireframe.hash();
      s.result.trace.iterations.push_back(std::move(snap));
      s.seq = std::move(pred.filled);
      const auto& task = tasks[begin + active[a]];
      if (t >= task.iterations) {
        s.done = true;
      } else if (task.policy == MaskPolicy::Locator) {
        need_locator.push_back(active[a]);
      } else {
        auto sel = heuristic_mask_select(s.seq, s.confidence, t, task.iterations, task.policy);
        s.result.trace.iterations.back().selected = sel;
      }
    }
    if (!need_locator.empty()) {
      std::vector<Layout> layouts;
      for (auto j : need_locator) layouts.push_back(states[j].result.trace.iterations.back().layout);
      const auto verdicts = locator->locate(layouts);
      require(verdicts.size() == layouts.size(), ErrorKind::Invariant, "locator returned the wrong number of verdicts");
      for (std::size_t v = 0; v < need_locator.size(); ++v) {
        auto& s = states[need_locator[v]];
        s.result.trace.iterations.back().selected = locator_mask_select(s.seq, verdicts[v], options);
      }
    }
    for (auto j : active) {
      auto& s = states[j];
      if (s.done) continue;
      const auto& sel = s.result.trace.iterations.back().selected;
      if (sel.empty()) {
        s.done = true;
        continue;
      }
      // The next wireframe shows the complete hypothesis before re-masking.
      s.wireframe = render(s.seq, vocab, ropts).image;
      for (int p : sel) s.seq.mask(p);
    }
  }
  for (std::size_t j = 0; j < states.size(); ++j) {
    auto& s = states[j];
    s.result.layout = s.result.trace.iterations.back().layout;
    out[begin + j] = std::move(s.result);
  }
}

}  // namespace

std::vector<GenerationResult> generate_batch(const std::vector<GenerationTask>& tasks, LayoutDecoder& decoder,
                                             const std::vector<int>& count_histogram, ErrorLocator* locator,
                                             const RefinementOptions& options) {
  std::vector<GenerationResult> out(tasks.size());
  const auto chunk = static_cast<std::size_t>(std::max(1, options.batch));
  for (std::size_t b = 0; b < tasks.size(); b += chunk) {
    run_chunk(tasks, b, std::min(tasks.size(), b + chunk), decoder, count_histogram, locator, options, out);
  }
  return out;
}

GenerationResult generate(const GenerationTask& task, LayoutDecoder& decoder, const std::vector<int>& count_histogram,
                          ErrorLocator* locator, const RefinementOptions& options) {
  return generate_batch({task}, decoder, count_histogram, locator, options).front();
}

void write_trace(const std::filesystem::path& dir, const GenerationResult& result, const CategorySchema& schema,
                 const RenderOptions& opts) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["iterations"] = nlohmann::ordered_json::array();
  for (const auto& snap : result.trace.iterations) {
    char name[32];
    std::snprintf(name, sizeof name, "iter_%02d.png", snap.iteration);
    write_png(dir / name, render(snap.layout, schema.size(), opts).image);
    nlohmann::ordered_json it;
    it["iteration"] = snap.iteration;
    it["image"] = name;
    it["layout"] = layout_to_json(snap.layout, schema);
    it["predicted"] = snap.predicted;
    it["selected"] = snap.selected;
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(snap.wireframe_hash));
    it["wireframe_hash"] = hash;
    j["iterations"].push_back(it);
  }
  write_text_file(dir / "trace.json", j.dump(2) + "\n");
}

}  // namespace layoutgen
