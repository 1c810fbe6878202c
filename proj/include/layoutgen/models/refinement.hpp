// SPDX-License-Identifier: Apache-2.0
//
// Iterative mask-predict generation: decode, render, pick tokens to re-predict
// (learned locator or confidence heuristics), repeat.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "layoutgen/layout.hpp"
#include "layoutgen/matcher.hpp"
#include "layoutgen/models/decoder.hpp"

namespace layoutgen {

enum class GenerationMode { Uncond, CToSP, CSToP };
enum class MaskPolicy { Locator, LeastConf, LeastConfGrouped };

GenerationMode parse_generation_mode(std::string_view name);  // uncond | c2sp | cs2p
MaskPolicy parse_mask_policy(std::string_view name);          // locator | conf | conf-grouped
std::string_view to_string(GenerationMode mode);
std::string_view to_string(MaskPolicy policy);

struct GenerationTask {
  GenerationMode mode = GenerationMode::CToSP;
  std::vector<int> categories;
  std::vector<std::array<double, 2>> sizes;  // (w, h) per element, CS_TO_P only
  int iterations = 10;
  MaskPolicy policy = MaskPolicy::LeastConf;
  std::uint64_t seed = 0;

  void validate(int max_elements) const;
  /// Condition taken from a real layout (categories, plus sizes for CS_TO_P).
  static GenerationTask from_layout(const Layout& real, GenerationMode mode, MaskPolicy policy, int iterations,
                                    std::uint64_t seed);
};

/// Per-element attribute flags and the probabilities behind them.
struct LocatorVerdict {
  MaskAnnotation flags;
  std::vector<std::array<double, 4>> probs;
};

/// Anything that can point at erroneous geometry tokens of complete layouts.
class ErrorLocator {
 public:
  virtual ~ErrorLocator() = default;
  virtual std::vector<LocatorVerdict> locate(const std::vector<Layout>& layouts) = 0;
};

struct IterationSnapshot {
  int iteration = 0;
  TokenSequence sequence;     // after this iteration's prediction
  Layout layout;              // decoded sequence
  std::vector<int> predicted; // positions filled at this iteration
  std::vector<int> selected;  // positions re-masked for the next iteration
  std::uint64_t wireframe_hash = 0;  // decoder input image
};

struct IterationTrace {
  std::vector<IterationSnapshot> iterations;
};

struct GenerationResult {
  Layout layout;
  IterationTrace trace;
};

struct RefinementOptions {
  double flood_fraction = 0.8;  // locator flags above this share of maskable tokens ...
  double flood_keep = 0.5;      // ... are cut to this share, highest probability first
  int batch = 64;
};

/// Initial sequence: conditioned tokens filled and flagged, everything else MASK.
/// UNCOND draws n from the histogram (index = element count) with the task seed.
TokenSequence init_sequence(const GenerationTask& task, const Vocabulary& vocab, int max_elements,
                            const std::vector<int>& count_histogram, ElementOrder order = ElementOrder::AsIs);

/// Number of tokens the linear schedule re-masks after iteration t of T.
int remask_count(int maskable, int t, int iterations);

/// Lowest-confidence positions among the non-conditioned, non-special ones (ties
/// to the lower index). The grouped variant restricts the pool to the active
/// attribute group of iteration t + 1.
std::vector<int> heuristic_mask_select(const TokenSequence& seq, const std::vector<double>& confidence, int t,
                                       int iterations, MaskPolicy policy);

/// Geometry positions flagged by a locator verdict, minus conditioned ones, with
/// the flood fallback applied.
std::vector<int> locator_mask_select(const TokenSequence& seq, const LocatorVerdict& verdict,
                                     const RefinementOptions& options);

std::vector<GenerationResult> generate_batch(const std::vector<GenerationTask>& tasks, LayoutDecoder& decoder,
                                             const std::vector<int>& count_histogram, ErrorLocator* locator,
                                             const RefinementOptions& options = {});
GenerationResult generate(const GenerationTask& task, LayoutDecoder& decoder, const std::vector<int>& count_histogram,
                          ErrorLocator* locator, const RefinementOptions& options = {});

/// iter_XX.png wireframes plus trace.json with per-iteration layouts and masks.
void write_trace(const std::filesystem::path& dir, const GenerationResult& result, const CategorySchema& schema,
                 const RenderOptions& opts = {});

}  // namespace layoutgen
