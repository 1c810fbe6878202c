// SPDX-License-Identifier: Apache-2.0
//
// Error locators. The pixel-space locator is a two-stage detector over the
// wireframe: residual backbone, anchor-free proposals, RoI heads that refine the
// box, score objectness and emit four attribute-mask probabilities. The
// object-space locator is a bidirectional transformer tagger over tokens. Both
// produce the same per-element MaskAnnotation.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "layoutgen/config.hpp"
#include "layoutgen/layout.hpp"
#include "layoutgen/matcher.hpp"
#include "layoutgen/models/refinement.hpp"
#include "layoutgen/render.hpp"

namespace layoutgen {

struct LocatorConfig {
  std::string kind = "pixel";  // pixel | object
  int depth = 18;              // 10 | 18 | 34 | 50
  int width = 16;              // channels of the first residual stage
  int image_size = 224;
  int proposals = 48;
  int head_width = 256;
  double lr = 1e-4;
  int batch = 128;
  int steps = 1500;
  int warmup = 100;
  double beta1 = 0.9, beta2 = 0.98, weight_decay = 0.01;
  double tau = 0.3;
  double score_threshold = 0.5;
  double nms_iou = 0.5;
  int tagger_layers = 2, tagger_dim = 128, tagger_heads = 4;
  int max_elements = kDefaultMaxElements;
  int num_bins = kDefaultNumBins;

  void validate() const;
  static LocatorConfig from(const Config& cfg);
  nlohmann::ordered_json to_json() const;
  static LocatorConfig from_json(const nlohmann::json& j);
};

struct Detection {
  Box box;
  double objectness = 0.0;
  std::array<double, 4> probs{};  // p_x, p_y, p_w, p_h
};

/// One locator training example: a complete layout (rendered on demand) and its
/// ground-truth attribute flags.
struct LocatorRecord {
  Layout layout;
  MaskAnnotation mask;
  std::string source_id;
  int iteration = 0;
};

/// Greedy by descending objectness: a detection claims the unclaimed element of
/// highest IoU >= tau, or merges into the best already-claimed one. Claimed
/// elements OR their detections' thresholded flags and keep the max probability.
LocatorVerdict associate(const std::vector<Detection>& detections, const std::vector<Box>& elements, double tau);

/// Greedy non-maximum suppression; returns kept indices in descending score order.
std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores, double iou_threshold);

struct PixelLocatorImpl;
struct ObjectTaggerImpl;
TORCH_MODULE(PixelLocator);
TORCH_MODULE(ObjectTagger);

struct LocatorLosses {
  torch::Tensor total, rpn_objectness, rpn_box, head_objectness, head_box, attributes;
};

class Locator : public ErrorLocator {
 public:
  Locator(LocatorConfig config, CategorySchema schema);

  const LocatorConfig& config() const { return config_; }
  const CategorySchema& schema() const { return schema_; }
  torch::nn::Module& module();
  RenderOptions render_options() const;

  /// Pixel locators only. Images must be at config().image_size.
  std::vector<Detection> detect(const WireframeImage& image);
  std::vector<std::vector<Detection>> detect_batch(const std::vector<WireframeImage>& images);

  std::vector<LocatorVerdict> locate(const std::vector<Layout>& layouts) override;

  /// Training objective on a batch of records (module must be in train mode).
  LocatorLosses losses(const std::vector<const LocatorRecord*>& batch);

  void train_mode(bool on);

  double train_seconds = 0.0;

 private:
  LocatorConfig config_;
  CategorySchema schema_;
  Vocabulary vocab_;
  PixelLocator pixel_{nullptr};
  ObjectTagger tagger_{nullptr};
};

struct LocatorTrainReport {
  std::vector<double> losses;
  double seconds = 0.0;
};

LocatorTrainReport train_locator(Locator& locator, const std::vector<LocatorRecord>& data, std::uint64_t seed,
                                 const std::function<void(int, double)>& progress = {});

struct FlagScores {
  long true_positive = 0, false_positive = 0, false_negative = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  nlohmann::ordered_json to_json() const;
};

/// Micro-averaged over every (element, attribute) flag.
FlagScores score_flags(const std::vector<MaskAnnotation>& predicted, const std::vector<MaskAnnotation>& truth);
FlagScores evaluate_locator(Locator& locator, const std::vector<LocatorRecord>& data, int batch = 32);

void save_locator(const std::filesystem::path& path, Locator& locator);
std::unique_ptr<Locator> load_locator(const std::filesystem::path& path, const CategorySchema* expected = nullptr);

}  // namespace layoutgen
