// SPDX-License-Identifier: Apache-2.0
//
// Feature networks for FID. Each is a real-vs-perturbed classifier, with an
// auxiliary head reconstructing the input geometry, whose penultimate
// activations serve as layout features, over tokens (SEQ) or over wireframes
// (PIXEL).
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "layoutgen/config.hpp"
#include "layoutgen/layout.hpp"
#include "layoutgen/metrics.hpp"

namespace layoutgen {

enum class FeatureSpace { Seq, Pixel };
FeatureSpace parse_feature_space(std::string_view name);  // seq | pixel
std::string_view to_string(FeatureSpace space);

struct FeatureConfig {
  FeatureSpace space = FeatureSpace::Seq;
  int feature_dim = 256;
  int steps = 600;
  int batch = 64;
  double lr = 1e-3;
  double noise = 0.2;
  int image_size = 64;
  double recon_weight = 1.0;  // auxiliary geometry reconstruction loss
  int max_elements = kDefaultMaxElements;
  int num_bins = kDefaultNumBins;

  void validate() const;
  static FeatureConfig from(const Config& cfg, FeatureSpace space);
  nlohmann::ordered_json to_json() const;
  static FeatureConfig from_json(const nlohmann::json& j);
};

class FeatureModel {
 public:
  FeatureModel(FeatureConfig config, CategorySchema schema);
  ~FeatureModel();
  FeatureModel(FeatureModel&&) noexcept;
  FeatureModel& operator=(FeatureModel&&) noexcept;

  const FeatureConfig& config() const { return config_; }
  const CategorySchema& schema() const { return schema_; }
  torch::nn::Module& module();

  /// Rows are layouts, columns feature_dim features (eval mode, batched).
  Eigen::MatrixXd embed(const std::vector<Layout>& layouts);
  /// Real-vs-perturbed logits, for training and diagnostics.
  torch::Tensor logits(const std::vector<Layout>& layouts);

  /// Digest of the configuration and every weight.
  std::string hash();

  struct Net;
  Net& net() { return *net_; }

 private:
  FeatureConfig config_;
  CategorySchema schema_;
  std::unique_ptr<Net> net_;
  std::string hash_;
};

struct FeatureTrainReport {
  std::vector<double> losses;
  double final_accuracy = 0.0;  // on the last batch
  double seconds = 0.0;
};

FeatureTrainReport train_feature_extractor(FeatureModel& model, const std::vector<Layout>& real, std::uint64_t seed);

/// Gaussian fit of a layout set, tagged with the feature model that produced it.
struct FeatureStats {
  Gaussian gaussian;
  int samples = 0;
  std::string model_hash;
};

FeatureStats feature_stats(FeatureModel& model, const std::vector<Layout>& layouts);
/// Throws Config if the two sides come from different feature models.
double fid(const FeatureStats& generated, const FeatureStats& real);
double fid(FeatureModel& model, const std::vector<Layout>& generated, const std::vector<Layout>& real,
           bool* low_sample_warning = nullptr);

void save_feature_model(const std::filesystem::path& path, FeatureModel& model);
FeatureModel load_feature_model(const std::filesystem::path& path, const CategorySchema* expected = nullptr);

}  // namespace layoutgen
