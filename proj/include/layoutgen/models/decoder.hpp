// SPDX-License-Identifier: Apache-2.0
//
// Non-autoregressive layout decoder: bidirectional transformer over the token
// sequence that cross-attends to a wireframe feature grid and predicts every
// masked token in one pass.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "layoutgen/config.hpp"
#include "layoutgen/layout.hpp"
#include "layoutgen/models/nn.hpp"
#include "layoutgen/render.hpp"
#include "layoutgen/rng.hpp"

namespace layoutgen {

struct DecoderConfig {
  std::string profile = "desk";  // desk | full | custom
  int num_layers = 2;
  int num_heads = 4;
  int model_dim = 128;
  int ff_mult = 4;
  double dropout = 0.0;
  int max_elements = kDefaultMaxElements;
  int num_bins = kDefaultNumBins;
  int image_size = 224;
  std::vector<int> image_channels{8, 16, 32, 64};
  bool use_wireframe = true;
  int warmup = 4000;
  double lr = 5e-5;
  int batch = 128;
  int steps = 2000;
  double beta1 = 0.9, beta2 = 0.98, weight_decay = 0.01;
  double geometry_only_prob = 0.5;
  ElementOrder order = ElementOrder::Category;

  int key_dim() const { return model_dim / num_heads; }
  int max_length() const { return sequence_length(max_elements); }
  void validate() const;

  /// Reads decoder.* keys. The desk and full profiles pin the architecture
  /// (and, for desk, the optimizer schedule); "custom" takes every key as given.
  static DecoderConfig from(const Config& cfg);
  nlohmann::ordered_json to_json() const;
  static DecoderConfig from_json(const nlohmann::json& j);
};

/// Input batch in tensor form.
struct DecoderBatch {
  torch::Tensor tokens;   // [B,L] int64, MASK at masked positions
  torch::Tensor counts;   // [B] int64, element count n
  torch::Tensor padding;  // [B,L] bool, true past EOS
  torch::Tensor images;   // [B,3,H,W] or undefined
};

class LayoutDecoderImpl : public torch::nn::Module {
 public:
  LayoutDecoderImpl(DecoderConfig config, Vocabulary vocab);

  /// PE(i) = g1(i) + g2(element index) + g3(n) for positions [0, length) of a
  /// sequence with n elements. BOS/EOS/padding use the sentinel element row.
  torch::Tensor positional(int64_t length, const torch::Tensor& counts) const;

  /// Slot-restricted logits [B,L,V]: tokens a position may not emit are -inf.
  torch::Tensor forward(const DecoderBatch& batch);

  /// Cross-attention weights of every layer from the last forward call ([B,H,L,P] each).
  std::vector<torch::Tensor> cross_attention_weights() const;
  void keep_attention(bool on);

  const DecoderConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }

  torch::nn::Embedding token_emb{nullptr}, pos_emb{nullptr}, element_emb{nullptr}, count_emb{nullptr};
  torch::nn::ModuleList blocks{nullptr};
  nn::ImageEncoder image_encoder{nullptr};
  torch::nn::LayerNorm final_norm{nullptr};
  torch::nn::Linear head{nullptr};

 private:
  DecoderConfig config_;
  Vocabulary vocab_;
  torch::Tensor slot_valid_;  // [Lmax, V] bool
};
TORCH_MODULE(LayoutDecoder);

/// Tensorizes sequences (padded to the longest) with optional wireframes.
DecoderBatch make_batch(const std::vector<TokenSequence>& seqs, const std::vector<WireframeImage>* images);

/// Masks a fresh training sample in place: ratio r ~ U(0,1], ceil(r*|maskable|)
/// positions; with probability geometry_only_prob only geometry slots are maskable.
void sample_training_mask(TokenSequence& seq, Rng& rng, double geometry_only_prob);

/// Mean negative log-likelihood over the masked positions of the batch.
torch::Tensor masked_loss(const torch::Tensor& logits, const torch::Tensor& targets, const torch::Tensor& mask);

struct DecoderTrainReport {
  std::vector<double> losses;
  double seconds = 0.0;
};

struct TrainingSample {
  DecoderBatch batch;
  torch::Tensor targets;  // [B,L] true token ids
  torch::Tensor mask;     // [B,L] bool
};

/// Draws one training batch: ordered, encoded, masked, wireframe of the visible part.
TrainingSample draw_training_batch(const std::vector<Layout>& corpus, const DecoderConfig& config,
                                   const Vocabulary& vocab, int batch_size, Rng& rng);

DecoderTrainReport train_decoder(LayoutDecoder& model, const std::vector<Layout>& corpus, std::uint64_t seed,
                                 const std::function<void(int, double)>& progress = {});

struct MaskedPrediction {
  TokenSequence filled;
  /// Argmax probability for every position; only replaced positions are meaningful (0 elsewhere).
  std::vector<double> confidence;
  std::vector<int> replaced;
};

/// Fills every masked position with its argmax slot-valid token. Unmasked
/// positions are copied verbatim. Zero masked positions is a no-op.
std::vector<MaskedPrediction> predict_masked(LayoutDecoder& model, const std::vector<TokenSequence>& seqs,
                                             const std::vector<WireframeImage>* images);
MaskedPrediction predict_masked(LayoutDecoder& model, const TokenSequence& seq, const WireframeImage* image);

RenderOptions decoder_render_options(const DecoderConfig& config);

// Checkpoints -----------------------------------------------------------------

struct DecoderBundle {
  LayoutDecoder model{nullptr};
  CategorySchema schema;
  std::vector<int> count_histogram;  // training element-count histogram (index = n)
  double train_seconds = 0.0;
  std::string data_hash;
};

void save_decoder(const std::filesystem::path& path, const DecoderBundle& bundle);
/// Refuses checkpoints whose vocabulary differs from *expected when given.
DecoderBundle load_decoder(const std::filesystem::path& path, const CategorySchema* expected = nullptr);

// Gradient check --------------------------------------------------------------

struct GradCheckEntry {
  std::string parameter;
  int64_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

/// Compares autograd against central differences of the masked loss in float64
/// at `count` sampled parameter coordinates that the batch actually touches.
std::vector<GradCheckEntry> gradient_check(const DecoderConfig& config, const CategorySchema& schema,
                                           const std::vector<Layout>& layouts, int count, std::uint64_t seed,
                                           double eps = 1e-6);

}  // namespace layoutgen
