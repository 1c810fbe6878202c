// SPDX-License-Identifier: Apache-2.0
//
// Building blocks shared by the decoder, the locator and the feature networks.
#pragma once

#include <optional>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "layoutgen/render.hpp"

namespace layoutgen::nn {

/// Multi-head attention that keeps the attention weights of its last call.
struct AttentionImpl : torch::nn::Module {
  AttentionImpl(int dim, int heads);

  /// query [B,Lq,d], memory [B,Lk,d]; key_padding [B,Lk] true = ignore.
  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& memory,
                        const std::optional<torch::Tensor>& key_padding = std::nullopt);

  int dim, heads;
  torch::nn::Linear q{nullptr}, k{nullptr}, v{nullptr}, o{nullptr};
  torch::Tensor last_weights;  // [B,H,Lq,Lk], detached
  bool keep_weights = false;
};
TORCH_MODULE(Attention);

/// Pre-norm block: self-attention, optional cross-attention to a memory, GELU MLP.
struct BlockImpl : torch::nn::Module {
  BlockImpl(int dim, int heads, int ff_mult, double dropout, bool cross);

  torch::Tensor forward(torch::Tensor x, const std::optional<torch::Tensor>& key_padding,
                        const std::optional<torch::Tensor>& memory);

  bool has_cross;
  Attention self_attn{nullptr}, cross_attn{nullptr};
  torch::nn::LayerNorm n1{nullptr}, n2{nullptr}, n3{nullptr};
  torch::nn::Linear ff1{nullptr}, ff2{nullptr};
  torch::nn::Dropout drop{nullptr};
};
TORCH_MODULE(Block);

/// Stack of stride-2 conv blocks followed by a projection to dim and a learned
/// 2D position embedding; output is a [B, h*w, dim] token grid.
struct ImageEncoderImpl : torch::nn::Module {
  ImageEncoderImpl(const std::vector<int>& channels, int image_size, int dim);

  torch::Tensor forward(const torch::Tensor& images);

  torch::nn::Sequential convs{nullptr};
  torch::nn::Linear proj{nullptr};
  torch::Tensor pos;
  int grid = 0;
};
TORCH_MODULE(ImageEncoder);

/// [B,3,H,W] float tensor from rendered wireframes (values in [0,1]).
torch::Tensor images_to_tensor(std::span<const WireframeImage> images);
torch::Tensor image_to_tensor(const WireframeImage& image);

/// Linear warmup to base_lr, then inverse square-root decay.
double warmup_inverse_sqrt(int step, int warmup, double base_lr);

void set_learning_rate(torch::optim::Optimizer& opt, double lr);

/// Stable hex digest of every parameter and buffer value.
std::string parameter_digest(const torch::nn::Module& module);

}  // namespace layoutgen::nn
