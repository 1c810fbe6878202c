// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/models/nn.hpp"

#include <cmath>
#include <cstdio>

#include "layoutgen/error.hpp"
#include "layoutgen/rng.hpp"

namespace layoutgen::nn {

AttentionImpl::AttentionImpl(int dim_, int heads_) : dim(dim_), heads(heads_) {
  require(dim % heads == 0, ErrorKind::Config, "model dim must be divisible by the head count");
  q = register_module("q", torch::nn::Linear(dim, dim));
  k = register_module("k", torch::nn::Linear(dim, dim));
  v = register_module("v", torch::nn::Linear(dim, dim));
  o = register_module("o", torch::nn::Linear(dim, dim));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& memory,
                                     const std::optional<torch::Tensor>& key_padding) {
  const auto b = query.size(0), lq = query.size(1), lk = memory.size(1);
  const int dk = dim / heads;
  auto split = [&](const torch::Tensor& t, int64_t l) { return t.view({b, l, heads, dk}).transpose(1, 2); };
  const auto qh = split(q(query), lq);
  const auto kh = split(k(memory), lk);
  const auto vh = split(v(memory), lk);
  auto scores = torch::matmul(qh, kh.transpose(-2, -1)) / std::sqrt(static_cast<double>(dk));
  if (key_padding) {
    scores = scores.masked_fill(key_padding->view({b, 1, 1, lk}), -std::numeric_limits<double>::infinity());
  }
  const auto w = torch::softmax(scores, -1);
  if (keep_weights) last_weights = w.detach();
  const auto out = torch::matmul(w, vh).transpose(1, 2).contiguous().view({b, lq, dim});
  return o(out);
}

BlockImpl::BlockImpl(int dim, int heads, int ff_mult, double dropout, bool cross) : has_cross(cross) {
  self_attn = register_module("self_attn", Attention(dim, heads));
  n1 = register_module("n1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  if (cross) {
    cross_attn = register_module("cross_attn", Attention(dim, heads));
    n2 = register_module("n2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  }
  n3 = register_module("n3", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  ff1 = register_module("ff1", torch::nn::Linear(dim, dim * ff_mult));
  ff2 = register_module("ff2", torch::nn::Linear(dim * ff_mult, dim));
  drop = register_module("drop", torch::nn::Dropout(dropout));
}

torch::Tensor BlockImpl::forward(torch::Tensor x, const std::optional<torch::Tensor>& key_padding,
                                 const std::optional<torch::Tensor>& memory) {
  auto h = n1(x);
  x = x + drop(self_attn(h, h, key_padding));
  if (has_cross && memory) x = x + drop(cross_attn(n2(x), *memory));
  x = x + drop(ff2(torch::gelu(ff1(n3(x)))));
  return x;
}

ImageEncoderImpl::ImageEncoderImpl(const std::vector<int>& channels, int image_size, int dim) {
  require(!channels.empty(), ErrorKind::Config, "image encoder needs at least one conv block");
  convs = torch::nn::Sequential();
  int in = 3;
  grid = image_size;
  for (int c : channels) {
    convs->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, c, 3).stride(2).padding(1)));
    convs->push_back(torch::nn::GroupNorm(torch::nn::GroupNormOptions(std::min(4, c), c)));
    convs->push_back(torch::nn::Functional(torch::gelu, "none"));
    in = c;
    grid = (grid + 1) / 2;
  }
  register_module("convs", convs);
  proj = register_module("proj", torch::nn::Linear(in, dim));
  pos = register_parameter("pos", torch::randn({1, grid * grid, dim}) * 0.02);
}

torch::Tensor ImageEncoderImpl::forward(const torch::Tensor& images) {
  auto f = convs->forward(images);                 // [B,C,g,g]
  f = f.flatten(2).transpose(1, 2);                // [B,g*g,C]
  return proj(f) + pos;
}

torch::Tensor image_to_tensor(const WireframeImage& image) {
  auto t = torch::empty({3, image.height(), image.width()}, torch::kFloat32);
  image.to_chw(std::span<float>(t.data_ptr<float>(), static_cast<std::size_t>(t.numel())));
  return t;
}

torch::Tensor images_to_tensor(std::span<const WireframeImage> images) {
  require(!images.empty(), ErrorKind::Precondition, "empty image batch");
  auto t = torch::empty({static_cast<int64_t>(images.size()), 3, images[0].height(), images[0].width()},
                        torch::kFloat32);
  const auto per = static_cast<std::size_t>(3 * images[0].height() * images[0].width());
  float* base = t.data_ptr<float>();
  for (std::size_t i = 0; i < images.size(); ++i) {
    require(images[i].height() == images[0].height() && images[i].width() == images[0].width(),
            ErrorKind::Config, "image batch with mixed resolutions");
    images[i].to_chw(std::span<float>(base + i * per, per));
  }
  return t;
}

double warmup_inverse_sqrt(int step, int warmup, double base_lr) {
  const double s = std::max(1, step);
  if (warmup <= 0) return base_lr;
  return base_lr * std::min(s / warmup, std::sqrt(warmup / s));
}

void set_learning_rate(torch::optim::Optimizer& opt, double lr) {
  for (auto& group : opt.param_groups()) group.options().set_lr(lr);
}

std::string parameter_digest(const torch::nn::Module& module) {
  std::uint64_t h = fnv1a64("params");
  auto mix = [&](const std::string& name, const torch::Tensor& t) {
    h = fnv1a64(name, h);
    const auto c = t.detach().to(torch::kCPU).contiguous();
    h = fnv1a64_bytes(c.data_ptr(), static_cast<std::size_t>(c.numel()) * c.element_size(), h);
  };
  for (const auto& p : module.named_parameters()) mix(p.key(), p.value());
  for (const auto& b : module.named_buffers()) mix(b.key(), b.value());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace layoutgen::nn
