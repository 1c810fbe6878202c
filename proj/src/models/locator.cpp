// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/models/locator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "layoutgen/error.hpp"
#include "layoutgen/layout_io.hpp"
#include "layoutgen/metrics.hpp"
#include "layoutgen/models/checkpoint.hpp"
#include "layoutgen/models/nn.hpp"

namespace layoutgen {

// Config ----------------------------------------------------------------------

void LocatorConfig::validate() const {
  require(kind == "pixel" || kind == "object", ErrorKind::Config, "locator.kind must be pixel or object");
  require(depth == 10 || depth == 18 || depth == 34 || depth == 50, ErrorKind::Config,
          "locator.depth must be 10, 18, 34 or 50");
  require(width >= 4 && image_size >= 32 && proposals >= 1 && head_width >= 8, ErrorKind::Config,
          "locator sizes out of range");
  require(tau > 0.0 && tau < 1.0, ErrorKind::Config, "locator.tau must lie in (0, 1)");
  require(batch >= 1 && steps >= 0, ErrorKind::Config, "bad locator batch/steps");
  require(tagger_dim % tagger_heads == 0, ErrorKind::Config, "tagger dim must be divisible by its heads");
}

LocatorConfig LocatorConfig::from(const Config& cfg) {
  LocatorConfig c;
  c.kind = cfg.get("locator.kind");
  c.depth = cfg.get_int("locator.depth");
  c.width = cfg.get_int("locator.width");
  c.image_size = cfg.get_int("locator.image_size");
  c.proposals = cfg.get_int("locator.proposals");
  c.head_width = cfg.get_int("locator.head_width");
  c.lr = cfg.get_double("locator.lr");
  c.batch = cfg.get_int("locator.batch");
  c.steps = cfg.get_int("locator.steps");
  c.warmup = cfg.get_int("locator.warmup");
  c.beta1 = cfg.get_double("locator.beta1");
  c.beta2 = cfg.get_double("locator.beta2");
  c.weight_decay = cfg.get_double("locator.weight_decay");
  c.tau = cfg.get_double("locator.tau");
  c.score_threshold = cfg.get_double("locator.score_threshold");
  c.nms_iou = cfg.get_double("locator.nms_iou");
  c.tagger_layers = cfg.get_int("locator.tagger_layers");
  c.tagger_dim = cfg.get_int("locator.tagger_dim");
  c.tagger_heads = cfg.get_int("locator.tagger_heads");
  c.max_elements = cfg.get_int("decoder.max_elements");
  c.num_bins = cfg.get_int("decoder.bins");
  const auto profile = cfg.get("locator.profile");
  if (profile == "desk") {
    // Single-core budget: a 112 px wireframe keeps one step near half a second, and
    // the shorter schedule needs the larger learning rate.
    c.image_size = cfg.get_int("locator.desk_image_size");
    c.batch = cfg.get_int("locator.desk_batch");
    c.lr = cfg.get_double("locator.desk_lr");
    c.steps = cfg.get_int("locator.desk_steps");
  } else if (profile == "full") {
    c.image_size = 224;
    c.batch = 128;
    c.lr = 1e-4;
  } else {
    require(profile == "custom", ErrorKind::Config, "locator.profile must be desk, full or custom");
  }
  c.validate();
  return c;
}

nlohmann::ordered_json LocatorConfig::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = kind;
  j["depth"] = depth;
  j["width"] = width;
  j["image_size"] = image_size;
  j["proposals"] = proposals;
  j["head_width"] = head_width;
  j["lr"] = lr;
  j["batch"] = batch;
  j["steps"] = steps;
  j["warmup"] = warmup;
  j["betas"] = {beta1, beta2};
  j["weight_decay"] = weight_decay;
  j["tau"] = tau;
  j["score_threshold"] = score_threshold;
  j["nms_iou"] = nms_iou;
  j["tagger"] = {{"layers", tagger_layers}, {"dim", tagger_dim}, {"heads", tagger_heads}};
  j["max_elements"] = max_elements;
  j["num_bins"] = num_bins;
  return j;
}

LocatorConfig LocatorConfig::from_json(const nlohmann::json& j) {
  LocatorConfig c;
  c.kind = j.at("kind").get<std::string>();
  c.depth = j.at("depth").get<int>();
  c.width = j.at("width").get<int>();
  c.image_size = j.at("image_size").get<int>();
  c.proposals = j.at("proposals").get<int>();
  c.head_width = j.at("head_width").get<int>();
  c.lr = j.at("lr").get<double>();
  c.batch = j.at("batch").get<int>();
  c.steps = j.at("steps").get<int>();
  c.warmup = j.at("warmup").get<int>();
  c.beta1 = j.at("betas").at(0).get<double>();
  c.beta2 = j.at("betas").at(1).get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.tau = j.at("tau").get<double>();
  c.score_threshold = j.at("score_threshold").get<double>();
  c.nms_iou = j.at("nms_iou").get<double>();
  c.tagger_layers = j.at("tagger").at("layers").get<int>();
  c.tagger_dim = j.at("tagger").at("dim").get<int>();
  c.tagger_heads = j.at("tagger").at("heads").get<int>();
  c.max_elements = j.at("max_elements").get<int>();
  c.num_bins = j.at("num_bins").get<int>();
  c.validate();
  return c;
}

// Box helpers -----------------------------------------------------------------

std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores, double iou_threshold) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  std::vector<int> keep;
  std::vector<bool> dead(boxes.size(), false);
  for (int i : order) {
    if (dead[static_cast<std::size_t>(i)]) continue;
    keep.push_back(i);
    for (int j : order) {
      if (!dead[static_cast<std::size_t>(j)] && j != i &&
          iou(boxes[static_cast<std::size_t>(i)], boxes[static_cast<std::size_t>(j)]) > iou_threshold) {
        dead[static_cast<std::size_t>(j)] = true;
      }
    }
  }
  return keep;
}

LocatorVerdict associate(const std::vector<Detection>& detections, const std::vector<Box>& elements, double tau) {
  LocatorVerdict v;
  v.flags.elements.resize(elements.size());
  v.probs.assign(elements.size(), {0.0, 0.0, 0.0, 0.0});
  std::vector<int> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return detections[static_cast<std::size_t>(a)].objectness > detections[static_cast<std::size_t>(b)].objectness;
  });
  std::vector<bool> claimed(elements.size(), false);
  for (int d : order) {
    const auto& det = detections[static_cast<std::size_t>(d)];
    int best_free = -1, best_any = -1;
    double iou_free = -1.0, iou_any = -1.0;
    for (std::size_t e = 0; e < elements.size(); ++e) {
      const double o = iou(det.box, elements[e]);
      if (o < tau) continue;
      if (!claimed[e] && o > iou_free) {
        iou_free = o;
        best_free = static_cast<int>(e);
      }
      if (o > iou_any) {
        iou_any = o;
        best_any = static_cast<int>(e);
      }
    }
    const int target = best_free >= 0 ? best_free : best_any;
    if (target < 0) continue;
    const auto t = static_cast<std::size_t>(target);
    claimed[t] = true;
    for (std::size_t k = 0; k < 4; ++k) {
      if (det.probs[k] > 0.5) v.flags.elements[t].flags[k] = true;
      v.probs[t][k] = std::max(v.probs[t][k], det.probs[k]);
    }
  }
  return v;
}

namespace {

// xyxy tensor helpers, normalized coordinates.
torch::Tensor box_iou_xyxy(const torch::Tensor& a, const torch::Tensor& b) {
  const auto area_a = (a.select(1, 2) - a.select(1, 0)).clamp_min(0) * (a.select(1, 3) - a.select(1, 1)).clamp_min(0);
  const auto area_b = (b.select(1, 2) - b.select(1, 0)).clamp_min(0) * (b.select(1, 3) - b.select(1, 1)).clamp_min(0);
  const auto lt = torch::max(a.slice(1, 0, 2).unsqueeze(1), b.slice(1, 0, 2).unsqueeze(0));
  const auto rb = torch::min(a.slice(1, 2, 4).unsqueeze(1), b.slice(1, 2, 4).unsqueeze(0));
  const auto wh = (rb - lt).clamp_min(0);
  const auto inter = wh.select(2, 0) * wh.select(2, 1);
  return inter / (area_a.unsqueeze(1) + area_b.unsqueeze(0) - inter).clamp_min(1e-12);
}

Box to_box(const float* xyxy) {
  return {xyxy[0], xyxy[1], xyxy[2] - xyxy[0], xyxy[3] - xyxy[1]};
}

torch::Tensor layout_boxes_xyxy(const Layout& layout) {
  auto t = torch::empty({layout.size(), 4}, torch::kFloat32);
  auto a = t.accessor<float, 2>();
  for (int i = 0; i < layout.size(); ++i) {
    const auto& e = layout.elements[static_cast<std::size_t>(i)];
    a[i][0] = static_cast<float>(e.x);
    a[i][1] = static_cast<float>(e.y);
    a[i][2] = static_cast<float>(e.x + e.w);
    a[i][3] = static_cast<float>(e.y + e.h);
  }
  return t;
}

torch::Tensor mask_tensor(const MaskAnnotation& m) {
  auto t = torch::zeros({m.size(), 4}, torch::kFloat32);
  auto a = t.accessor<float, 2>();
  for (int i = 0; i < m.size(); ++i) {
    for (int k = 0; k < 4; ++k) a[i][k] = m.elements[static_cast<std::size_t>(i)].flags[static_cast<std::size_t>(k)] ? 1.f : 0.f;
  }
  return t;
}

// Residual backbone -------------------------------------------------------------

torch::nn::Conv2d conv(int in, int out, int k, int stride) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2).bias(false));
}

struct ResidualImpl : torch::nn::Module {
  ResidualImpl(int in, int planes, int stride, bool bottleneck) : bottleneck_(bottleneck) {
    const int out = bottleneck ? planes * 4 : planes;
    if (bottleneck) {
      c1 = register_module("c1", conv(in, planes, 1, 1));
      c2 = register_module("c2", conv(planes, planes, 3, stride));
      c3 = register_module("c3", conv(planes, out, 1, 1));
      b3 = register_module("b3", torch::nn::BatchNorm2d(out));
    } else {
      c1 = register_module("c1", conv(in, planes, 3, stride));
      c2 = register_module("c2", conv(planes, planes, 3, 1));
    }
    b1 = register_module("b1", torch::nn::BatchNorm2d(planes));
    b2 = register_module("b2", torch::nn::BatchNorm2d(planes));
    if (stride != 1 || in != out) {
      down = register_module("down", conv(in, out, 1, stride));
      down_bn = register_module("down_bn", torch::nn::BatchNorm2d(out));
    }
  }
  torch::Tensor forward(const torch::Tensor& x) {
    auto y = torch::relu(b1(c1(x)));
    y = b2(c2(y));
    if (bottleneck_) y = b3(c3(torch::relu(y)));
    const auto skip = down ? down_bn(down(x)) : x;
    return torch::relu(y + skip);
  }
  bool bottleneck_;
  torch::nn::Conv2d c1{nullptr}, c2{nullptr}, c3{nullptr}, down{nullptr};
  torch::nn::BatchNorm2d b1{nullptr}, b2{nullptr}, b3{nullptr}, down_bn{nullptr};
};
TORCH_MODULE(Residual);

struct BackboneImpl : torch::nn::Module {
  explicit BackboneImpl(int depth, int width) {
    std::array<int, 4> blocks{2, 2, 2, 2};
    bool bottleneck = false;
    if (depth == 10) blocks = {1, 1, 1, 1};
    if (depth == 34) blocks = {3, 4, 6, 3};
    if (depth == 50) {
      blocks = {3, 4, 6, 3};
      bottleneck = true;
    }
    stem = register_module("stem", conv(3, width, 3, 2));
    stem_bn = register_module("stem_bn", torch::nn::BatchNorm2d(width));
    int in = width;
    for (int s = 0; s < 4; ++s) {
      torch::nn::Sequential stage;
      const int planes = width << s;
      for (int b = 0; b < blocks[static_cast<std::size_t>(s)]; ++b) {
        stage->push_back(Residual(in, planes, (b == 0 && s > 0) ? 2 : 1, bottleneck));
        in = bottleneck ? planes * 4 : planes;
      }
      stages.push_back(register_module("stage" + std::to_string(s + 1), stage));
      channels[static_cast<std::size_t>(s)] = in;
    }
  }
  /// Outputs of stages 1 to 4 (strides 4, 8, 16, 32).
  std::array<torch::Tensor, 4> forward(const torch::Tensor& x) {
    auto y = torch::max_pool2d(torch::relu(stem_bn(stem(x))), 3, 2, 1);
    auto c1 = stages[0]->forward(y);
    auto c2 = stages[1]->forward(c1);
    auto c3 = stages[2]->forward(c2);
    auto c4 = stages[3]->forward(c3);
    return {c1, c2, c3, c4};
  }
  torch::nn::Conv2d stem{nullptr};
  torch::nn::BatchNorm2d stem_bn{nullptr};
  std::vector<torch::nn::Sequential> stages;
  std::array<int, 4> channels{};
};
TORCH_MODULE(Backbone);

constexpr int kPool = 7;
constexpr int kFpn = 64;
constexpr int kRoiChannels = 32;
constexpr double kRpnNms = 0.7;
const std::array<double, 4> kDeltaStd{0.1, 0.1, 0.2, 0.2};
constexpr int kFourier = 6;
// The attribute stage pools a finer grid over the box grown by this fraction per side.
constexpr int kAttrPool = 9;
constexpr double kAttrMargin = 0.25;
// Training jitter on ground-truth boxes fed to the attribute stage, relative to box size.
constexpr double kAttrJitter = 0.03;

}  // namespace

// Pixel locator -------------------------------------------------------------

struct PixelLocatorImpl : torch::nn::Module {
  explicit PixelLocatorImpl(const LocatorConfig& cfg) : cfg_(cfg) {
    backbone = register_module("backbone", Backbone(cfg.depth, cfg.width));
    lat2 = register_module("lat2", torch::nn::Conv2d(torch::nn::Conv2dOptions(backbone->channels[1], kFpn, 1)));
    lat3 = register_module("lat3", torch::nn::Conv2d(torch::nn::Conv2dOptions(backbone->channels[2], kFpn, 1)));
    lat4 = register_module("lat4", torch::nn::Conv2d(torch::nn::Conv2dOptions(backbone->channels[3], kFpn, 1)));
    smooth = register_module("smooth", torch::nn::Conv2d(torch::nn::Conv2dOptions(kFpn, kFpn, 3).padding(1)));
    rpn_conv = register_module("rpn_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(kFpn, kFpn, 3).padding(1)));
    rpn_obj = register_module("rpn_obj", torch::nn::Conv2d(torch::nn::Conv2dOptions(kFpn, 1, 1)));
    rpn_box = register_module("rpn_box", torch::nn::Conv2d(torch::nn::Conv2dOptions(kFpn, 4, 1)));
    roi_reduce = register_module("roi_reduce", torch::nn::Conv2d(torch::nn::Conv2dOptions(kFpn, kRoiChannels, 1)));
    lat1 = register_module("lat1", torch::nn::Conv2d(torch::nn::Conv2dOptions(backbone->channels[0], kRoiChannels, 1)));
    fine_smooth = register_module(
        "fine_smooth", torch::nn::Conv2d(torch::nn::Conv2dOptions(kRoiChannels, kRoiChannels, 3).padding(1)));
    const int hw = cfg.head_width;
    fc1 = register_module("fc1", torch::nn::Linear(kRoiChannels * kPool * kPool, hw));
    fc2 = register_module("fc2", torch::nn::Linear(hw, hw));
    box_emb = register_module("box_emb", torch::nn::Linear(4, hw));
    context = register_module("context", torch::nn::Linear(kFpn, hw));
    rel_norm = register_module("rel_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({hw})));
    relation = register_module("relation", nn::Attention(hw, 4));
    obj_head = register_module("obj_head", torch::nn::Linear(hw, 1));
    box_head = register_module("box_head", torch::nn::Linear(hw, 4));
    attr_fc = register_module("attr_fc", torch::nn::Linear(kRoiChannels * kAttrPool * kAttrPool, hw));
    attr_box = register_module("attr_box", torch::nn::Linear(4 + 8 * kFourier, hw));
    attr_blocks = register_module("attr_blocks", torch::nn::ModuleList());
    for (int i = 0; i < 2; ++i) attr_blocks->push_back(nn::Block(hw, 4, 2, 0.0, false));
    attr_norm = register_module("attr_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({hw})));
    attr_head = register_module("attr_head", torch::nn::Linear(hw, 4));
    torch::nn::init::zeros_(box_head->weight);
    torch::nn::init::zeros_(box_head->bias);
  }

  struct Features {
    torch::Tensor fmap;      // [B,C,h,w]
    torch::Tensor roi_map;   // [B,Cr,h,w]
    torch::Tensor fine_map;  // [B,Cr,2h,2w]
    torch::Tensor obj;       // [B,h*w] logits
    torch::Tensor ltrb;      // [B,h*w,4] distances in [0,1]
    torch::Tensor centers;   // [h*w,2]
    torch::Tensor global;    // [B,C]
  };

  Features features(const torch::Tensor& images) {
    auto [c1, c2, c3, c4] = backbone->forward(images);
    const auto size = std::vector<int64_t>{c2.size(2), c2.size(3)};
    auto up = [&](const torch::Tensor& t) {
      return torch::nn::functional::interpolate(
          t, torch::nn::functional::InterpolateFuncOptions().size(size).mode(torch::kNearest));
    };
    Features f;
    f.fmap = torch::relu(smooth(lat2(c2) + up(lat3(c3)) + up(lat4(c4))));
    f.roi_map = torch::relu(roi_reduce(f.fmap));
    f.fine_map = torch::relu(fine_smooth(
        lat1(c1) + torch::nn::functional::interpolate(
                       f.roi_map, torch::nn::functional::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{c1.size(2), c1.size(3)})
                                      .mode(torch::kNearest))));
    const auto r = torch::relu(rpn_conv(f.fmap));
    f.obj = rpn_obj(r).flatten(1);
    f.ltrb = torch::sigmoid(rpn_box(r)).flatten(2).transpose(1, 2);
    const auto h = f.fmap.size(2), w = f.fmap.size(3);
    const auto ys = (torch::arange(h, torch::kFloat32) + 0.5) / h;
    const auto xs = (torch::arange(w, torch::kFloat32) + 0.5) / w;
    const auto grid = torch::meshgrid({ys, xs}, "ij");
    f.centers = torch::stack({grid[1].flatten(), grid[0].flatten()}, 1);
    f.global = f.fmap.mean({2, 3});
    return f;
  }

  static torch::Tensor decode_rpn(const torch::Tensor& ltrb, const torch::Tensor& centers) {
    return torch::stack({centers.select(1, 0) - ltrb.select(-1, 0), centers.select(1, 1) - ltrb.select(-1, 1),
                         centers.select(1, 0) + ltrb.select(-1, 2), centers.select(1, 1) + ltrb.select(-1, 3)},
                        -1)
        .clamp(0.0, 1.0);
  }

  /// Top proposals of one image (xyxy), after NMS at kRpnNms.
  torch::Tensor proposals(const Features& f, int64_t b) const {
    torch::NoGradGuard g;
    const auto scores = torch::sigmoid(f.obj[b]);
    const auto boxes = decode_rpn(f.ltrb[b], f.centers);
    const int64_t pre = std::min<int64_t>(scores.size(0), 4 * cfg_.proposals);
    const auto top = std::get<1>(scores.topk(pre));
    const auto cand = boxes.index_select(0, top).contiguous();
    const auto cand_scores = scores.index_select(0, top).contiguous();
    std::vector<Box> bs;
    std::vector<double> ss;
    const float* p = cand.data_ptr<float>();
    for (int64_t i = 0; i < pre; ++i) {
      bs.push_back(to_box(p + 4 * i));
      ss.push_back(cand_scores[i].item<float>());
    }
    auto keep = nms(bs, ss, kRpnNms);
    if (static_cast<int>(keep.size()) > cfg_.proposals) keep.resize(static_cast<std::size_t>(cfg_.proposals));
    std::vector<int64_t> idx(keep.begin(), keep.end());
    return cand.index_select(0, torch::tensor(idx, torch::kLong));
  }

  /// RoI features pooled on a k x k grid of bin centers, over the box grown by margin per side.
  static torch::Tensor pool(const torch::Tensor& roi_map, const torch::Tensor& rois, int k = kPool,
                            double margin = 0.0) {
    const auto r = rois.size(0);
    const auto t = (torch::arange(k, torch::kFloat32) + 0.5) / k * (1 + 2 * margin) - margin;
    const auto xs = rois.select(1, 0).unsqueeze(1) + t.unsqueeze(0) * (rois.select(1, 2) - rois.select(1, 0)).unsqueeze(1);
    const auto ys = rois.select(1, 1).unsqueeze(1) + t.unsqueeze(0) * (rois.select(1, 3) - rois.select(1, 1)).unsqueeze(1);
    const auto gx = (xs * 2 - 1).unsqueeze(1).expand({r, k, k});
    const auto gy = (ys * 2 - 1).unsqueeze(2).expand({r, k, k});
    const auto grid = torch::stack({gx, gy}, -1).reshape({1, r * k, k, 2});
    const auto out = torch::nn::functional::grid_sample(
        roi_map.unsqueeze(0), grid,
        torch::nn::functional::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kZeros).align_corners(false));
    return out.view({roi_map.size(0), r, k, k}).permute({1, 0, 2, 3}).flatten(1);
  }

  struct HeadOut {
    torch::Tensor objectness, deltas;  // [R], [R,4] over all images, concatenated
  };

  HeadOut head(const Features& f, const std::vector<torch::Tensor>& rois) {
    const auto b = static_cast<int64_t>(rois.size());
    int64_t rmax = 1;
    for (const auto& r : rois) rmax = std::max(rmax, r.size(0));
    const int hw = cfg_.head_width;
    std::vector<torch::Tensor> padded;
    auto key_pad = torch::ones({b, rmax}, torch::kBool);
    for (int64_t i = 0; i < b; ++i) {
      const auto& r = rois[static_cast<std::size_t>(i)];
      const auto n = r.size(0);
      torch::Tensor x = torch::zeros({rmax, hw});
      if (n > 0) {
        auto h = torch::relu(fc1(pool(f.roi_map[i], r)));
        const auto xywh = torch::stack({r.select(1, 0), r.select(1, 1), r.select(1, 2) - r.select(1, 0),
                                        r.select(1, 3) - r.select(1, 1)}, 1);
        h = torch::relu(fc2(h)) + box_emb(xywh) + context(f.global[i]).unsqueeze(0);
        x = torch::cat({h, torch::zeros({rmax - n, hw})}, 0);
        key_pad[i].slice(0, 0, n).fill_(false);
      }
      padded.push_back(x);
    }
    auto x = torch::stack(padded, 0);
    const auto h = rel_norm(x);
    x = x + relation(h, h, key_pad);
    const auto valid = key_pad.logical_not().flatten();
    const auto flat = x.flatten(0, 1).index({valid});
    return {obj_head(flat).squeeze(1), box_head(flat)};
  }

  static torch::Tensor encode_box(const torch::Tensor& r) {
    const auto xywh = torch::stack({r.select(1, 0), r.select(1, 1), r.select(1, 2) - r.select(1, 0),
                                    r.select(1, 3) - r.select(1, 1)}, 1);
    const auto freq = torch::pow(2.0, torch::arange(kFourier, torch::kFloat32)) * M_PI;
    const auto a = (xywh.unsqueeze(2) * freq).flatten(1);
    return torch::cat({xywh, torch::sin(a), torch::cos(a)}, 1);
  }

  /// Attribute logits for settled element boxes, one set per image, attending across the set.
  torch::Tensor attributes(const Features& f, const std::vector<torch::Tensor>& boxes) {
    const auto b = static_cast<int64_t>(boxes.size());
    int64_t rmax = 1;
    for (const auto& r : boxes) rmax = std::max(rmax, r.size(0));
    const int hw = cfg_.head_width;
    std::vector<torch::Tensor> padded;
    auto key_pad = torch::ones({b, rmax}, torch::kBool);
    for (int64_t i = 0; i < b; ++i) {
      const auto& r = boxes[static_cast<std::size_t>(i)];
      const auto n = r.size(0);
      torch::Tensor x = torch::zeros({rmax, hw});
      if (n > 0) {
        const auto h = torch::relu(attr_fc(pool(f.fine_map[i], r, kAttrPool, kAttrMargin))) + attr_box(encode_box(r));
        x = torch::cat({h, torch::zeros({rmax - n, hw})}, 0);
        key_pad[i].slice(0, 0, n).fill_(false);
      }
      padded.push_back(x);
    }
    auto x = torch::stack(padded, 0);
    for (const auto& blk : *attr_blocks) x = blk->as<nn::Block>()->forward(x, key_pad, std::nullopt);
    const auto valid = key_pad.logical_not().flatten();
    return attr_head(attr_norm(x).flatten(0, 1).index({valid}));
  }

  static torch::Tensor apply_deltas(const torch::Tensor& rois, const torch::Tensor& deltas) {
    const auto w = (rois.select(1, 2) - rois.select(1, 0)).clamp_min(1e-4);
    const auto h = (rois.select(1, 3) - rois.select(1, 1)).clamp_min(1e-4);
    const auto cx = rois.select(1, 0) + 0.5 * w + deltas.select(1, 0) * kDeltaStd[0] * w;
    const auto cy = rois.select(1, 1) + 0.5 * h + deltas.select(1, 1) * kDeltaStd[1] * h;
    const auto nw = w * torch::exp((deltas.select(1, 2) * kDeltaStd[2]).clamp(-4, 4));
    const auto nh = h * torch::exp((deltas.select(1, 3) * kDeltaStd[3]).clamp(-4, 4));
    return torch::stack({cx - 0.5 * nw, cy - 0.5 * nh, cx + 0.5 * nw, cy + 0.5 * nh}, 1).clamp(0.0, 1.0);
  }

  static torch::Tensor encode_deltas(const torch::Tensor& rois, const torch::Tensor& gt) {
    const auto w = (rois.select(1, 2) - rois.select(1, 0)).clamp_min(1e-4);
    const auto h = (rois.select(1, 3) - rois.select(1, 1)).clamp_min(1e-4);
    const auto gw = (gt.select(1, 2) - gt.select(1, 0)).clamp_min(1e-4);
    const auto gh = (gt.select(1, 3) - gt.select(1, 1)).clamp_min(1e-4);
    const auto dx = ((gt.select(1, 0) + 0.5 * gw) - (rois.select(1, 0) + 0.5 * w)) / w / kDeltaStd[0];
    const auto dy = ((gt.select(1, 1) + 0.5 * gh) - (rois.select(1, 1) + 0.5 * h)) / h / kDeltaStd[1];
    return torch::stack({dx, dy, torch::log(gw / w) / kDeltaStd[2], torch::log(gh / h) / kDeltaStd[3]}, 1);
  }

  LocatorConfig cfg_;
  Backbone backbone{nullptr};
  torch::nn::Conv2d lat2{nullptr}, lat3{nullptr}, lat4{nullptr}, smooth{nullptr};
  torch::nn::Conv2d rpn_conv{nullptr}, rpn_obj{nullptr}, rpn_box{nullptr}, roi_reduce{nullptr};
  torch::nn::Conv2d lat1{nullptr}, fine_smooth{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr}, box_emb{nullptr}, context{nullptr};
  torch::nn::LayerNorm rel_norm{nullptr};
  nn::Attention relation{nullptr};
  torch::nn::Linear obj_head{nullptr}, box_head{nullptr};
  torch::nn::Linear attr_fc{nullptr}, attr_box{nullptr}, attr_head{nullptr};
  torch::nn::ModuleList attr_blocks{nullptr};
  torch::nn::LayerNorm attr_norm{nullptr};
};

// Object-space tagger -----------------------------------------------------------

struct ObjectTaggerImpl : torch::nn::Module {
  ObjectTaggerImpl(const LocatorConfig& cfg, const Vocabulary& vocab) {
    const int d = cfg.tagger_dim;
    token_emb = register_module("token_emb", torch::nn::Embedding(vocab.size(), d));
    pos_emb = register_module("pos_emb", torch::nn::Embedding(sequence_length(cfg.max_elements), d));
    element_emb = register_module("element_emb", torch::nn::Embedding(cfg.max_elements + 1, d));
    blocks = register_module("blocks", torch::nn::ModuleList());
    for (int i = 0; i < cfg.tagger_layers; ++i) blocks->push_back(nn::Block(d, cfg.tagger_heads, 4, 0.0, false));
    norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
    out = register_module("out", torch::nn::Linear(d, 1));
    max_elements = cfg.max_elements;
  }

  /// Per-position flag logits [B,L].
  torch::Tensor forward(const DecoderBatch& batch) {
    const auto l = batch.tokens.size(1);
    const auto idx = torch::arange(l, torch::kLong);
    const auto n = batch.counts.view({-1, 1});
    const auto inside = (idx.view({1, -1}) >= 1) & (idx.view({1, -1}) <= 5 * n);
    const auto element = torch::where(inside, torch::div(idx.view({1, -1}) - 1, 5, "floor"),
                                      torch::full({1, 1}, max_elements, torch::kLong));
    auto x = token_emb(batch.tokens) + torch::embedding(pos_emb->weight, idx).unsqueeze(0) +
             torch::embedding(element_emb->weight, element);
    const std::optional<torch::Tensor> pad = batch.padding;
    for (const auto& m : *blocks) x = m->as<nn::Block>()->forward(x, pad, std::nullopt);
    return out(norm(x)).squeeze(-1);
  }

  torch::nn::Embedding token_emb{nullptr}, pos_emb{nullptr}, element_emb{nullptr};
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::LayerNorm norm{nullptr};
  torch::nn::Linear out{nullptr};
  int max_elements = kDefaultMaxElements;
};

// Locator -------------------------------------------------------------------

Locator::Locator(LocatorConfig config, CategorySchema schema)
    : config_(std::move(config)), schema_(std::move(schema)), vocab_(schema_, config_.num_bins) {
  config_.validate();
  if (config_.kind == "pixel") {
    pixel_ = PixelLocator(config_);
  } else {
    tagger_ = ObjectTagger(config_, vocab_);
  }
  train_mode(false);
}

torch::nn::Module& Locator::module() {
  if (pixel_) return *pixel_;
  return *tagger_;
}

void Locator::train_mode(bool on) { module().train(on); }

RenderOptions Locator::render_options() const {
  RenderOptions o;
  o.height = o.width = config_.image_size;
  return o;
}

std::vector<std::vector<Detection>> Locator::detect_batch(const std::vector<WireframeImage>& images) {
  require(!pixel_.is_empty(), ErrorKind::Config, "detect needs a pixel-space locator");
  std::vector<std::vector<Detection>> out(images.size());
  if (images.empty()) return out;
  for (const auto& im : images) {
    require(im.height() == config_.image_size && im.width() == config_.image_size, ErrorKind::Config,
            "locator input must be " + std::to_string(config_.image_size) + " px square");
  }
  torch::NoGradGuard g;
  pixel_->eval();
  const auto f = pixel_->features(nn::images_to_tensor(images));
  std::vector<torch::Tensor> rois;
  for (std::size_t i = 0; i < images.size(); ++i) rois.push_back(pixel_->proposals(f, static_cast<int64_t>(i)));
  const auto h = pixel_->head(f, rois);
  int64_t offset = 0;
  std::vector<torch::Tensor> kept(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto n = rois[i].size(0);
    kept[i] = torch::zeros({0, 4});
    if (n == 0) continue;
    const auto boxes = PixelLocatorImpl::apply_deltas(rois[i], h.deltas.slice(0, offset, offset + n)).contiguous();
    const auto scores = torch::sigmoid(h.objectness.slice(0, offset, offset + n)).contiguous();
    offset += n;
    std::vector<Box> bs;
    std::vector<double> ss;
    for (int64_t r = 0; r < n; ++r) {
      bs.push_back(to_box(boxes.data_ptr<float>() + 4 * r));
      ss.push_back(scores.data_ptr<float>()[r]);
    }
    std::vector<int64_t> idx;
    for (int k : nms(bs, ss, config_.nms_iou)) {
      if (ss[static_cast<std::size_t>(k)] < config_.score_threshold) continue;
      idx.push_back(k);
      Detection d;
      d.box = bs[static_cast<std::size_t>(k)];
      d.objectness = ss[static_cast<std::size_t>(k)];
      out[i].push_back(d);
    }
    if (!idx.empty()) kept[i] = boxes.index_select(0, torch::tensor(idx, torch::kLong));
  }
  const auto probs = torch::sigmoid(pixel_->attributes(f, kept)).contiguous();
  const float* p = probs.data_ptr<float>();
  for (auto& dets : out) {
    for (auto& d : dets) {
      for (int a = 0; a < 4; ++a) d.probs[static_cast<std::size_t>(a)] = p[a];
      p += 4;
    }
  }
  return out;
}

std::vector<Detection> Locator::detect(const WireframeImage& image) { return detect_batch({image}).front(); }

std::vector<LocatorVerdict> Locator::locate(const std::vector<Layout>& layouts) {
  std::vector<LocatorVerdict> out;
  if (layouts.empty()) return out;
  if (pixel_) {
    std::vector<WireframeImage> images;
    for (const auto& l : layouts) images.push_back(render(l, schema_.size(), render_options()).image);
    const auto dets = detect_batch(images);
    for (std::size_t i = 0; i < layouts.size(); ++i) {
      std::vector<Box> boxes;
      for (const auto& e : layouts[i].elements) boxes.push_back(e.box());
      out.push_back(associate(dets[i], boxes, config_.tau));
    }
    return out;
  }
  torch::NoGradGuard g;
  tagger_->eval();
  std::vector<TokenSequence> seqs;
  for (const auto& l : layouts) seqs.push_back(encode(l, vocab_, config_.max_elements, {ElementOrder::AsIs, 0}));
  const auto probs = torch::sigmoid(tagger_->forward(make_batch(seqs, nullptr))).contiguous();
  const auto a = probs.accessor<float, 2>();
  for (std::size_t i = 0; i < layouts.size(); ++i) {
    LocatorVerdict v;
    const int n = layouts[i].size();
    v.flags.elements.resize(static_cast<std::size_t>(n));
    v.probs.resize(static_cast<std::size_t>(n));
    for (int e = 0; e < n; ++e) {
      for (int k = 0; k < 4; ++k) {
        const double p = a[static_cast<int64_t>(i)][position_of(e, static_cast<SlotKind>(static_cast<int>(SlotKind::X) + k))];
        v.probs[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)] = p;
        v.flags.elements[static_cast<std::size_t>(e)].flags[static_cast<std::size_t>(k)] = p > 0.5;
      }
    }
    out.push_back(std::move(v));
  }
  return out;
}

LocatorLosses Locator::losses(const std::vector<const LocatorRecord*>& batch) {
  require(!batch.empty(), ErrorKind::Precondition, "empty locator batch");
  LocatorLosses L;
  if (tagger_) {
    std::vector<TokenSequence> seqs;
    for (const auto* r : batch) seqs.push_back(encode(r->layout, vocab_, config_.max_elements, {ElementOrder::AsIs, 0}));
    const auto db = make_batch(seqs, nullptr);
    const auto logits = tagger_->forward(db);
    auto target = torch::zeros_like(logits);
    auto weight = torch::zeros_like(logits);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (int e = 0; e < batch[i]->layout.size(); ++e) {
        for (int k = 0; k < 4; ++k) {
          const int p = position_of(e, static_cast<SlotKind>(static_cast<int>(SlotKind::X) + k));
          weight[static_cast<int64_t>(i)][p] = 1.0;
          target[static_cast<int64_t>(i)][p] =
              batch[i]->mask.elements[static_cast<std::size_t>(e)].flags[static_cast<std::size_t>(k)] ? 1.0 : 0.0;
        }
      }
    }
    L.attributes = torch::binary_cross_entropy_with_logits(logits, target, weight, {}, at::Reduction::Sum) /
                   weight.sum();
    L.total = L.attributes;
    return L;
  }

  std::vector<WireframeImage> images;
  for (const auto* r : batch) images.push_back(render(r->layout, schema_.size(), render_options()).image);
  const auto f = pixel_->features(nn::images_to_tensor(images));
  const auto cells = f.centers.size(0);
  const auto b = static_cast<int64_t>(batch.size());

  // Proposal targets: a cell is positive for the smallest box containing its
  // center; each box also claims the cell holding its own center.
  auto obj_t = torch::zeros({b, cells});
  auto box_t = torch::zeros({b, cells, 4});
  const auto ca = f.centers.accessor<float, 2>();
  const int64_t fw = f.fmap.size(3), fh = f.fmap.size(2);
  std::vector<torch::Tensor> gts, flags;
  for (int64_t i = 0; i < b; ++i) {
    const auto& layout = batch[static_cast<std::size_t>(i)]->layout;
    gts.push_back(layout_boxes_xyxy(layout));
    flags.push_back(mask_tensor(batch[static_cast<std::size_t>(i)]->mask));
    std::vector<double> best_area(static_cast<std::size_t>(cells), 2.0);
    std::vector<int> owner(static_cast<std::size_t>(cells), -1);
    for (int e = 0; e < layout.size(); ++e) {
      const auto& el = layout.elements[static_cast<std::size_t>(e)];
      const double area = el.w * el.h;
      auto claim = [&](int64_t c) {
        if (area < best_area[static_cast<std::size_t>(c)]) {
          best_area[static_cast<std::size_t>(c)] = area;
          owner[static_cast<std::size_t>(c)] = e;
        }
      };
      for (int64_t c = 0; c < cells; ++c) {
        if (ca[c][0] > el.x && ca[c][0] < el.x + el.w && ca[c][1] > el.y && ca[c][1] < el.y + el.h) claim(c);
      }
      const auto cx = std::clamp<int64_t>(static_cast<int64_t>((el.x + 0.5 * el.w) * fw), 0, fw - 1);
      const auto cy = std::clamp<int64_t>(static_cast<int64_t>((el.y + 0.5 * el.h) * fh), 0, fh - 1);
      claim(cy * fw + cx);
    }
    auto ot = obj_t.accessor<float, 2>();
    auto bt = box_t.accessor<float, 3>();
    for (int64_t c = 0; c < cells; ++c) {
      const int e = owner[static_cast<std::size_t>(c)];
      if (e < 0) continue;
      const auto& el = layout.elements[static_cast<std::size_t>(e)];
      ot[i][c] = 1.f;
      bt[i][c][0] = static_cast<float>(ca[c][0] - el.x);
      bt[i][c][1] = static_cast<float>(ca[c][1] - el.y);
      bt[i][c][2] = static_cast<float>(el.x + el.w - ca[c][0]);
      bt[i][c][3] = static_cast<float>(el.y + el.h - ca[c][1]);
    }
  }
  L.rpn_objectness = torch::binary_cross_entropy_with_logits(f.obj, obj_t);
  const auto pos = obj_t > 0.5;
  {
    const auto p = f.ltrb.index({pos});
    const auto t = box_t.index({pos}).clamp_min(0);
    const auto inter = (torch::min(p.select(1, 0), t.select(1, 0)) + torch::min(p.select(1, 2), t.select(1, 2))) *
                       (torch::min(p.select(1, 1), t.select(1, 1)) + torch::min(p.select(1, 3), t.select(1, 3)));
    const auto area_p = (p.select(1, 0) + p.select(1, 2)) * (p.select(1, 1) + p.select(1, 3));
    const auto area_t = (t.select(1, 0) + t.select(1, 2)) * (t.select(1, 1) + t.select(1, 3));
    const auto iou_v = inter / (area_p + area_t - inter).clamp_min(1e-9);
    L.rpn_box = (1 - iou_v).mean();
  }

  // Second stage on proposals plus the ground-truth boxes.
  std::vector<torch::Tensor> rois;
  std::vector<torch::Tensor> obj_targets, delta_targets, positive;
  for (int64_t i = 0; i < b; ++i) {
    auto r = torch::cat({pixel_->proposals(f, i), gts[static_cast<std::size_t>(i)]}, 0);
    const auto overlap = box_iou_xyxy(r, gts[static_cast<std::size_t>(i)]);
    const auto [best, arg] = overlap.max(1);
    const auto is_pos = best >= 0.5;
    obj_targets.push_back(is_pos.to(torch::kFloat32));
    delta_targets.push_back(PixelLocatorImpl::encode_deltas(r, gts[static_cast<std::size_t>(i)].index_select(0, arg)));
    positive.push_back(is_pos);
    rois.push_back(r);
  }
  const auto h = pixel_->head(f, rois);
  const auto obj_target = torch::cat(obj_targets);
  const auto pos2 = torch::cat(positive);
  L.head_objectness = torch::binary_cross_entropy_with_logits(h.objectness, obj_target);
  L.head_box = torch::smooth_l1_loss(h.deltas.index({pos2}), torch::cat(delta_targets).index({pos2}));
  std::vector<torch::Tensor> settled;
  for (const auto& g : gts) {
    const auto w = (g.select(1, 2) - g.select(1, 0)).unsqueeze(1);
    const auto ht = (g.select(1, 3) - g.select(1, 1)).unsqueeze(1);
    const auto scale = torch::cat({w, ht, w, ht}, 1);
    settled.push_back((g + torch::randn_like(g) * kAttrJitter * scale).clamp(0.0, 1.0));
  }
  L.attributes = torch::binary_cross_entropy_with_logits(pixel_->attributes(f, settled), torch::cat(flags));
  L.total = L.rpn_objectness + L.rpn_box + L.head_objectness + L.head_box + L.attributes;
  return L;
}

// Training and evaluation -----------------------------------------------------

LocatorTrainReport train_locator(Locator& locator, const std::vector<LocatorRecord>& data, std::uint64_t seed,
                                 const std::function<void(int, double)>& progress) {
  require(!data.empty(), ErrorKind::Data, "cannot train a locator on an empty dataset");
  for (const auto& r : data) {
    require(r.layout.size() >= 1 && r.mask.size() == r.layout.size(), ErrorKind::Data,
            "locator record " + r.source_id + " has no element boxes or a mismatched mask");
  }
  const auto& cfg = locator.config();
  torch::manual_seed(seed);
  Rng rng(seed);
  auto& module = locator.module();
  torch::optim::AdamW opt(module.parameters(), torch::optim::AdamWOptions(cfg.lr)
                                                   .betas({cfg.beta1, cfg.beta2})
                                                   .weight_decay(cfg.weight_decay));
  locator.train_mode(true);
  LocatorTrainReport report;
  const auto start = std::chrono::steady_clock::now();
  const int batch = std::min<int>(cfg.batch, static_cast<int>(data.size()));
  for (int step = 1; step <= cfg.steps; ++step) {
    // Linear warmup, then cosine decay to a tenth of the peak rate.
    double lr = cfg.lr;
    if (step <= cfg.warmup) {
      lr = cfg.lr * step / std::max(1, cfg.warmup);
    } else {
      const double progress_frac = static_cast<double>(step - cfg.warmup) / std::max(1, cfg.steps - cfg.warmup);
      lr = cfg.lr * (0.1 + 0.9 * 0.5 * (1 + std::cos(M_PI * progress_frac)));
    }
    nn::set_learning_rate(opt, lr);
    std::vector<const LocatorRecord*> b;
    for (int i = 0; i < batch; ++i) b.push_back(&data[rng.below(data.size())]);
    opt.zero_grad();
    auto losses = locator.losses(b);
    losses.total.backward();
    torch::nn::utils::clip_grad_norm_(module.parameters(), 5.0);
    opt.step();
    report.losses.push_back(losses.total.item<double>());
    if (progress) progress(step, report.losses.back());
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  locator.train_seconds += report.seconds;
  locator.train_mode(false);
  return report;
}

nlohmann::ordered_json FlagScores::to_json() const {
  nlohmann::ordered_json j;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["true_positive"] = true_positive;
  j["false_positive"] = false_positive;
  j["false_negative"] = false_negative;
  return j;
}

FlagScores score_flags(const std::vector<MaskAnnotation>& predicted, const std::vector<MaskAnnotation>& truth) {
  require(predicted.size() == truth.size(), ErrorKind::Precondition, "prediction/label count mismatch");
  FlagScores s;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(predicted[i].size() == truth[i].size(), ErrorKind::Precondition, "prediction/label element mismatch");
    for (int e = 0; e < truth[i].size(); ++e) {
      for (std::size_t k = 0; k < 4; ++k) {
        const bool p = predicted[i].elements[static_cast<std::size_t>(e)].flags[k];
        const bool t = truth[i].elements[static_cast<std::size_t>(e)].flags[k];
        s.true_positive += p && t;
        s.false_positive += p && !t;
        s.false_negative += !p && t;
      }
    }
  }
  const auto tp = static_cast<double>(s.true_positive);
  s.precision = tp + s.false_positive > 0 ? tp / (tp + s.false_positive) : 0.0;
  s.recall = tp + s.false_negative > 0 ? tp / (tp + s.false_negative) : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

FlagScores evaluate_locator(Locator& locator, const std::vector<LocatorRecord>& data, int batch) {
  std::vector<MaskAnnotation> predicted, truth;
  for (std::size_t b = 0; b < data.size(); b += static_cast<std::size_t>(batch)) {
    std::vector<Layout> layouts;
    for (std::size_t i = b; i < std::min(data.size(), b + static_cast<std::size_t>(batch)); ++i) {
      layouts.push_back(data[i].layout);
      truth.push_back(data[i].mask);
    }
    for (auto& v : locator.locate(layouts)) predicted.push_back(std::move(v.flags));
  }
  return score_flags(predicted, truth);
}

// Checkpoints -----------------------------------------------------------------

void save_locator(const std::filesystem::path& path, Locator& locator) {
  nlohmann::ordered_json meta;
  meta["kind"] = "locator";
  meta["config"] = locator.config().to_json();
  meta["schema"] = schema_to_json(locator.schema());
  meta["train_seconds"] = locator.train_seconds;
  save_module(path, locator.module(), meta.dump());
}

std::unique_ptr<Locator> load_locator(const std::filesystem::path& path, const CategorySchema* expected) {
  torch::serialize::InputArchive archive;
  const auto meta = load_archive(path, archive, "locator");
  auto schema = schema_from_json(meta.at("schema"));
  if (expected) {
    require(expected->fingerprint() == schema.fingerprint(), ErrorKind::Config,
            "locator checkpoint " + path.string() + " was trained on a different schema");
  }
  auto loc = std::make_unique<Locator>(LocatorConfig::from_json(meta.at("config")), std::move(schema));
  load_module(archive, loc->module(), path);
  loc->train_mode(false);
  loc->train_seconds = meta.at("train_seconds").get<double>();
  return loc;
}

}  // namespace layoutgen
