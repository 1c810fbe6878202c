// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/models/features.hpp"

#include <chrono>
#include <cmath>

#include "layoutgen/corpus.hpp"
#include "layoutgen/error.hpp"
#include "layoutgen/layout_io.hpp"
#include "layoutgen/models/checkpoint.hpp"
#include "layoutgen/models/decoder.hpp"
#include "layoutgen/models/nn.hpp"
#include "layoutgen/rng.hpp"

namespace layoutgen {

FeatureSpace parse_feature_space(std::string_view name) {
  if (name == "seq") return FeatureSpace::Seq;
  if (name == "pixel") return FeatureSpace::Pixel;
  fail(ErrorKind::Config, "unknown feature space '" + std::string(name) + "' (seq|pixel)");
}

std::string_view to_string(FeatureSpace space) { return space == FeatureSpace::Seq ? "seq" : "pixel"; }

void FeatureConfig::validate() const {
  require(feature_dim >= 2 && steps >= 0 && batch >= 2 && lr > 0 && image_size >= 16, ErrorKind::Config,
          "feature extractor settings out of range");
  require(noise > 0.0 && noise <= 1.0, ErrorKind::Config, "metrics.fid_noise must lie in (0, 1]");
  require(recon_weight >= 0.0, ErrorKind::Config, "metrics.fid_recon_weight must be non-negative");
}

FeatureConfig FeatureConfig::from(const Config& cfg, FeatureSpace space) {
  FeatureConfig c;
  c.space = space;
  c.feature_dim = cfg.get_int("metrics.feature_dim");
  c.steps = cfg.get_int("metrics.fid_steps");
  c.batch = cfg.get_int("metrics.fid_batch");
  c.lr = cfg.get_double("metrics.fid_lr");
  c.noise = cfg.get_double("metrics.fid_noise");
  c.image_size = cfg.get_int("metrics.fid_image_size");
  c.recon_weight = cfg.get_double("metrics.fid_recon_weight");
  c.max_elements = cfg.get_int("decoder.max_elements");
  c.num_bins = cfg.get_int("decoder.bins");
  c.validate();
  return c;
}

nlohmann::ordered_json FeatureConfig::to_json() const {
  nlohmann::ordered_json j;
  j["space"] = to_string(space);
  j["feature_dim"] = feature_dim;
  j["steps"] = steps;
  j["batch"] = batch;
  j["lr"] = lr;
  j["noise"] = noise;
  j["image_size"] = image_size;
  j["recon_weight"] = recon_weight;
  j["max_elements"] = max_elements;
  j["num_bins"] = num_bins;
  return j;
}

FeatureConfig FeatureConfig::from_json(const nlohmann::json& j) {
  FeatureConfig c;
  c.space = parse_feature_space(j.at("space").get<std::string>());
  c.feature_dim = j.at("feature_dim").get<int>();
  c.steps = j.at("steps").get<int>();
  c.batch = j.at("batch").get<int>();
  c.lr = j.at("lr").get<double>();
  c.noise = j.at("noise").get<double>();
  c.image_size = j.at("image_size").get<int>();
  c.recon_weight = j.at("recon_weight").get<double>();
  c.max_elements = j.at("max_elements").get<int>();
  c.num_bins = j.at("num_bins").get<int>();
  c.validate();
  return c;
}

namespace {

constexpr int kSeqDim = 128;
constexpr int kValueFreqs = 8;

struct SeqNetImpl : torch::nn::Module {
  SeqNetImpl(const FeatureConfig& cfg, const Vocabulary& vocab)
      : first_bin(Vocabulary::kNumSpecial + vocab.num_categories()), num_bins(vocab.num_bins()) {
    value_proj = register_module("value_proj", torch::nn::Linear(2 * kValueFreqs, kSeqDim));
    token_emb = register_module("token_emb", torch::nn::Embedding(vocab.size(), kSeqDim));
    pos_emb = register_module("pos_emb", torch::nn::Embedding(sequence_length(cfg.max_elements), kSeqDim));
    blocks = register_module("blocks", torch::nn::ModuleList());
    for (int i = 0; i < 2; ++i) blocks->push_back(nn::Block(kSeqDim, 4, 4, 0.0, false));
    norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({kSeqDim})));
    feat = register_module("feat", torch::nn::Linear(kSeqDim, cfg.feature_dim));
  }
  torch::Tensor forward(const DecoderBatch& b) {
    const auto idx = torch::arange(b.tokens.size(1), torch::kLong);
    auto x = token_emb(b.tokens) + torch::embedding(pos_emb->weight, idx).unsqueeze(0);
    // Bin tokens also carry their value, so nearby bins start out with nearby inputs.
    const auto is_bin = (b.tokens >= first_bin).to(torch::kFloat32).unsqueeze(-1);
    const auto value = ((b.tokens - first_bin).clamp_min(0).to(torch::kFloat32) + 0.5) / num_bins;
    const auto freq = torch::pow(2.0, torch::arange(kValueFreqs, torch::kFloat32)) * M_PI;
    const auto a = value.unsqueeze(-1) * freq;
    x = x + is_bin * value_proj(torch::cat({torch::sin(a), torch::cos(a)}, -1));
    const std::optional<torch::Tensor> pad = b.padding;
    for (const auto& m : *blocks) x = m->as<nn::Block>()->forward(x, pad, std::nullopt);
    const auto keep = b.padding.logical_not().unsqueeze(-1).to(torch::kFloat32);
    const auto pooled = (norm(x) * keep).sum(1) / keep.sum(1).clamp_min(1.0);
    return torch::relu(feat(pooled));
  }
  int64_t first_bin, num_bins;
  torch::nn::Embedding token_emb{nullptr}, pos_emb{nullptr};
  torch::nn::Linear value_proj{nullptr};
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::LayerNorm norm{nullptr};
  torch::nn::Linear feat{nullptr};
};
TORCH_MODULE(SeqNet);

struct PixelNetImpl : torch::nn::Module {
  explicit PixelNetImpl(const FeatureConfig& cfg) {
    convs = register_module("convs", torch::nn::Sequential());
    int in = 3;
    for (int c : {16, 32, 64, 128}) {
      convs->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, c, 3).stride(2).padding(1)));
      convs->push_back(torch::nn::GroupNorm(torch::nn::GroupNormOptions(8, c)));
      convs->push_back(torch::nn::Functional(torch::relu));
      in = c;
    }
    feat = register_module("feat", torch::nn::Linear(in, cfg.feature_dim));
  }
  torch::Tensor forward(const torch::Tensor& images) {
    return torch::relu(feat(convs->forward(images).mean({2, 3})));
  }
  torch::nn::Sequential convs{nullptr};
  torch::nn::Linear feat{nullptr};
};
TORCH_MODULE(PixelNet);

}  // namespace

struct FeatureModel::Net : torch::nn::Module {
  Net(const FeatureConfig& cfg, const CategorySchema& schema) : vocab(schema, cfg.num_bins) {
    if (cfg.space == FeatureSpace::Seq) {
      seq = register_module("seq", SeqNet(cfg, vocab));
    } else {
      pixel = register_module("pixel", PixelNet(cfg));
    }
    classifier = register_module("classifier", torch::nn::Linear(cfg.feature_dim, 1));
    recon = register_module("recon", torch::nn::Linear(cfg.feature_dim, 4 * cfg.max_elements));
  }
  Vocabulary vocab;
  SeqNet seq{nullptr};
  PixelNet pixel{nullptr};
  torch::nn::Linear classifier{nullptr};
  torch::nn::Linear recon{nullptr};  // geometry of each element slot, position order
};

FeatureModel::FeatureModel(FeatureConfig config, CategorySchema schema)
    : config_(std::move(config)), schema_(std::move(schema)) {
  config_.validate();
  net_ = std::make_unique<Net>(config_, schema_);
  net_->eval();
}

FeatureModel::~FeatureModel() = default;
FeatureModel::FeatureModel(FeatureModel&&) noexcept = default;
FeatureModel& FeatureModel::operator=(FeatureModel&&) noexcept = default;

torch::nn::Module& FeatureModel::module() { return *net_; }

namespace {

const OrderSpec kFeatureOrder{ElementOrder::Position, 0};

torch::Tensor features_of(FeatureModel::Net& net, const FeatureConfig& cfg, const CategorySchema& schema,
                          const std::vector<Layout>& layouts) {
  if (net.seq) {
    std::vector<TokenSequence> seqs;
    for (const auto& l : layouts) seqs.push_back(encode(l, net.vocab, cfg.max_elements, kFeatureOrder));
    return net.seq->forward(make_batch(seqs, nullptr));
  }
  RenderOptions o;
  o.height = o.width = cfg.image_size;
  std::vector<WireframeImage> images;
  for (const auto& l : layouts) images.push_back(render(l, schema.size(), o).image);
  return net.pixel->forward(nn::images_to_tensor(images));
}

}  // namespace

torch::Tensor FeatureModel::logits(const std::vector<Layout>& layouts) {
  return net_->classifier(features_of(*net_, config_, schema_, layouts)).squeeze(-1);
}

Eigen::MatrixXd FeatureModel::embed(const std::vector<Layout>& layouts) {
  torch::NoGradGuard g;
  net_->eval();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(layouts.size()), config_.feature_dim);
  constexpr std::size_t kChunk = 256;
  for (std::size_t b = 0; b < layouts.size(); b += kChunk) {
    const std::vector<Layout> chunk(layouts.begin() + static_cast<std::ptrdiff_t>(b),
                                    layouts.begin() + static_cast<std::ptrdiff_t>(std::min(layouts.size(), b + kChunk)));
    const auto f = features_of(*net_, config_, schema_, chunk).to(torch::kFloat64).contiguous();
    const auto a = f.accessor<double, 2>();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      for (int k = 0; k < config_.feature_dim; ++k) {
        out(static_cast<Eigen::Index>(b + i), k) = a[static_cast<int64_t>(i)][k];
      }
    }
  }
  return out;
}

std::string FeatureModel::hash() {
  if (hash_.empty()) {
    hash_ = hex64(fnv1a64(config_.to_json().dump() + nn::parameter_digest(*net_) + std::to_string(schema_.fingerprint())));
  }
  return hash_;
}

FeatureTrainReport train_feature_extractor(FeatureModel& model, const std::vector<Layout>& real, std::uint64_t seed) {
  require(!real.empty(), ErrorKind::Data, "cannot train a feature extractor on an empty corpus");
  const auto& cfg = model.config();
  torch::manual_seed(seed);
  Rng rng(seed);
  PerturbConfig pc;
  pc.noise = cfg.noise;
  pc.num_bins = cfg.num_bins;
  auto& module = model.module();
  auto& net = model.net();
  torch::optim::AdamW opt(module.parameters(), torch::optim::AdamWOptions(cfg.lr).weight_decay(0.01));
  module.train();
  FeatureTrainReport report;
  const auto start = std::chrono::steady_clock::now();
  const int half = cfg.batch / 2;
  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<Layout> batch;
    for (int i = 0; i < half; ++i) batch.push_back(real[rng.below(real.size())]);
    for (int i = 0; i < half; ++i) {
      // Copies whose perturbation changed nothing would be labeled fake while
      // being real, so redraw until at least one attribute moved.
      for (int attempt = 0;; ++attempt) {
        auto p = perturb(real[rng.below(real.size())], pc, rng.next());
        if (p.flags.count() > 0 || attempt == 8) {
          batch.push_back(std::move(p.layout));
          break;
        }
      }
    }
    auto target = torch::cat({torch::zeros({half}), torch::ones({half})});
    // Reconstruction of the input geometry keeps magnitude information in the
    // features; the classifier alone saturates once a layout looks perturbed.
    auto geometry = torch::zeros({static_cast<int64_t>(batch.size()), cfg.max_elements, 4});
    auto present = torch::zeros({static_cast<int64_t>(batch.size()), cfg.max_elements, 1});
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto sorted = sort_elements(batch[b], kFeatureOrder);
      for (int e = 0; e < std::min(sorted.size(), cfg.max_elements); ++e) {
        present[static_cast<int64_t>(b)][e][0] = 1.0f;
        for (int k = 0; k < 4; ++k) {
          geometry[static_cast<int64_t>(b)][e][k] = static_cast<float>(sorted.elements[static_cast<std::size_t>(e)].attr(k));
        }
      }
    }
    opt.zero_grad();
    const auto feats = features_of(net, cfg, model.schema(), batch);
    const auto logits = net.classifier(feats).squeeze(-1);
    const auto predicted = net.recon(feats).view({-1, cfg.max_elements, 4});
    const auto recon_loss = ((predicted - geometry).pow(2) * present).sum() / (present.sum() * 4).clamp_min(1.0);
    const auto loss = torch::binary_cross_entropy_with_logits(logits, target) + cfg.recon_weight * recon_loss;
    loss.backward();
    opt.step();
    report.losses.push_back(loss.item<double>());
    report.final_accuracy = ((logits > 0).to(torch::kFloat32) == target).to(torch::kFloat32).mean().item<double>();
  }
  module.eval();
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

FeatureStats feature_stats(FeatureModel& model, const std::vector<Layout>& layouts) {
  require(layouts.size() >= 2, ErrorKind::Precondition, "FID needs at least two layouts per side");
  FeatureStats s;
  s.gaussian = fit_gaussian(model.embed(layouts));
  s.samples = static_cast<int>(layouts.size());
  s.model_hash = model.hash();
  return s;
}

double fid(const FeatureStats& generated, const FeatureStats& real) {
  require(generated.model_hash == real.model_hash, ErrorKind::Config,
          "feature model mismatch: " + generated.model_hash + " vs " + real.model_hash);
  return frechet_distance(generated.gaussian, real.gaussian);
}

double fid(FeatureModel& model, const std::vector<Layout>& generated, const std::vector<Layout>& real,
           bool* low_sample_warning) {
  if (low_sample_warning) {
    *low_sample_warning = static_cast<int>(std::min(generated.size(), real.size())) < model.config().feature_dim;
  }
  return fid(feature_stats(model, generated), feature_stats(model, real));
}

void save_feature_model(const std::filesystem::path& path, FeatureModel& model) {
  nlohmann::ordered_json meta;
  meta["kind"] = "features";
  meta["config"] = model.config().to_json();
  meta["schema"] = schema_to_json(model.schema());
  meta["hash"] = model.hash();
  save_module(path, model.module(), meta.dump());
}

FeatureModel load_feature_model(const std::filesystem::path& path, const CategorySchema* expected) {
  torch::serialize::InputArchive archive;
  const auto meta = load_archive(path, archive, "features");
  auto schema = schema_from_json(meta.at("schema"));
  if (expected) {
    require(expected->fingerprint() == schema.fingerprint(), ErrorKind::Config,
            "feature model " + path.string() + " was trained on a different schema");
  }
  FeatureModel model(FeatureConfig::from_json(meta.at("config")), std::move(schema));
  load_module(archive, model.module(), path);
  model.module().eval();
  require(model.hash() == meta.at("hash").get<std::string>(), ErrorKind::Config,
          "feature model " + path.string() + " does not match its recorded hash");
  return model;
}

}  // namespace layoutgen
