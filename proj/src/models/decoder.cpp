// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/models/decoder.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "layoutgen/error.hpp"
#include "layoutgen/layout_io.hpp"
#include "layoutgen/models/checkpoint.hpp"

namespace layoutgen {

// Config ----------------------------------------------------------------------

void DecoderConfig::validate() const {
  require(num_layers >= 1, ErrorKind::Config, "decoder needs at least one layer");
  require(num_heads >= 1 && model_dim % num_heads == 0, ErrorKind::Config,
          "decoder model_dim must be divisible by num_heads");
  require(max_elements >= 1, ErrorKind::Config, "max_elements must be positive");
  require(num_bins >= 2, ErrorKind::Config, "need at least two coordinate bins");
  require(image_size >= 16, ErrorKind::Config, "decoder image_size too small");
  require(batch >= 1 && steps >= 0, ErrorKind::Config, "bad decoder batch/steps");
  require(geometry_only_prob >= 0.0 && geometry_only_prob <= 1.0, ErrorKind::Config,
          "geometry_only_prob must be a probability");
}

DecoderConfig DecoderConfig::from(const Config& cfg) {
  DecoderConfig c;
  c.profile = cfg.get("decoder.profile");
  c.num_layers = cfg.get_int("decoder.layers");
  c.num_heads = cfg.get_int("decoder.heads");
  c.model_dim = cfg.get_int("decoder.dim");
  c.ff_mult = cfg.get_int("decoder.ff_mult");
  c.dropout = cfg.get_double("decoder.dropout");
  c.max_elements = cfg.get_int("decoder.max_elements");
  c.num_bins = cfg.get_int("decoder.bins");
  c.image_size = cfg.get_int("decoder.image_size");
  c.image_channels = cfg.get_int_list("decoder.image_channels");
  c.use_wireframe = cfg.get_bool("decoder.use_wireframe");
  c.warmup = cfg.get_int("decoder.warmup");
  c.lr = cfg.get_double("decoder.lr");
  c.batch = cfg.get_int("decoder.batch");
  c.steps = cfg.get_int("decoder.steps");
  c.beta1 = cfg.get_double("decoder.beta1");
  c.beta2 = cfg.get_double("decoder.beta2");
  c.weight_decay = cfg.get_double("decoder.weight_decay");
  c.geometry_only_prob = cfg.get_double("decoder.geometry_only_prob");
  c.order = parse_element_order(cfg.get("decoder.order"));
  if (c.profile == "desk") {
    c.num_layers = 2;
    c.model_dim = 128;
    c.num_heads = 4;
    // A 2000-step desk run never leaves a 4000-step warmup at 5e-5.
    c.warmup = cfg.get_int("decoder.desk_warmup");
    c.lr = cfg.get_double("decoder.desk_lr");
    // Same four stride-2 blocks over a 112 px wireframe: a 7x7 grid at a quarter
    // of the convolution and cross-attention cost.
    c.image_size = cfg.get_int("decoder.desk_image_size");
    c.image_channels = cfg.get_int_list("decoder.desk_image_channels");
  } else if (c.profile == "full") {
    c.num_layers = 4;
    c.model_dim = 512;
    c.num_heads = 8;
  } else {
    require(c.profile == "custom", ErrorKind::Config, "decoder.profile must be desk, full or custom");
  }
  c.validate();
  return c;
}

nlohmann::ordered_json DecoderConfig::to_json() const {
  nlohmann::ordered_json j;
  j["profile"] = profile;
  j["num_layers"] = num_layers;
  j["num_heads"] = num_heads;
  j["model_dim"] = model_dim;
  j["ff_mult"] = ff_mult;
  j["dropout"] = dropout;
  j["max_elements"] = max_elements;
  j["num_bins"] = num_bins;
  j["image_size"] = image_size;
  j["image_channels"] = image_channels;
  j["use_wireframe"] = use_wireframe;
  j["warmup"] = warmup;
  j["lr"] = lr;
  j["batch"] = batch;
  j["steps"] = steps;
  j["betas"] = {beta1, beta2};
  j["weight_decay"] = weight_decay;
  j["geometry_only_prob"] = geometry_only_prob;
  j["order"] = std::string(to_string(order));
  return j;
}

DecoderConfig DecoderConfig::from_json(const nlohmann::json& j) {
  DecoderConfig c;
  c.profile = j.at("profile").get<std::string>();
  c.num_layers = j.at("num_layers").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.model_dim = j.at("model_dim").get<int>();
  c.ff_mult = j.at("ff_mult").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.max_elements = j.at("max_elements").get<int>();
  c.num_bins = j.at("num_bins").get<int>();
  c.image_size = j.at("image_size").get<int>();
  c.image_channels = j.at("image_channels").get<std::vector<int>>();
  c.use_wireframe = j.at("use_wireframe").get<bool>();
  c.warmup = j.at("warmup").get<int>();
  c.lr = j.at("lr").get<double>();
  c.batch = j.at("batch").get<int>();
  c.steps = j.at("steps").get<int>();
  c.beta1 = j.at("betas").at(0).get<double>();
  c.beta2 = j.at("betas").at(1).get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.geometry_only_prob = j.at("geometry_only_prob").get<double>();
  c.order = parse_element_order(j.at("order").get<std::string>());
  c.validate();
  return c;
}

RenderOptions decoder_render_options(const DecoderConfig& config) {
  RenderOptions o;
  o.height = o.width = config.image_size;
  return o;
}

// Model -----------------------------------------------------------------------

LayoutDecoderImpl::LayoutDecoderImpl(DecoderConfig config, Vocabulary vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.validate();
  require(vocab_.num_bins() == config_.num_bins, ErrorKind::Config, "vocabulary bin count differs from config");
  const int d = config_.model_dim;
  const int lmax = config_.max_length();
  token_emb = register_module("token_emb", torch::nn::Embedding(vocab_.size(), d));
  pos_emb = register_module("pos_emb", torch::nn::Embedding(lmax, d));
  element_emb = register_module("element_emb", torch::nn::Embedding(config_.max_elements + 1, d));
  count_emb = register_module("count_emb", torch::nn::Embedding(config_.max_elements + 1, d));
  for (auto* e : {&token_emb, &pos_emb, &element_emb, &count_emb}) {
    torch::nn::init::normal_((*e)->weight, 0.0, 0.02);
  }
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int i = 0; i < config_.num_layers; ++i) {
    blocks->push_back(nn::Block(d, config_.num_heads, config_.ff_mult, config_.dropout, config_.use_wireframe));
  }
  if (config_.use_wireframe) {
    image_encoder = register_module("image_encoder", nn::ImageEncoder(config_.image_channels, config_.image_size, d));
  }
  final_norm = register_module("final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  head = register_module("head", torch::nn::Linear(d, vocab_.size()));

  auto valid = torch::zeros({lmax, vocab_.size()}, torch::kBool);
  valid[0][Vocabulary::kBos] = true;
  valid[lmax - 1][Vocabulary::kEos] = true;
  for (int p = 1; p < lmax - 1; ++p) {
    const auto slot = slot_kind_at(p, config_.max_elements);
    const auto [first, count] = vocab_.slot_range(slot);
    valid[p].slice(0, first, first + count).fill_(true);
  }
  slot_valid_ = register_buffer("slot_valid", valid);
}

torch::Tensor LayoutDecoderImpl::positional(int64_t length, const torch::Tensor& counts) const {
  require(length <= config_.max_length(), ErrorKind::Config, "sequence longer than the decoder supports");
  const auto idx = torch::arange(length, torch::kLong);
  const auto n = counts.view({-1, 1});
  const auto inside = (idx.view({1, -1}) >= 1) & (idx.view({1, -1}) <= 5 * n);
  const auto element = torch::where(inside, torch::div(idx.view({1, -1}) - 1, 5, "floor"),
                                    torch::full({1, 1}, config_.max_elements, torch::kLong));
  return torch::embedding(pos_emb->weight, idx).unsqueeze(0) + torch::embedding(element_emb->weight, element) +
         torch::embedding(count_emb->weight, counts).unsqueeze(1);
}

torch::Tensor LayoutDecoderImpl::forward(const DecoderBatch& batch) {
  const auto b = batch.tokens.size(0);
  const auto l = batch.tokens.size(1);
  auto x = token_emb(batch.tokens) + positional(l, batch.counts);
  std::optional<torch::Tensor> memory;
  if (config_.use_wireframe) {
    torch::Tensor images = batch.images;
    if (!images.defined()) {
      images = torch::ones({b, 3, config_.image_size, config_.image_size}, x.options());
    }
    require(images.size(2) == config_.image_size && images.size(3) == config_.image_size, ErrorKind::Config,
            "wireframe resolution differs from decoder.image_size");
    memory = image_encoder(images.to(x.dtype()));
  }
  const std::optional<torch::Tensor> padding = batch.padding;
  for (const auto& m : *blocks) x = m->as<nn::Block>()->forward(x, padding, memory);
  auto logits = head(final_norm(x));
  return logits.masked_fill(slot_valid_.slice(0, 0, l).logical_not().unsqueeze(0),
                            -std::numeric_limits<double>::infinity());
}

void LayoutDecoderImpl::keep_attention(bool on) {
  for (const auto& m : *blocks) {
    auto* blk = m->as<nn::Block>();
    if (blk->has_cross) blk->cross_attn->keep_weights = on;
  }
}

std::vector<torch::Tensor> LayoutDecoderImpl::cross_attention_weights() const {
  std::vector<torch::Tensor> out;
  for (const auto& m : *blocks) {
    const auto* blk = m->as<nn::Block>();
    if (blk->has_cross) out.push_back(blk->cross_attn->last_weights);
  }
  return out;
}

// Batching and masking ------------------------------------------------------

DecoderBatch make_batch(const std::vector<TokenSequence>& seqs, const std::vector<WireframeImage>* images) {
  require(!seqs.empty(), ErrorKind::Precondition, "empty decoder batch");
  int l = 0;
  for (const auto& s : seqs) l = std::max(l, s.size());
  const auto b = static_cast<int64_t>(seqs.size());
  DecoderBatch out;
  out.tokens = torch::full({b, l}, Vocabulary::kPad, torch::kLong);
  out.padding = torch::ones({b, l}, torch::kBool);
  out.counts = torch::empty({b}, torch::kLong);
  auto tok = out.tokens.accessor<int64_t, 2>();
  auto pad = out.padding.accessor<bool, 2>();
  for (int64_t i = 0; i < b; ++i) {
    const auto& s = seqs[static_cast<std::size_t>(i)];
    out.counts[i] = s.n;
    for (int p = 0; p < s.size(); ++p) {
      tok[i][p] = s.masked[static_cast<std::size_t>(p)] ? Vocabulary::kMask : s.ids[static_cast<std::size_t>(p)];
      pad[i][p] = false;
    }
  }
  if (images) {
    require(images->size() == seqs.size(), ErrorKind::Precondition, "one wireframe per sequence expected");
    out.images = nn::images_to_tensor(*images);
  }
  return out;
}

void sample_training_mask(TokenSequence& seq, Rng& rng, double geometry_only_prob) {
  const bool geometry_only = rng.bernoulli(geometry_only_prob);
  std::vector<int> maskable;
  for (int p = 0; p < seq.size(); ++p) {
    const auto k = seq.kinds[static_cast<std::size_t>(p)];
    if (k == SlotKind::Special || seq.conditioned[static_cast<std::size_t>(p)]) continue;
    if (geometry_only && !is_geometry(k)) continue;
    maskable.push_back(p);
  }
  require(!maskable.empty(), ErrorKind::Precondition, "sequence has no maskable positions");
  const double r = 1.0 - rng.uniform();  // (0, 1]
  const auto m = static_cast<int>(maskable.size());
  const int count = std::clamp(static_cast<int>(std::ceil(r * m)), 1, m);
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(m - i)));
    std::swap(maskable[static_cast<std::size_t>(i)], maskable[static_cast<std::size_t>(j)]);
    seq.mask(maskable[static_cast<std::size_t>(i)]);
  }
}

torch::Tensor masked_loss(const torch::Tensor& logits, const torch::Tensor& targets, const torch::Tensor& mask) {
  const auto logp = torch::log_softmax(logits, -1);
  const auto nll = -logp.gather(-1, targets.unsqueeze(-1)).squeeze(-1);
  return nll.masked_select(mask).mean();
}

TrainingSample draw_training_batch(const std::vector<Layout>& corpus, const DecoderConfig& config,
                                   const Vocabulary& vocab, int batch_size, Rng& rng) {
  require(!corpus.empty(), ErrorKind::Data, "empty training corpus");
  std::vector<TokenSequence> seqs;
  std::vector<TokenSequence> truth;
  std::vector<WireframeImage> images;
  const auto opts = decoder_render_options(config);
  for (int i = 0; i < batch_size; ++i) {
    const auto& layout = corpus[static_cast<std::size_t>(rng.below(corpus.size()))];
    auto seq = encode(layout, vocab, config.max_elements, {config.order, rng.next()});
    truth.push_back(seq);
    sample_training_mask(seq, rng, config.geometry_only_prob);
    if (config.use_wireframe) images.push_back(render(seq, vocab, opts).image);
    seqs.push_back(std::move(seq));
  }
  TrainingSample s;
  s.batch = make_batch(seqs, config.use_wireframe ? &images : nullptr);
  s.targets = make_batch(truth, nullptr).tokens;
  s.mask = torch::zeros_like(s.batch.padding);
  auto m = s.mask.accessor<bool, 2>();
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    for (int p = 0; p < seqs[i].size(); ++p) m[static_cast<int64_t>(i)][p] = seqs[i].masked[static_cast<std::size_t>(p)] != 0;
  }
  return s;
}

DecoderTrainReport train_decoder(LayoutDecoder& model, const std::vector<Layout>& corpus, std::uint64_t seed,
                                 const std::function<void(int, double)>& progress) {
  require(!corpus.empty(), ErrorKind::Data, "cannot train the decoder on an empty corpus");
  const auto& cfg = model->config();
  Rng rng(seed);
  torch::optim::AdamW opt(model->parameters(), torch::optim::AdamWOptions(cfg.lr)
                                                   .betas({cfg.beta1, cfg.beta2})
                                                   .weight_decay(cfg.weight_decay));
  model->train();
  DecoderTrainReport report;
  const auto start = std::chrono::steady_clock::now();
  for (int step = 1; step <= cfg.steps; ++step) {
    nn::set_learning_rate(opt, nn::warmup_inverse_sqrt(step, cfg.warmup, cfg.lr));
    auto sample = draw_training_batch(corpus, cfg, model->vocab(), cfg.batch, rng);
    opt.zero_grad();
    auto loss = masked_loss(model->forward(sample.batch), sample.targets, sample.mask);
    loss.backward();
    torch::nn::utils::clip_grad_norm_(model->parameters(), 1.0);
    opt.step();
    report.losses.push_back(loss.item<double>());
    if (progress) progress(step, report.losses.back());
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  model->eval();
  return report;
}

// Inference -------------------------------------------------------------------

std::vector<MaskedPrediction> predict_masked(LayoutDecoder& model, const std::vector<TokenSequence>& seqs,
                                             const std::vector<WireframeImage>* images) {
  std::vector<MaskedPrediction> out(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    out[i].filled = seqs[i];
    out[i].confidence.assign(static_cast<std::size_t>(seqs[i].size()), 0.0);
  }
  if (seqs.empty()) return out;
  torch::NoGradGuard no_grad;
  model->eval();
  const auto batch = make_batch(seqs, model->config().use_wireframe ? images : nullptr);
  const auto probs = torch::softmax(model->forward(batch).to(torch::kDouble), -1);
  const auto [best, arg] = probs.max(-1);
  const auto best_a = best.accessor<double, 2>();
  const auto arg_a = arg.accessor<int64_t, 2>();
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    auto& pred = out[i];
    for (int p = 0; p < seqs[i].size(); ++p) {
      if (!seqs[i].masked[static_cast<std::size_t>(p)]) continue;
      const auto bi = static_cast<int64_t>(i);
      const int token = static_cast<int>(arg_a[bi][p]);
      if (!model->vocab().valid_for_slot(token, seqs[i].kinds[static_cast<std::size_t>(p)])) {
        fail(ErrorKind::Invariant, "decoder emitted a token outside its slot");
      }
      pred.filled.ids[static_cast<std::size_t>(p)] = token;
      pred.filled.masked[static_cast<std::size_t>(p)] = 0;
      pred.confidence[static_cast<std::size_t>(p)] = best_a[bi][p];
      pred.replaced.push_back(p);
    }
  }
  return out;
}

MaskedPrediction predict_masked(LayoutDecoder& model, const TokenSequence& seq, const WireframeImage* image) {
  std::vector<WireframeImage> images;
  if (image) images.push_back(*image);
  return predict_masked(model, std::vector<TokenSequence>{seq}, image ? &images : nullptr).front();
}

// Checkpoints -----------------------------------------------------------------

void save_decoder(const std::filesystem::path& path, const DecoderBundle& bundle) {
  nlohmann::ordered_json meta;
  meta["kind"] = "decoder";
  meta["config"] = bundle.model->config().to_json();
  meta["schema"] = schema_to_json(bundle.schema);
  meta["vocab_fingerprint"] = hex64(bundle.model->vocab().fingerprint());
  meta["count_histogram"] = bundle.count_histogram;
  meta["train_seconds"] = bundle.train_seconds;
  meta["data_hash"] = bundle.data_hash;
  save_module(path, *bundle.model, meta.dump());
}

DecoderBundle load_decoder(const std::filesystem::path& path, const CategorySchema* expected) {
  torch::serialize::InputArchive archive;
  const auto meta = load_archive(path, archive, "decoder");
  DecoderBundle b;
  b.schema = schema_from_json(meta.at("schema"));
  const auto config = DecoderConfig::from_json(meta.at("config"));
  const Vocabulary vocab(b.schema, config.num_bins);
  require(hex64(vocab.fingerprint()) == meta.at("vocab_fingerprint").get<std::string>(), ErrorKind::Config,
          "decoder checkpoint vocabulary hash is inconsistent with its schema");
  if (expected) {
    const Vocabulary want(*expected, config.num_bins);
    require(want.fingerprint() == vocab.fingerprint(), ErrorKind::Config,
            "vocabulary hash mismatch: checkpoint " + path.string() + " was trained on a different schema");
  }
  b.model = LayoutDecoder(config, vocab);
  load_module(archive, *b.model, path);
  b.model->eval();
  b.count_histogram = meta.at("count_histogram").get<std::vector<int>>();
  b.train_seconds = meta.at("train_seconds").get<double>();
  b.data_hash = meta.at("data_hash").get<std::string>();
  return b;
}

// Gradient check --------------------------------------------------------------

std::vector<GradCheckEntry> gradient_check(const DecoderConfig& config, const CategorySchema& schema,
                                           const std::vector<Layout>& layouts, int count, std::uint64_t seed,
                                           double eps) {
  torch::manual_seed(seed);
  const Vocabulary vocab(schema, config.num_bins);
  LayoutDecoder model(config, vocab);
  model->to(torch::kDouble);
  model->train();
  Rng rng(seed);
  auto sample = draw_training_batch(layouts, config, vocab, std::min<int>(4, static_cast<int>(layouts.size())), rng);
  if (sample.batch.images.defined()) sample.batch.images = sample.batch.images.to(torch::kDouble);

  auto loss_value = [&] {
    torch::NoGradGuard g;
    return masked_loss(model->forward(sample.batch), sample.targets, sample.mask).item<double>();
  };
  model->zero_grad();
  masked_loss(model->forward(sample.batch), sample.targets, sample.mask).backward();

  std::vector<std::pair<std::string, torch::Tensor>> pool;
  for (const auto& p : model->named_parameters()) {
    if (p.value().grad().defined()) pool.emplace_back(p.key(), p.value());
  }
  std::vector<GradCheckEntry> out;
  int attempts = 0;
  while (static_cast<int>(out.size()) < count && attempts < 100000) {
    ++attempts;
    auto& [name, param] = pool[rng.below(pool.size())];
    const auto idx = static_cast<int64_t>(rng.below(static_cast<std::uint64_t>(param.numel())));
    const double analytic = param.grad().view(-1)[idx].item<double>();
    // Coordinates with vanishing gradients carry no signal under finite differences.
    if (std::abs(analytic) < 1e-5) continue;
    auto flat = param.data().view(-1);
    const double orig = flat[idx].item<double>();
    flat[idx] = orig + eps;
    const double up = loss_value();
    flat[idx] = orig - eps;
    const double down = loss_value();
    flat[idx] = orig;
    GradCheckEntry e;
    e.parameter = name;
    e.index = idx;
    e.analytic = analytic;
    e.numeric = (up - down) / (2 * eps);
    e.relative_error = std::abs(e.analytic - e.numeric) / std::max(std::abs(e.analytic), std::abs(e.numeric));
    out.push_back(e);
  }
  return out;
}

}  // namespace layoutgen
