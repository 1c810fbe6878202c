// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/config.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "layoutgen/error.hpp"
#include "layoutgen/layout_io.hpp"
#include "layoutgen/rng.hpp"

namespace layoutgen {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

Config::Config() {
  values_ = {
      // decoder (full-scale defaults; the desk profile overrides width/depth)
      {"decoder.profile", "desk"},
      {"decoder.layers", "4"},
      {"decoder.heads", "8"},
      {"decoder.dim", "512"},
      {"decoder.ff_mult", "4"},
      {"decoder.dropout", "0.0"},
      {"decoder.max_elements", "9"},
      {"decoder.bins", "128"},
      {"decoder.image_size", "224"},
      {"decoder.image_channels", "8,16,32,64"},
      {"decoder.use_wireframe", "true"},
      {"decoder.warmup", "4000"},
      {"decoder.lr", "5e-5"},
      {"decoder.batch", "128"},
      {"decoder.steps", "2000"},
      {"decoder.beta1", "0.9"},
      {"decoder.beta2", "0.98"},
      {"decoder.weight_decay", "0.01"},
      {"decoder.geometry_only_prob", "0.5"},
      {"decoder.order", "category"},
      {"decoder.desk_lr", "1e-3"},
      {"decoder.desk_warmup", "200"},
      {"decoder.desk_image_size", "112"},
      {"decoder.desk_image_channels", "8,16,32,64"},
      // locator
      {"locator.profile", "desk"},
      {"locator.kind", "pixel"},
      {"locator.depth", "18"},
      {"locator.width", "16"},
      {"locator.image_size", "224"},
      {"locator.proposals", "48"},
      {"locator.head_width", "256"},
      {"locator.lr", "1e-4"},
      {"locator.batch", "128"},
      {"locator.steps", "1500"},
      {"locator.warmup", "100"},
      {"locator.beta1", "0.9"},
      {"locator.beta2", "0.98"},
      {"locator.weight_decay", "0.01"},
      {"locator.tau", "0.3"},
      {"locator.score_threshold", "0.5"},
      {"locator.nms_iou", "0.5"},
      {"locator.tagger_layers", "2"},
      {"locator.tagger_dim", "128"},
      {"locator.tagger_heads", "4"},
      {"locator.desk_image_size", "112"},
      {"locator.desk_batch", "32"},
      {"locator.desk_lr", "1e-3"},
      {"locator.desk_steps", "1200"},
      // matcher
      {"matcher.alpha1", "10000"},
      {"matcher.alpha2", "64"},
      {"matcher.alpha3", "32"},
      {"matcher.alpha4", "32"},
      {"matcher.delta", "0.04"},
      {"matcher.candidate_cap", "32"},
      {"matcher.iterations", "1,2,4"},
      {"matcher.decoder_iters", "10"},
      // metrics
      {"metrics.feature_dim", "256"},
      {"metrics.fid_noise", "0.2"},
      {"metrics.fid_steps", "600"},
      {"metrics.fid_batch", "64"},
      {"metrics.fid_lr", "1e-3"},
      {"metrics.fid_image_size", "64"},
      {"metrics.fid_recon_weight", "1.0"},
      // toy probe
      {"probe.noises", "0.1,0.2,0.5"},
      {"probe.element_prob", "0.5"},
      {"probe.attribute_prob", "0.5"},
      {"probe.train_size", "4000"},
      {"probe.test_size", "500"},
      {"probe.pixel_steps", "1200"},
      {"probe.object_steps", "1500"},
      {"probe.object_lr", "1e-3"},
      // synthetic corpus
      {"synth.count", "5000"},
      {"synth.jitter", "0.0"},
      {"synth.min_columns", "1"},
      {"synth.max_columns", "2"},
      // generation
      {"generate.iters", "10"},
      {"generate.batch", "64"},
      {"generate.flood_fraction", "0.8"},
      {"generate.flood_keep", "0.5"},
  };
}

void Config::load_file(const std::filesystem::path& path) { parse(read_text_file(path), path.string()); }

void Config::parse(std::string_view text, std::string_view origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    require(eq != std::string::npos, ErrorKind::Config,
            std::string(origin) + ":" + std::to_string(lineno) + ": expected key=value");
    try {
      set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    } catch (const Error& e) {
      fail(ErrorKind::Config, std::string(origin) + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorKind::Config, "unknown configuration key '" + key + "'");
  it->second = value;
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  require(it != values_.end(), ErrorKind::Config, "unknown configuration key '" + key + "'");
  return it->second;
}

std::int64_t Config::get_int64(const std::string& key) const {
  const std::string& v = get(key);
  std::int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc{} && p == v.data() + v.size(), ErrorKind::Config,
          "key '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

int Config::get_int(const std::string& key) const { return static_cast<int>(get_int64(key)); }

double Config::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    require(used == v.size(), ErrorKind::Config, "trailing characters");
    return d;
  } catch (const std::exception&) {
    fail(ErrorKind::Config, "key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::Config, "key '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(trim(item)));
    } catch (const std::exception&) {
      fail(ErrorKind::Config, "key '" + key + "' expects a comma-separated list of numbers");
    }
  }
  return out;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (double d : get_double_list(key)) {
    require(d == static_cast<int>(d), ErrorKind::Config, "key '" + key + "' expects integers");
    out.push_back(static_cast<int>(d));
  }
  return out;
}

std::map<std::string, std::string> Config::section(std::string_view prefix) const {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : values_) {
    if (k.rfind(prefix, 0) == 0) out.emplace(k, v);
  }
  return out;
}

std::string Config::hash(std::string_view prefix) const {
  std::uint64_t h = fnv1a64("config");
  for (const auto& [k, v] : section(prefix)) {
    h = fnv1a64(k, h);
    h = fnv1a64("=", h);
    h = fnv1a64(v, h);
    h = fnv1a64("\n", h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace layoutgen
