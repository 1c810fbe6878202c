// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/models/checkpoint.hpp"

#include <cstdio>

#include "layoutgen/error.hpp"

namespace layoutgen {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void save_module(const std::filesystem::path& path, const torch::nn::Module& module, const std::string& meta_json) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  torch::serialize::OutputArchive archive;
  module.save(archive);
  archive.write("meta", c10::IValue(meta_json));
  // Write to a sibling and rename so readers never observe a partial file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  try {
    archive.save_to(tmp.string());
  } catch (const c10::Error& e) {
    fail(ErrorKind::Io, "cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json load_archive(const std::filesystem::path& path, torch::serialize::InputArchive& archive,
                            const std::string& expected_kind) {
  require(std::filesystem::exists(path), ErrorKind::Io, "checkpoint not found: " + path.string());
  c10::IValue meta;
  try {
    archive.load_from(path.string());
    require(archive.try_read("meta", meta), ErrorKind::Data, "checkpoint has no metadata: " + path.string());
  } catch (const c10::Error& e) {
    fail(ErrorKind::Data, "cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(meta.toStringRef());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Data, "corrupt checkpoint metadata in " + path.string() + ": " + e.what());
  }
  require(j.value("kind", "") == expected_kind, ErrorKind::Config,
          path.string() + " is a " + j.value("kind", "?") + " checkpoint, expected " + expected_kind);
  return j;
}

void load_module(torch::serialize::InputArchive& archive, torch::nn::Module& module,
                 const std::filesystem::path& path) {
  try {
    module.load(archive);
  } catch (const c10::Error& e) {
    fail(ErrorKind::Data, "checkpoint " + path.string() + " does not fit the model: " + e.what_without_backtrace());
  }
}

}  // namespace layoutgen
