// SPDX-License-Identifier: Apache-2.0
//
// Single-file checkpoints: module weights plus a JSON metadata string.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace layoutgen {

std::string hex64(std::uint64_t v);

void save_module(const std::filesystem::path& path, const torch::nn::Module& module, const std::string& meta_json);

/// Opens the archive and returns its metadata; the "kind" entry must equal expected_kind.
nlohmann::json load_archive(const std::filesystem::path& path, torch::serialize::InputArchive& archive,
                            const std::string& expected_kind);

void load_module(torch::serialize::InputArchive& archive, torch::nn::Module& module,
                 const std::filesystem::path& path);

}  // namespace layoutgen
