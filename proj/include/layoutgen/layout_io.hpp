// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "layoutgen/layout.hpp"

namespace layoutgen {

using ojson = nlohmann::ordered_json;

/// {"id": str, "canvas": [W,H], "elements": [{"category": str, "bbox": [x,y,w,h]}, ...]}
ojson layout_to_json(const Layout& layout, const CategorySchema& schema);
Layout layout_from_json(const nlohmann::json& j, const CategorySchema& schema);

ojson schema_to_json(const CategorySchema& schema);
CategorySchema schema_from_json(const nlohmann::json& j);
CategorySchema load_schema(const std::filesystem::path& path);
void save_schema(const std::filesystem::path& path, const CategorySchema& schema);

std::string to_jsonl(const std::vector<Layout>& layouts, const CategorySchema& schema);
void write_jsonl(const std::filesystem::path& path, const std::vector<Layout>& layouts,
                 const CategorySchema& schema);
std::vector<Layout> read_jsonl(const std::filesystem::path& path, const CategorySchema& schema);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace layoutgen
