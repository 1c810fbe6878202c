// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/layout_io.hpp"

#include <fstream>
#include <sstream>

#include "layoutgen/error.hpp"

namespace layoutgen {

ojson layout_to_json(const Layout& layout, const CategorySchema& schema) {
  ojson j;
  j["id"] = layout.source_id;
  j["canvas"] = {layout.canvas.width, layout.canvas.height};
  ojson elements = ojson::array();
  for (const auto& e : layout.elements) {
    ojson el;
    el["category"] = schema.name_of(e.category);
    el["bbox"] = {e.x, e.y, e.w, e.h};
    elements.push_back(std::move(el));
  }
  j["elements"] = std::move(elements);
  return j;
}

Layout layout_from_json(const nlohmann::json& j, const CategorySchema& schema) {
  Layout out;
  try {
    out.source_id = j.value("id", std::string{});
    if (j.contains("canvas")) {
      const auto& c = j.at("canvas");
      out.canvas = {c.at(0).get<double>(), c.at(1).get<double>()};
    }
    for (const auto& el : j.at("elements")) {
      const auto& bbox = el.at("bbox");
      require(bbox.size() == 4, ErrorKind::Data, "bbox must have four entries");
      Element e;
      e.category = schema.id_of(el.at("category").get<std::string>());
      e.x = bbox[0].get<double>();
      e.y = bbox[1].get<double>();
      e.w = bbox[2].get<double>();
      e.h = bbox[3].get<double>();
      out.elements.push_back(e);
    }
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorKind::Data, std::string("malformed layout record: ") + ex.what());
  }
  return out;
}

ojson schema_to_json(const CategorySchema& schema) {
  ojson j;
  j["categories"] = schema.names();
  j["canvas_aspect"] = schema.canvas_aspect();
  return j;
}

CategorySchema schema_from_json(const nlohmann::json& j) {
  try {
    return CategorySchema(j.at("categories").get<std::vector<std::string>>(),
                          j.value("canvas_aspect", 1.0));
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorKind::Data, std::string("malformed schema: ") + ex.what());
  }
}

CategorySchema load_schema(const std::filesystem::path& path) {
  try {
    return schema_from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::parse_error& ex) {
    fail(ErrorKind::Data, "cannot parse schema " + path.string() + ": " + ex.what());
  }
}

void save_schema(const std::filesystem::path& path, const CategorySchema& schema) {
  write_text_file(path, schema_to_json(schema).dump(2) + "\n");
}

std::string to_jsonl(const std::vector<Layout>& layouts, const CategorySchema& schema) {
  std::string out;
  for (const auto& l : layouts) {
    out += layout_to_json(l, schema).dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Layout>& layouts,
                 const CategorySchema& schema) {
  write_text_file(path, to_jsonl(layouts, schema));
}

std::vector<Layout> read_jsonl(const std::filesystem::path& path, const CategorySchema& schema) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::vector<Layout> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(layout_from_json(nlohmann::json::parse(line), schema));
    } catch (const nlohmann::json::parse_error& ex) {
      fail(ErrorKind::Data, path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

}  // namespace layoutgen
