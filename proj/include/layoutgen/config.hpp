// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value configuration with section prefixes (decoder.*, locator.*,
// matcher.*, metrics.*, probe.*, synth.*, generate.*). Files are layered: later
// files and explicit overrides win. Unknown keys are hard errors.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace layoutgen {

class Config {
 public:
  /// Every key with its built-in default.
  Config();

  void load_file(const std::filesystem::path& path);
  void parse(std::string_view text, std::string_view origin = "<string>");
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::int64_t get_int64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  /// Keys under a section prefix ("decoder.") in sorted order.
  std::map<std::string, std::string> section(std::string_view prefix) const;
  /// Stable hash of the given section(s), hex encoded.
  std::string hash(std::string_view prefix = "") const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace layoutgen
