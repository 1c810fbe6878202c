// SPDX-License-Identifier: Apache-2.0
//
// Layout data model and the discrete token-sequence codec.
//
// A layout with n elements becomes the sequence
//   BOS, c_1, x_1, y_1, w_1, h_1, ..., c_n, x_n, y_n, w_n, h_n, EOS
// of length 5n + 2. Geometry is top-left anchored and normalized to [0, 1].
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace layoutgen {

inline constexpr int kDefaultMaxElements = 9;
inline constexpr int kDefaultNumBins = 128;

class CategorySchema {
 public:
  CategorySchema() = default;
  CategorySchema(std::vector<std::string> names, double canvas_aspect = 1.0);

  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  double canvas_aspect() const { return canvas_aspect_; }

  const std::string& name_of(int id) const;
  int id_of(std::string_view name) const;
  std::optional<int> find(std::string_view name) const;
  bool contains(int id) const { return id >= 0 && id < size(); }

  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> names_;
  double canvas_aspect_ = 1.0;
};

struct Box {
  double x = 0, y = 0, w = 0, h = 0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }
  double center_x() const { return x + 0.5 * w; }
  double center_y() const { return y + 0.5 * h; }
  bool operator==(const Box&) const = default;
};

struct Element {
  int category = 0;
  double x = 0, y = 0, w = 0, h = 0;

  Box box() const { return {x, y, w, h}; }
  /// Geometry attribute by index: 0=x, 1=y, 2=w, 3=h.
  double attr(int k) const;
  double& attr(int k);
  bool operator==(const Element&) const = default;
};

struct Canvas {
  double width = 1.0;
  double height = 1.0;
  bool operator==(const Canvas&) const = default;
};

struct Layout {
  std::vector<Element> elements;
  std::string source_id;
  Canvas canvas;

  int size() const { return static_cast<int>(elements.size()); }
  bool empty() const { return elements.empty(); }
};

/// Throws Capacity/Schema/Domain errors when the layout breaks a model invariant.
void validate_layout(const Layout& layout, const CategorySchema& schema,
                     int max_elements = kDefaultMaxElements);

/// Sorted category ids; two layouts are retrieval-compatible iff these match.
std::vector<int> category_multiset(const Layout& layout);

// ---------------------------------------------------------------------------
// Discretization

int discretize(double v, int num_bins = kDefaultNumBins);
double continuize(int bin, int num_bins = kDefaultNumBins);

// ---------------------------------------------------------------------------
// Element ordering

enum class ElementOrder { Position, Category, AsIs, Random };

struct OrderSpec {
  ElementOrder kind = ElementOrder::Category;
  std::uint64_t seed = 0;
};

ElementOrder parse_element_order(std::string_view name);
std::string_view to_string(ElementOrder order);

Layout sort_elements(const Layout& layout, OrderSpec order);

// ---------------------------------------------------------------------------
// Vocabulary and sequences

enum class SlotKind : std::uint8_t { Special, Category, X, Y, W, H };
enum class TokenKind : std::uint8_t { Special, Category, Coordinate };

inline bool is_geometry(SlotKind k) { return k == SlotKind::X || k == SlotKind::Y || k == SlotKind::W || k == SlotKind::H; }
inline bool is_size(SlotKind k) { return k == SlotKind::W || k == SlotKind::H; }
inline bool is_position(SlotKind k) { return k == SlotKind::X || k == SlotKind::Y; }

/// Token ids: 4 specials, then K category ids, then B coordinate bins shared by x/y/w/h.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kMask = 3;
  static constexpr int kNumSpecial = 4;

  Vocabulary() = default;
  explicit Vocabulary(const CategorySchema& schema, int num_bins = kDefaultNumBins);

  int size() const { return kNumSpecial + num_categories_ + num_bins_; }
  int num_categories() const { return num_categories_; }
  int num_bins() const { return num_bins_; }

  int category_token(int category) const;
  int bin_token(int bin) const;
  int category_of(int token) const;
  int bin_of(int token) const;

  TokenKind kind_of(int token) const;
  bool valid_for_slot(int token, SlotKind slot) const;
  /// First id and count of the block a slot may emit.
  std::pair<int, int> slot_range(SlotKind slot) const;

  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  int num_categories_ = 0;
  int num_bins_ = 0;
  std::uint64_t fingerprint_ = 0;
};

inline constexpr int sequence_length(int n) { return 5 * n + 2; }
SlotKind slot_kind_at(int position, int n);
/// Element index of an attribute position, or -1 for BOS/EOS.
inline int element_index_of(int position, int n) {
  return (position <= 0 || position > 5 * n) ? -1 : (position - 1) / 5;
}
inline int position_of(int element, SlotKind slot) {
  return 1 + 5 * element + (static_cast<int>(slot) - static_cast<int>(SlotKind::Category));
}

struct TokenSequence {
  std::vector<int> ids;
  std::vector<SlotKind> kinds;
  std::vector<std::uint8_t> masked;
  std::vector<std::uint8_t> conditioned;
  int n = 0;

  int size() const { return static_cast<int>(ids.size()); }
  int num_masked() const;
  /// Replaces the token at pos by MASK and raises its flag. Conditioned positions refuse.
  void mask(int pos);
  std::vector<int> masked_positions() const;
  bool geometry_known(int element) const;
};

TokenSequence encode(const Layout& layout, const Vocabulary& vocab,
                     int max_elements = kDefaultMaxElements, OrderSpec order = {ElementOrder::AsIs, 0});
Layout decode(const TokenSequence& seq, const Vocabulary& vocab);

}  // namespace layoutgen
