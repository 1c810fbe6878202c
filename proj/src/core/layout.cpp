// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/layout.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "layoutgen/error.hpp"
#include "layoutgen/rng.hpp"

namespace layoutgen {

CategorySchema::CategorySchema(std::vector<std::string> names, double canvas_aspect)
    : names_(std::move(names)), canvas_aspect_(canvas_aspect) {
  require(!names_.empty(), ErrorKind::Schema, "category schema needs at least one category");
  require(canvas_aspect_ > 0.0, ErrorKind::Schema, "canvas aspect must be positive");
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    require(!n.empty(), ErrorKind::Schema, "empty category name");
    require(seen.insert(n).second, ErrorKind::Schema, "duplicate category name '" + n + "'");
  }
}

const std::string& CategorySchema::name_of(int id) const {
  require(contains(id), ErrorKind::Schema, "category id " + std::to_string(id) + " outside schema");
  return names_[static_cast<std::size_t>(id)];
}

std::optional<int> CategorySchema::find(std::string_view name) const {
  for (int i = 0; i < size(); ++i) {
    if (names_[static_cast<std::size_t>(i)] == name) return i;
  }
  return std::nullopt;
}

int CategorySchema::id_of(std::string_view name) const {
  auto id = find(name);
  if (!id) fail(ErrorKind::Schema, "unknown category '" + std::string(name) + "'");
  return *id;
}

std::uint64_t CategorySchema::fingerprint() const {
  std::uint64_t h = fnv1a64("schema");
  for (const auto& n : names_) {
    h = fnv1a64(n, h);
    h = fnv1a64("\x1f", h);
  }
  return h;
}

double Element::attr(int k) const {
  switch (k) {
    case 0: return x;
    case 1: return y;
    case 2: return w;
    case 3: return h;
  }
  fail(ErrorKind::Domain, "attribute index out of range");
}

double& Element::attr(int k) {
  switch (k) {
    case 0: return x;
    case 1: return y;
    case 2: return w;
    case 3: return h;
  }
  fail(ErrorKind::Domain, "attribute index out of range");
}

void validate_layout(const Layout& layout, const CategorySchema& schema, int max_elements) {
  require(!layout.empty(), ErrorKind::Data, "layout has no elements");
  require(layout.size() <= max_elements, ErrorKind::Capacity,
          "layout has " + std::to_string(layout.size()) + " elements, maximum is " +
              std::to_string(max_elements));
  for (const auto& e : layout.elements) {
    require(schema.contains(e.category), ErrorKind::Schema,
            "category id " + std::to_string(e.category) + " outside schema");
    for (int k = 0; k < 4; ++k) {
      const double v = e.attr(k);
      require(v >= 0.0 && v <= 1.0, ErrorKind::Domain, "element geometry outside [0,1]");
    }
  }
}

std::vector<int> category_multiset(const Layout& layout) {
  std::vector<int> cats;
  cats.reserve(layout.elements.size());
  for (const auto& e : layout.elements) cats.push_back(e.category);
  std::sort(cats.begin(), cats.end());
  return cats;
}

int discretize(double v, int num_bins) {
  require(num_bins > 0, ErrorKind::Domain, "bin count must be positive");
  require(v >= 0.0 && v <= 1.0, ErrorKind::Domain, "value outside [0,1] cannot be discretized");
  const auto bin = static_cast<int>(std::floor(v * num_bins));
  return std::min(bin, num_bins - 1);
}

double continuize(int bin, int num_bins) {
  require(num_bins > 0, ErrorKind::Domain, "bin count must be positive");
  require(bin >= 0 && bin < num_bins, ErrorKind::Domain, "bin index out of range");
  return (bin + 0.5) / num_bins;
}

ElementOrder parse_element_order(std::string_view name) {
  if (name == "position") return ElementOrder::Position;
  if (name == "category") return ElementOrder::Category;
  if (name == "as_is" || name == "as-is") return ElementOrder::AsIs;
  if (name == "random") return ElementOrder::Random;
  fail(ErrorKind::Config, "unknown element order '" + std::string(name) + "'");
}

std::string_view to_string(ElementOrder order) {
  switch (order) {
    case ElementOrder::Position: return "position";
    case ElementOrder::Category: return "category";
    case ElementOrder::AsIs: return "as_is";
    case ElementOrder::Random: return "random";
  }
  return "?";
}

Layout sort_elements(const Layout& layout, OrderSpec order) {
  Layout out = layout;
  auto& els = out.elements;
  switch (order.kind) {
    case ElementOrder::Position:
      std::stable_sort(els.begin(), els.end(), [](const Element& a, const Element& b) {
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
      });
      break;
    case ElementOrder::Category:
      std::stable_sort(els.begin(), els.end(),
                       [](const Element& a, const Element& b) { return a.category < b.category; });
      break;
    case ElementOrder::AsIs:
      break;
    case ElementOrder::Random: {
      Rng rng(order.seed);
      rng.shuffle(std::span<Element>(els));
      break;
    }
  }
  return out;
}

Vocabulary::Vocabulary(const CategorySchema& schema, int num_bins)
    : num_categories_(schema.size()), num_bins_(num_bins) {
  require(num_categories_ >= 1, ErrorKind::Schema, "vocabulary needs at least one category");
  require(num_bins_ >= 1, ErrorKind::Domain, "vocabulary needs at least one bin");
  fingerprint_ = fnv1a64(std::to_string(num_bins_), schema.fingerprint());
}

int Vocabulary::category_token(int category) const {
  require(category >= 0 && category < num_categories_, ErrorKind::Schema,
          "category id " + std::to_string(category) + " outside vocabulary");
  return kNumSpecial + category;
}

int Vocabulary::bin_token(int bin) const {
  require(bin >= 0 && bin < num_bins_, ErrorKind::Domain, "bin outside vocabulary");
  return kNumSpecial + num_categories_ + bin;
}

int Vocabulary::category_of(int token) const {
  require(kind_of(token) == TokenKind::Category, ErrorKind::MalformedSequence,
          "token " + std::to_string(token) + " is not a category");
  return token - kNumSpecial;
}

int Vocabulary::bin_of(int token) const {
  require(kind_of(token) == TokenKind::Coordinate, ErrorKind::MalformedSequence,
          "token " + std::to_string(token) + " is not a coordinate bin");
  return token - kNumSpecial - num_categories_;
}

TokenKind Vocabulary::kind_of(int token) const {
  require(token >= 0 && token < size(), ErrorKind::MalformedSequence,
          "token id " + std::to_string(token) + " outside vocabulary");
  if (token < kNumSpecial) return TokenKind::Special;
  if (token < kNumSpecial + num_categories_) return TokenKind::Category;
  return TokenKind::Coordinate;
}

bool Vocabulary::valid_for_slot(int token, SlotKind slot) const {
  if (token < 0 || token >= size()) return false;
  const TokenKind k = kind_of(token);
  switch (slot) {
    case SlotKind::Special: return k == TokenKind::Special;
    case SlotKind::Category: return k == TokenKind::Category;
    default: return k == TokenKind::Coordinate;
  }
}

std::pair<int, int> Vocabulary::slot_range(SlotKind slot) const {
  switch (slot) {
    case SlotKind::Special: return {0, kNumSpecial};
    case SlotKind::Category: return {kNumSpecial, num_categories_};
    default: return {kNumSpecial + num_categories_, num_bins_};
  }
}

SlotKind slot_kind_at(int position, int n) {
  require(position >= 0 && position < sequence_length(n), ErrorKind::Domain,
          "sequence position out of range");
  if (position == 0 || position == sequence_length(n) - 1) return SlotKind::Special;
  return static_cast<SlotKind>(1 + (position - 1) % 5);
}

int TokenSequence::num_masked() const {
  return static_cast<int>(std::count(masked.begin(), masked.end(), std::uint8_t{1}));
}

void TokenSequence::mask(int pos) {
  require(pos >= 0 && pos < size(), ErrorKind::Domain, "mask position out of range");
  require(kinds[static_cast<std::size_t>(pos)] != SlotKind::Special, ErrorKind::Precondition,
          "special positions cannot be masked");
  require(!conditioned[static_cast<std::size_t>(pos)], ErrorKind::Precondition,
          "conditioned positions cannot be masked");
  ids[static_cast<std::size_t>(pos)] = Vocabulary::kMask;
  masked[static_cast<std::size_t>(pos)] = 1;
}

std::vector<int> TokenSequence::masked_positions() const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    if (masked[static_cast<std::size_t>(i)]) out.push_back(i);
  }
  return out;
}

bool TokenSequence::geometry_known(int element) const {
  for (SlotKind s : {SlotKind::X, SlotKind::Y, SlotKind::W, SlotKind::H}) {
    const auto p = static_cast<std::size_t>(position_of(element, s));
    if (masked[p] || ids[p] == Vocabulary::kMask) return false;
  }
  return true;
}

TokenSequence encode(const Layout& layout, const Vocabulary& vocab, int max_elements, OrderSpec order) {
  require(layout.size() <= max_elements, ErrorKind::Capacity,
          "layout has " + std::to_string(layout.size()) + " elements, maximum is " +
              std::to_string(max_elements));
  const Layout sorted = sort_elements(layout, order);
  const int n = sorted.size();
  const int len = sequence_length(n);
  TokenSequence seq;
  seq.n = n;
  seq.ids.reserve(static_cast<std::size_t>(len));
  seq.kinds.reserve(static_cast<std::size_t>(len));
  seq.ids.push_back(Vocabulary::kBos);
  seq.kinds.push_back(SlotKind::Special);
  const int bins = vocab.num_bins();
  for (const auto& e : sorted.elements) {
    seq.ids.push_back(vocab.category_token(e.category));
    seq.ids.push_back(vocab.bin_token(discretize(e.x, bins)));
    seq.ids.push_back(vocab.bin_token(discretize(e.y, bins)));
    seq.ids.push_back(vocab.bin_token(discretize(e.w, bins)));
    seq.ids.push_back(vocab.bin_token(discretize(e.h, bins)));
    for (SlotKind s : {SlotKind::Category, SlotKind::X, SlotKind::Y, SlotKind::W, SlotKind::H}) {
      seq.kinds.push_back(s);
    }
  }
  seq.ids.push_back(Vocabulary::kEos);
  seq.kinds.push_back(SlotKind::Special);
  seq.masked.assign(static_cast<std::size_t>(len), 0);
  seq.conditioned.assign(static_cast<std::size_t>(len), 0);
  return seq;
}

Layout decode(const TokenSequence& seq, const Vocabulary& vocab) {
  const int n = seq.n;
  require(seq.size() == sequence_length(n) && static_cast<int>(seq.kinds.size()) == seq.size(),
          ErrorKind::MalformedSequence, "sequence length is not 5n+2");
  require(seq.ids.front() == Vocabulary::kBos && seq.ids.back() == Vocabulary::kEos,
          ErrorKind::MalformedSequence, "sequence must start with BOS and end with EOS");
  Layout out;
  out.elements.resize(static_cast<std::size_t>(n));
  const int bins = vocab.num_bins();
  for (int pos = 1; pos <= 5 * n; ++pos) {
    const int id = seq.ids[static_cast<std::size_t>(pos)];
    const SlotKind slot = slot_kind_at(pos, n);
    require(seq.kinds[static_cast<std::size_t>(pos)] == slot, ErrorKind::MalformedSequence,
            "slot kind table disagrees with position");
    require(id != Vocabulary::kMask && !seq.masked[static_cast<std::size_t>(pos)],
            ErrorKind::IncompleteSequence, "sequence still contains MASK at position " + std::to_string(pos));
    require(vocab.valid_for_slot(id, slot), ErrorKind::MalformedSequence,
            "token " + std::to_string(id) + " invalid for its slot at position " + std::to_string(pos));
    auto& e = out.elements[static_cast<std::size_t>(element_index_of(pos, n))];
    switch (slot) {
      case SlotKind::Category: e.category = vocab.category_of(id); break;
      case SlotKind::X: e.x = continuize(vocab.bin_of(id), bins); break;
      case SlotKind::Y: e.y = continuize(vocab.bin_of(id), bins); break;
      case SlotKind::W: e.w = continuize(vocab.bin_of(id), bins); break;
      case SlotKind::H: e.h = continuize(vocab.bin_of(id), bins); break;
      case SlotKind::Special: break;
    }
  }
  return out;
}

}  // namespace layoutgen
