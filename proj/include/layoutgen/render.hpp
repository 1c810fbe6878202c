// SPDX-License-Identifier: Apache-2.0
//
// Wireframe rasterizer. Each element is a semi-transparent fill (alpha 0.6)
// topped by an opaque one-pixel border, painted in sequence order on a white
// canvas. No anti-aliasing: pixel edges are round(coord * extent), half-open.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "layoutgen/layout.hpp"

namespace layoutgen {

struct Rgb {
  float r = 1.f, g = 1.f, b = 1.f;
  bool operator==(const Rgb&) const = default;
};

/// Hue id/K on the HSV circle, saturation 0.85, value 0.9.
Rgb palette_color(int category, int num_categories);
Rgb hsv_to_rgb(double h, double s, double v);

/// Color used for elements whose category token is still masked.
inline constexpr Rgb kUnknownCategoryColor{0.5f, 0.5f, 0.5f};

struct RenderOptions {
  int height = 224;
  int width = 224;
  float fill_alpha = 0.6f;
};

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool empty() const { return x1 <= x0 || y1 <= y0; }
};

PixelRect to_pixel_rect(const Box& box, int height, int width);

class WireframeImage {
 public:
  WireframeImage() = default;
  WireframeImage(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }

  /// Row-major H x W x 3, channel-last, values in [0,1].
  std::span<const float> pixels() const { return pixels_; }
  std::span<float> pixels() { return pixels_; }

  float at(int y, int x, int c) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
  }
  Rgb rgb(int y, int x) const { return {at(y, x, 0), at(y, x, 1), at(y, x, 2)}; }

  bool is_white(int y, int x) const;
  std::size_t non_white_count() const;
  std::uint64_t hash() const;

  /// Writes channel-first floats (3 x H x W) into out; out.size() must equal 3*H*W.
  void to_chw(std::span<float> out) const;

  bool operator==(const WireframeImage& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

struct RenderedElement {
  int element = 0;  // index in the source layout / sequence
  int category = -1;
  Box box;
};

struct Rendering {
  WireframeImage image;
  std::vector<RenderedElement> elements;  // drawn elements, in paint order
};

Rendering render(const Layout& layout, int num_categories, const RenderOptions& opts = {});
/// Elements with any masked geometry token are skipped entirely.
Rendering render(const TokenSequence& seq, const Vocabulary& vocab, const RenderOptions& opts = {});

/// 8-bit RGB PNG.
void write_png(const std::filesystem::path& path, const WireframeImage& image);
WireframeImage read_png(const std::filesystem::path& path);
/// One <rect> per element, fill-opacity 0.6, stroke-width 1.
std::string to_svg(const Layout& layout, int num_categories, const RenderOptions& opts = {});

}  // namespace layoutgen
