// SPDX-License-Identifier: Apache-2.0
#include "layoutgen/render.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>

#include "layoutgen/error.hpp"
#include "layoutgen/rng.hpp"

namespace layoutgen {

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double h6 = h * 6.0;
  const int sector = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  double r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

Rgb palette_color(int category, int num_categories) {
  require(num_categories >= 1 && category >= 0 && category < num_categories, ErrorKind::Schema,
          "palette category " + std::to_string(category) + " outside [0," +
              std::to_string(num_categories) + ")");
  return hsv_to_rgb(static_cast<double>(category) / num_categories, 0.85, 0.9);
}

PixelRect to_pixel_rect(const Box& box, int height, int width) {
  auto px = [](double v, int extent) {
    return std::clamp(static_cast<int>(std::lround(v * extent)), 0, extent);
  };
  PixelRect r{px(box.x, width), px(box.y, height), px(box.x + box.w, width), px(box.y + box.h, height)};
  // Degenerate boxes (one bin wide) still occupy a pixel so they stay visible.
  if (r.x1 == r.x0 && r.x0 < width) r.x1 = r.x0 + 1;
  if (r.y1 == r.y0 && r.y0 < height) r.y1 = r.y0 + 1;
  return r;
}

WireframeImage::WireframeImage(int height, int width)
    : height_(height), width_(width),
      pixels_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * 3, 1.0f) {
  require(height > 0 && width > 0, ErrorKind::Config, "image extent must be positive");
}

bool WireframeImage::is_white(int y, int x) const {
  return at(y, x, 0) == 1.0f && at(y, x, 1) == 1.0f && at(y, x, 2) == 1.0f;
}

std::size_t WireframeImage::non_white_count() const {
  std::size_t count = 0;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) count += is_white(y, x) ? 0 : 1;
  }
  return count;
}

std::uint64_t WireframeImage::hash() const {
  std::uint64_t h = fnv1a64_bytes(&height_, sizeof(height_));
  h = fnv1a64_bytes(&width_, sizeof(width_), h);
  return fnv1a64_bytes(pixels_.data(), pixels_.size() * sizeof(float), h);
}

void WireframeImage::to_chw(std::span<float> out) const {
  const std::size_t plane = static_cast<std::size_t>(height_) * width_;
  require(out.size() == 3 * plane, ErrorKind::Config, "CHW buffer has wrong size");
  for (std::size_t i = 0; i < plane; ++i) {
    out[i] = pixels_[i * 3];
    out[plane + i] = pixels_[i * 3 + 1];
    out[2 * plane + i] = pixels_[i * 3 + 2];
  }
}

namespace {

void paint(WireframeImage& img, const PixelRect& r, Rgb color, float alpha) {
  if (r.empty()) return;
  auto px = img.pixels();
  const int w = img.width();
  const float keep = 1.0f - alpha;
  const float c[3] = {color.r, color.g, color.b};
  for (int y = r.y0; y < r.y1; ++y) {
    float* row = px.data() + static_cast<std::size_t>(y) * w * 3;
    for (int x = r.x0; x < r.x1; ++x) {
      for (int ch = 0; ch < 3; ++ch) row[x * 3 + ch] = keep * row[x * 3 + ch] + alpha * c[ch];
    }
  }
  auto put = [&](int y, int x) {
    float* p = px.data() + (static_cast<std::size_t>(y) * w + x) * 3;
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  };
  for (int x = r.x0; x < r.x1; ++x) {
    put(r.y0, x);
    put(r.y1 - 1, x);
  }
  for (int y = r.y0; y < r.y1; ++y) {
    put(y, r.x0);
    put(y, r.x1 - 1);
  }
}

}  // namespace

Rendering render(const Layout& layout, int num_categories, const RenderOptions& opts) {
  Rendering out{WireframeImage(opts.height, opts.width), {}};
  for (int i = 0; i < layout.size(); ++i) {
    const auto& e = layout.elements[static_cast<std::size_t>(i)];
    paint(out.image, to_pixel_rect(e.box(), opts.height, opts.width),
          palette_color(e.category, num_categories), opts.fill_alpha);
    out.elements.push_back({i, e.category, e.box()});
  }
  return out;
}

Rendering render(const TokenSequence& seq, const Vocabulary& vocab, const RenderOptions& opts) {
  Rendering out{WireframeImage(opts.height, opts.width), {}};
  const int bins = vocab.num_bins();
  for (int i = 0; i < seq.n; ++i) {
    if (!seq.geometry_known(i)) continue;
    auto value = [&](SlotKind s) {
      return continuize(vocab.bin_of(seq.ids[static_cast<std::size_t>(position_of(i, s))]), bins);
    };
    const Box box{value(SlotKind::X), value(SlotKind::Y), value(SlotKind::W), value(SlotKind::H)};
    const auto cpos = static_cast<std::size_t>(position_of(i, SlotKind::Category));
    const bool cat_known = !seq.masked[cpos] && seq.ids[cpos] != Vocabulary::kMask;
    const int category = cat_known ? vocab.category_of(seq.ids[cpos]) : -1;
    const Rgb color = cat_known ? palette_color(category, vocab.num_categories()) : kUnknownCategoryColor;
    paint(out.image, to_pixel_rect(box, opts.height, opts.width), color, opts.fill_alpha);
    out.elements.push_back({i, category, box});
  }
  return out;
}

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

void write_png(const std::filesystem::path& path, const WireframeImage& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(image.width()) * image.height() * 3);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        bytes[(static_cast<std::size_t>(y) * image.width() + x) * 3 + c] = to_byte(image.at(y, x, c));
      }
    }
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_RGB;
  const int ok = png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr);
  const std::string message = png.message;
  png_image_free(&png);
  require(ok != 0, ErrorKind::Io, "cannot write " + path.string() + ": " + message);
}

WireframeImage read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  require(png_image_begin_read_from_file(&img, path.c_str()) != 0, ErrorKind::Io,
          "cannot read PNG " + path.string());
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr) == 0) {
    png_image_free(&img);
    fail(ErrorKind::Io, "cannot decode PNG " + path.string());
  }
  WireframeImage out(static_cast<int>(img.height), static_cast<int>(img.width));
  auto px = out.pixels();
  for (std::size_t i = 0; i < buf.size(); ++i) px[i] = static_cast<float>(buf[i]) / 255.0f;
  return out;
}

std::string to_svg(const Layout& layout, int num_categories, const RenderOptions& opts) {
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width << "\" height=\""
      << opts.height << "\" viewBox=\"0 0 " << opts.width << ' ' << opts.height << "\">\n";
  svg << "  <rect x=\"0\" y=\"0\" width=\"" << opts.width << "\" height=\"" << opts.height
      << "\" fill=\"#ffffff\"/>\n";
  char color[8];
  for (const auto& e : layout.elements) {
    const Rgb c = palette_color(e.category, num_categories);
    std::snprintf(color, sizeof color, "#%02x%02x%02x", to_byte(c.r), to_byte(c.g), to_byte(c.b));
    svg << "  <rect x=\"" << e.x * opts.width << "\" y=\"" << e.y * opts.height << "\" width=\""
        << e.w * opts.width << "\" height=\"" << e.h * opts.height << "\" fill=\"" << color
        << "\" fill-opacity=\"" << opts.fill_alpha << "\" stroke=\"" << color
        << "\" stroke-width=\"1\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace layoutgen
