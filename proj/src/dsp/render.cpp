// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/dsp/render.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>

#include "hlab/common/error.hpp"

namespace hlab::dsp {

std::array<std::uint8_t, 3> Image::pixel(int x, int y) const {
  const auto i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {rgb[i], rgb[i + 1], rgb[i + 2]};
}

void Image::set(int x, int y, std::array<std::uint8_t, 3> c) {
  const auto i = (static_cast<std::size_t>(y) * width + x) * 3;
  rgb[i] = c[0];
  rgb[i + 1] = c[1];
  rgb[i + 2] = c[2];
}

std::array<std::uint8_t, 3> colormap(double level) {
  // Piecewise-linear dark-blue -> magenta -> orange -> pale yellow ramp.
  static constexpr double kStops[][3] = {
      {0.0, 0.0, 4.0}, {80.0, 18.0, 123.0}, {183.0, 55.0, 121.0}, {252.0, 137.0, 97.0},
      {252.0, 253.0, 191.0}};
  constexpr int kSegments = 4;
  const double x = std::clamp(level, 0.0, 1.0) * kSegments;
  const int i = std::min(static_cast<int>(x), kSegments - 1);
  const double u = x - i;
  std::array<std::uint8_t, 3> c{};
  for (int k = 0; k < 3; ++k) {
    c[k] = static_cast<std::uint8_t>(std::lround(kStops[i][k] + u * (kStops[i + 1][k] - kStops[i][k])));
  }
  return c;
}

Image spectrogram_image(const ComplexSpectrogram& spec, int scale) {
  spec.validate();
  if (scale < 1) throw UsageError("render: scale must be >= 1");
  double peak = 0.0;
  for (int t = 0; t < spec.frames; ++t) {
    for (int f = 0; f < spec.bins; ++f) peak = std::max(peak, spec.power(t, f));
  }
  Image img(spec.frames * scale, spec.bins * scale);
  for (int t = 0; t < spec.frames; ++t) {
    for (int f = 0; f < spec.bins; ++f) {
      double db = kRenderFloorDb;
      const double p = spec.power(t, f);
      if (peak > 0.0 && p > 0.0) db = std::max(kRenderFloorDb, 10.0 * std::log10(p / peak));
      const auto c = colormap((db - kRenderFloorDb) / -kRenderFloorDb);
      const int row0 = (spec.bins - 1 - f) * scale;
      for (int dy = 0; dy < scale; ++dy) {
        for (int dx = 0; dx < scale; ++dx) img.set(t * scale + dx, row0 + dy, c);
      }
    }
  }
  return img;
}

Image stack_vertical(const std::vector<Image>& panels, int gap) {
  int width = 0, height = 0;
  for (const auto& p : panels) {
    width = std::max(width, p.width);
    height += p.height;
  }
  if (!panels.empty()) height += gap * static_cast<int>(panels.size() - 1);
  Image out(width, height);
  std::fill(out.rgb.begin(), out.rgb.end(), 255);
  int y0 = 0;
  for (const auto& p : panels) {
    for (int y = 0; y < p.height; ++y) {
      for (int x = 0; x < p.width; ++x) out.set(x, y0 + y, p.pixel(x, y));
    }
    y0 += p.height + gap;
  }
  return out;
}

namespace {
struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.width <= 0 || image.height <= 0) throw UsageError("png: empty image");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("png: cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: encoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, image.rgb.data() + static_cast<std::size_t>(y) * image.width * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(fp.get()) != 0) throw IoError("png: flush failed for " + path.string());
}

Image read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("png: cannot read " + path.string());
  }
  img.format = PNG_FORMAT_RGB;
  Image out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("png: decode failed for " + path.string());
  }
  return out;
}

void render_spectrogram(const ComplexSpectrogram& spec, const std::filesystem::path& path,
                        int scale) {
  write_png(path, spectrogram_image(spec, scale));
}

}  // namespace hlab::dsp
