// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "hlab/dsp/stft.hpp"

namespace hlab::dsp {

inline constexpr double kRenderFloorDb = -80.0;

/// 8-bit RGB raster, row 0 at the top.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}
  std::array<std::uint8_t, 3> pixel(int x, int y) const;
  void set(int x, int y, std::array<std::uint8_t, 3> c);
};

/// Colour for a level in [0, 1]; 0 is the floor colour.
std::array<std::uint8_t, 3> colormap(double level);

/// Log-magnitude image in dB relative to the spectrogram maximum, clamped to
/// [-80, 0]. Time runs left to right, frequency bottom to top; each bin
/// becomes a scale x scale block, so the image is (T*scale) x (F*scale).
Image spectrogram_image(const ComplexSpectrogram& spec, int scale = 2);

/// Panels stacked top to bottom, separated by `gap` rows of white.
Image stack_vertical(const std::vector<Image>& panels, int gap = 4);

void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

void render_spectrogram(const ComplexSpectrogram& spec, const std::filesystem::path& path,
                        int scale = 2);

}  // namespace hlab::dsp
