#pragma once

#include <string>
#include <vector>

#include "cloudtomo/optics/optics.hpp"

namespace cloudtomo::io {

// PFM: little-endian float, bottom-up scanlines ("PF", negative scale).
void write_pfm(const std::string& path, const optics::HdrImage& image);
optics::HdrImage read_pfm(const std::string& path);

// 8-bit RGB PNG from [0,1] image data (values clamped).
void write_png_rgb8(const std::string& path, const optics::HdrImage& image);

// Grayscale matrix heatmap; rgb callback maps a normalized value to color.
void write_png_rgb8_raw(const std::string& path, int width, int height,
                        const std::vector<uint8_t>& rgb);

}  // namespace cloudtomo::io
