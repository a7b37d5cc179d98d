#pragma once
// PNG read/write via libpng. Images are stored as 8-bit RGB, masks as 1-bit
// grayscale; both round-trip losslessly.

#include <string>

#include "bgg/image.hpp"

namespace bgg {

void write_png_rgb8(const std::string& path, const Image& img);
Image read_png_rgb8(const std::string& path);

void write_png_mask1(const std::string& path, const Mask& m);
Mask read_png_mask(const std::string& path);  // accepts 1-bit or 8-bit gray; checks binarity

}  // namespace bgg
