#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace isoseg::io {

// 8-bit grayscale PNG, the only raster format in the pipeline.
std::vector<uint8_t> read_png_gray(const std::string& path, int& width, int& height);
void write_png_gray(const std::string& path, const uint8_t* data, int width, int height);

} // namespace isoseg::io
