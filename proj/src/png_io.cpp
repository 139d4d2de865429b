#include "isoseg/png_io.hpp"

#include <png.h>
#include <stdexcept>

namespace isoseg::io {

std::vector<uint8_t> read_png_gray(const std::string& path, int& width, int& height) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw std::runtime_error("png read failed: " + path + ": " + img.message);
    img.format = PNG_FORMAT_GRAY;
    std::vector<uint8_t> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw std::runtime_error("png decode failed: " + path + ": " + img.message);
    }
    width = static_cast<int>(img.width);
    height = static_cast<int>(img.height);
    return buf;
}

void write_png_gray(const std::string& path, const uint8_t* data, int width, int height) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(width);
    img.height = static_cast<png_uint_32>(height);
    img.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&img, path.c_str(), 0, data, 0, nullptr))
        throw std::runtime_error("png write failed: " + path + ": " + img.message);
}

} // namespace isoseg::io
