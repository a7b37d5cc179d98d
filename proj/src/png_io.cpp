#include "bgg/png_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

namespace bgg {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

uint8_t to_byte(float x) {
    float y = x * 255.f + 0.5f;
    if (y < 0.f) y = 0.f;
    if (y > 255.f) y = 255.f;
    return static_cast<uint8_t>(y);
}

}  // namespace

void write_png_rgb8(const std::string& path, const Image& img) {
    require(img.c == 3, ErrorKind::shape, "write_png_rgb8: image must have 3 channels");
    FilePtr f(std::fopen(path.c_str(), "wb"));
    require(f != nullptr, ErrorKind::io, "cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png, ErrorKind::io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(ErrorKind::io, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::io, "libpng write error: " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<uint8_t> row(static_cast<size_t>(img.w) * 3);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x)
            for (int ch = 0; ch < 3; ++ch) row[size_t(x) * 3 + ch] = to_byte(img.at(y, x, ch));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png_rgb8(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    require(f != nullptr, ErrorKind::io, "cannot open: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png, ErrorKind::io, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(ErrorKind::io, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::parse, "libpng read error: " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    // Normalize whatever we get to 8-bit RGB.
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_color_16 bg{};
    if ((png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR) == 0) png_set_gray_to_rgb(png);
    (void)bg;
    png_read_update_info(png, info);

    int w = static_cast<int>(png_get_image_width(png, info));
    int h = static_cast<int>(png_get_image_height(png, info));
    size_t rowbytes = png_get_rowbytes(png, info);
    require(rowbytes == static_cast<size_t>(w) * 3 || rowbytes == static_cast<size_t>(w) * 4, ErrorKind::parse,
            "unexpected PNG row layout: " + path);
    int comps = static_cast<int>(rowbytes / static_cast<size_t>(w));

    std::vector<uint8_t> row(rowbytes);
    Image img(h, w, 3);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = static_cast<float>(row[size_t(x) * comps + ch]) / 255.f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png_mask1(const std::string& path, const Mask& m) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    require(f != nullptr, ErrorKind::io, "cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png, ErrorKind::io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(ErrorKind::io, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::io, "libpng write error: " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(m.w), static_cast<png_uint_32>(m.h), 1,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    size_t rowbytes = (static_cast<size_t>(m.w) + 7) / 8;
    std::vector<uint8_t> row(rowbytes);
    for (int y = 0; y < m.h; ++y) {
        std::fill(row.begin(), row.end(), 0);
        for (int x = 0; x < m.w; ++x)
            if (m.at(y, x)) row[size_t(x) / 8] |= static_cast<uint8_t>(0x80u >> (x % 8));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Mask read_png_mask(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    require(f != nullptr, ErrorKind::io, "cannot open: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png, ErrorKind::io, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(ErrorKind::io, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::parse, "libpng read error: " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    png_set_expand_gray_1_2_4_to_8(png);
    png_set_strip_16(png);
    if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    require((png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR) == 0, ErrorKind::parse,
            "mask PNG must be grayscale: " + path);
    png_read_update_info(png, info);

    int w = static_cast<int>(png_get_image_width(png, info));
    int h = static_cast<int>(png_get_image_height(png, info));
    std::vector<uint8_t> row(png_get_rowbytes(png, info));
    Mask m(h, w);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x) {
            uint8_t val = row[size_t(x)];
            require(val == 0 || val == 255, ErrorKind::parse, "mask PNG is not binary: " + path);
            m.at(y, x) = val ? 1 : 0;
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return m;
}

}  // namespace bgg
