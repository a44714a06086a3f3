// SPDX-License-Identifier: Apache-2.0
#include "gsmind/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "gsmind/file_util.hpp"

namespace gsmind {

namespace {

struct FileCloser {
    void operator()(std::FILE *f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void append_bytes(png_structp png, png_bytep data, png_size_t n) {
    auto *out = static_cast<std::string *>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char *>(data), n);
}

void flush_noop(png_structp) {}

std::string encode_png(int width, int height, int channels, int bit_depth, const std::vector<std::uint8_t> &bytes) {
    std::string out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(Errc::BadShape, "png encode failed");
    }
    png_set_write_fn(png, &out, append_bytes, flush_noop);
    png_set_IHDR(png, info, width, height, bit_depth, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
    for (int y = 0; y < height; ++y) {
        png_write_row(png, const_cast<png_bytep>(bytes.data() + y * stride));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

std::vector<std::uint8_t> color_bytes(const ColorImage &image) {
    if (image.channels() != 3) fail(Errc::BadShape, "color image needs 3 channels");
    std::vector<std::uint8_t> bytes(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) {
        bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.data()[i], 0.0, 1.0) * 255.0));
    }
    return bytes;
}

struct Decoded {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 0;
    std::vector<std::uint8_t> bytes;
};

Decoded read_png(const std::filesystem::path &path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) fail(Errc::MissingFile, "missing file " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8)) {
        fail(Errc::BadShape, "not a png: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(Errc::BadShape, "png decode failed: " + path.string());
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    Decoded d;
    d.width = static_cast<int>(png_get_image_width(png, info));
    d.height = static_cast<int>(png_get_image_height(png, info));
    d.bit_depth = png_get_bit_depth(png, info);
    const int type = png_get_color_type(png, info);
    if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (type == PNG_COLOR_TYPE_GRAY && d.bit_depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
        d.bit_depth = 8;
    }
    if (type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    d.channels = png_get_channels(png, info);
    d.bit_depth = png_get_bit_depth(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    d.bytes.resize(stride * d.height);
    std::vector<png_bytep> rows(d.height);
    for (int y = 0; y < d.height; ++y) rows[y] = d.bytes.data() + y * stride;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return d;
}

} // namespace

double quantize_u8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

std::string encode_color_png(const ColorImage &image) {
    return encode_png(image.width(), image.height(), 3, 8, color_bytes(image));
}

void write_color_png(const std::filesystem::path &path, const ColorImage &image) {
    write_file_atomic(path, encode_color_png(image));
}

ColorImage read_color_png(const std::filesystem::path &path) {
    const Decoded d = read_png(path);
    if (d.bit_depth != 8 || (d.channels != 3 && d.channels != 1)) {
        fail(Errc::BadShape, "expected 8-bit RGB png: " + path.string());
    }
    ColorImage img(d.width, d.height, 3);
    for (int y = 0; y < d.height; ++y) {
        for (int x = 0; x < d.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const int src = d.channels == 3 ? c : 0;
                img(x, y, c) = d.bytes[(static_cast<std::size_t>(y) * d.width + x) * d.channels + src] / 255.0;
            }
        }
    }
    return img;
}

void write_u16_png(const std::filesystem::path &path, const Image<std::uint16_t> &image) {
    if (image.channels() != 1) fail(Errc::BadShape, "16-bit image needs 1 channel");
    std::vector<std::uint8_t> bytes(image.size() * 2);
    for (std::size_t i = 0; i < image.size(); ++i) {
        bytes[2 * i] = static_cast<std::uint8_t>(image.data()[i] >> 8); // png is big-endian
        bytes[2 * i + 1] = static_cast<std::uint8_t>(image.data()[i] & 0xff);
    }
    write_file_atomic(path, encode_png(image.width(), image.height(), 1, 16, bytes));
}

Image<std::uint16_t> read_u16_png(const std::filesystem::path &path) {
    const Decoded d = read_png(path);
    if (d.bit_depth != 16 || d.channels != 1) fail(Errc::BadShape, "expected 16-bit gray png: " + path.string());
    Image<std::uint16_t> img(d.width, d.height, 1);
    for (std::size_t i = 0; i < img.size(); ++i) {
        img.data()[i] = static_cast<std::uint16_t>((d.bytes[2 * i] << 8) | d.bytes[2 * i + 1]);
    }
    return img;
}

} // namespace gsmind
