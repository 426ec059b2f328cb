// Copyright (c) 2026 latentswap contributors
// SPDX-License-Identifier: Apache-2.0
//
// PNG image I/O. Only 8-bit RGB is accepted: grayscale, palette, alpha, and
// 16-bit files are rejected rather than silently converted. Loading maps
// [0,255] to [-1,1]; saving inverts the map, so a round-trip is exact to
// within the 1/255 quantization bound per channel.

#pragma once

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "latentswap/errors.hpp"
#include "latentswap/latent.hpp"

namespace lswap::io {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace detail

inline FaceImage load_png(const std::filesystem::path& path) {
    detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw IoError("cannot open image: " + path.string());

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw IoError("not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png reader allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png info allocation failed");
    }
    std::vector<unsigned char> raw;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png decode failed: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_uint_32 width = png_get_image_width(png, info);
    png_uint_32 height = png_get_image_height(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    int color_type = png_get_color_type(png, info);
    if (bit_depth != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported PNG bit depth " + std::to_string(bit_depth) + " (8 required): " +
                      path.string());
    }
    if (color_type != PNG_COLOR_TYPE_RGB) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("unsupported PNG color type (8-bit RGB required): " + path.string());
    }

    raw.resize(static_cast<std::size_t>(width) * height * 3);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y)
        rows[y] = raw.data() + static_cast<std::size_t>(y) * width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor pixels(Shape{static_cast<int>(height), static_cast<int>(width), 3});
    for (std::size_t i = 0; i < raw.size(); ++i)
        pixels.data[i] = static_cast<Real>(raw[i]) / 127.5 - 1.0;
    return FaceImage(std::move(pixels));
}

inline void save_png(const std::filesystem::path& path, const FaceImage& image) {
    const Shape& s = image.pixels.shape;
    if (s.rank() != 3 || s[2] != 3)
        throw DimensionError("save_png: image must be (h,w,3), got " + s.str());
    if (!image.pixels.all_finite())
        throw NumericError("save_png: image contains a non-finite pixel");

    int height = s[0], width = s[1];
    std::vector<unsigned char> raw(static_cast<std::size_t>(height) * width * 3);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        Real v = (image.pixels.data[i] + 1.0) * 127.5;
        long q = std::lround(v);
        raw[i] = static_cast<unsigned char>(q < 0 ? 0 : q > 255 ? 255 : q);
    }

    detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoError("cannot open for writing: " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png writer allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png info allocation failed");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png encode failed: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y)
        rows[static_cast<std::size_t>(y)] = raw.data() + static_cast<std::size_t>(y) * width * 3;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace lswap::io
