#pragma once

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "msfuse/image.hpp"

namespace msfuse {

namespace detail {

struct PngMemWriter {
    std::vector<std::uint8_t>* out;
};

inline void png_mem_write(png_structp png, png_bytep data, png_size_t len) {
    auto* w = static_cast<PngMemWriter*>(png_get_io_ptr(png));
    w->out->insert(w->out->end(), data, data + len);
}

inline void png_mem_flush(png_structp) {}

struct PngMemReader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos;
};

inline void png_mem_read(png_structp png, png_bytep out, png_size_t len) {
    auto* r = static_cast<PngMemReader*>(png_get_io_ptr(png));
    if (r->pos + len > r->size) png_error(png, "truncated png stream");
    std::memcpy(out, r->data + r->pos, len);
    r->pos += len;
}

}  // namespace detail

// Lossless 8-bit RGB encoding; keeps marker channel values bit-exact.
inline std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("encode_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("encode_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("encode_png: libpng error");
    }
    detail::PngMemWriter writer{&out};
    png_set_write_fn(png, &writer, detail::png_mem_write, detail::png_mem_flush);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.at(0, y));
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

// Decodes any 8/16-bit gray, palette, or rgb(a) PNG into 8-bit RGB.
inline ImageBuffer decode_png(const std::uint8_t* data, std::size_t size) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("decode_png: png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("decode_png: png_create_info_struct failed");
    }
    std::vector<png_bytep> rows;
    ImageBuffer img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("decode_png: libpng error (corrupt or truncated file)");
    }
    detail::PngMemReader reader{data, size, 0};
    png_set_read_fn(png, &reader, detail::png_mem_read);
    png_read_info(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    rows.resize(img.height);
    for (int y = 0; y < img.height; ++y)
        rows[y] = img.at(0, y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

inline void write_png(const std::string& path, const ImageBuffer& img) {
    const auto bytes = encode_png(img);
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!f) throw std::runtime_error("write_png: cannot open " + path);
    if (std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
        throw std::runtime_error("write_png: short write to " + path);
}

inline ImageBuffer read_png(const std::string& path) {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!f) throw std::runtime_error("read_png: cannot open " + path);
    std::vector<std::uint8_t> bytes;
    std::uint8_t buf[65536];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f.get())) > 0)
        bytes.insert(bytes.end(), buf, buf + n);
    return decode_png(bytes.data(), bytes.size());
}

}  // namespace msfuse
