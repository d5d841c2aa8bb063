#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <png.h>

#include "freecond/errors.hpp"
#include "freecond/grid.hpp"
#include "freecond/util.hpp"

namespace freecond {

/*===================================== PNG =====================================*/

// 8-bit RGB PNG -> 3 x H x W doubles in [0, 1] (byte / 255).
inline LatentGrid load_png_image(const std::filesystem::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str()))
        throw IoError("cannot read PNG " + path.string() + ": " + img.message);
    img.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw IoError("cannot decode PNG " + path.string() + ": " + msg);
    }
    LatentGrid out(3, static_cast<int>(img.height), static_cast<int>(img.width));
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(c, y, x) =
                    buf[(static_cast<std::size_t>(y) * out.width + x) * 3 + c] / 255.0;
    return out;
}

namespace detail {

inline unsigned char to_byte(double v) {
    double scaled = std::lround(std::min(1.0, std::max(0.0, v)) * 255.0);
    return static_cast<unsigned char>(scaled);
}

// Encode via libpng into memory, then write atomically.
inline void write_png_atomic(const std::filesystem::path& path, png_image& img,
                             const unsigned char* pixels) {
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, pixels, 0, nullptr))
        throw IoError("cannot size PNG " + path.string() + ": " + img.message);
    std::vector<unsigned char> blob(size);
    if (!png_image_write_to_memory(&img, blob.data(), &size, 0, pixels, 0, nullptr))
        throw IoError("cannot encode PNG " + path.string() + ": " + img.message);
    blob.resize(size);
    write_file_atomic(path, std::span<const unsigned char>(blob));
}

}  // namespace detail

// Values clamped to [0, 1] and quantized to 8 bits.
inline void save_png_image(const std::filesystem::path& path, const LatentGrid& image) {
    if (image.channels != 3)
        throw DimensionError("save_png_image: expected a 3-channel image, got " +
                             image.shape_str());
    std::vector<unsigned char> pixels(static_cast<std::size_t>(image.height) * image.width * 3);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c)
                pixels[(static_cast<std::size_t>(y) * image.width + x) * 3 + c] =
                    detail::to_byte(image.at(c, y, x));
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = PNG_FORMAT_RGB;
    detail::write_png_atomic(path, img, pixels.data());
}

// Grayscale PNG from mask values in [0, 1].
inline void save_png_gray(const std::filesystem::path& path, const MaskGrid& m) {
    std::vector<unsigned char> pixels(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) pixels[i] = detail::to_byte(m.values[i]);
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(m.width);
    img.height = static_cast<png_uint_32>(m.height);
    img.format = PNG_FORMAT_GRAY;
    detail::write_png_atomic(path, img, pixels.data());
}

/*===================================== PGM =====================================*/

// P5 (binary) writer; values in [0, 1] map to 0..255.
inline void save_pgm(const std::filesystem::path& path, const MaskGrid& m) {
    std::string head = "P5\n" + std::to_string(m.width) + " " + std::to_string(m.height) +
                       "\n255\n";
    std::vector<unsigned char> blob(head.begin(), head.end());
    for (double v : m.values) blob.push_back(detail::to_byte(v));
    write_file_atomic(path, std::span<const unsigned char>(blob));
}

namespace detail {

struct PnmCursor {
    const unsigned char* p;
    const unsigned char* end;
    std::string name;

    void skip_space() {
        while (p < end) {
            if (*p == '#') {
                while (p < end && *p != '\n') ++p;
            } else if (std::isspace(*p)) {
                ++p;
            } else {
                break;
            }
        }
    }
    int next_int() {
        skip_space();
        if (p >= end || !std::isdigit(*p)) throw IoError("malformed PGM header: " + name);
        int v = 0;
        while (p < end && std::isdigit(*p)) v = v * 10 + (*p++ - '0');
        return v;
    }
};

}  // namespace detail

// Reads P5 (binary) or P2 (ascii) up to maxval 255, returning raw gray levels
// rescaled to [0, 1]. Use load_mask() for the thresholded binary view.
inline MaskGrid load_pgm(const std::filesystem::path& path) {
    std::vector<unsigned char> bytes = read_file_bytes(path);
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2'))
        throw IoError("not a P5/P2 PGM file: " + path.string());
    bool binary = bytes[1] == '5';
    detail::PnmCursor cur{bytes.data() + 2, bytes.data() + bytes.size(), path.string()};
    int w = cur.next_int(), h = cur.next_int(), maxval = cur.next_int();
    if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
        throw IoError("unsupported PGM geometry/maxval in " + path.string());
    MaskGrid m(h, w);
    if (binary) {
        ++cur.p;  // single whitespace after maxval
        if (cur.end - cur.p < static_cast<std::ptrdiff_t>(m.size()))
            throw IoError("PGM payload truncated: " + path.string());
        for (std::size_t i = 0; i < m.size(); ++i)
            m.values[i] = static_cast<double>(cur.p[i]) / maxval;
    } else {
        for (std::size_t i = 0; i < m.size(); ++i)
            m.values[i] = static_cast<double>(cur.next_int()) / maxval;
    }
    return m;
}

/*===================================== masks =====================================*/

// Binary mask from an 8-bit grayscale PNG or PGM: level >= 128 reads as 1.
inline MaskGrid load_mask(const std::filesystem::path& path) {
    MaskGrid gray;
    if (path.extension() == ".pgm") {
        gray = load_pgm(path);
        for (double& v : gray.values) v = (v * 255.0 >= 128.0) ? 1.0 : 0.0;
        return gray;
    }
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str()))
        throw IoError("cannot read mask " + path.string() + ": " + img.message);
    img.format = PNG_FORMAT_GRAY;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw IoError("cannot decode mask " + path.string() + ": " + msg);
    }
    MaskGrid m(static_cast<int>(img.height), static_cast<int>(img.width));
    for (std::size_t i = 0; i < m.size(); ++i) m.values[i] = buf[i] >= 128 ? 1.0 : 0.0;
    return m;
}

}  // namespace freecond
