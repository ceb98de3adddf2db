#pragma once

#include "gsfix/image.hpp"
#include "gsfix/io/files.hpp"

#include <png.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace gsfix {

namespace detail {

inline png_uint_32 png_format_for(int channels) {
    switch (channels) {
    case 1: return PNG_FORMAT_GRAY;
    case 2: return PNG_FORMAT_GA;
    case 3: return PNG_FORMAT_RGB;
    case 4: return PNG_FORMAT_RGBA;
    }
    fail(ErrorKind::Shape, "PNG supports 1 to 4 channels, got " + std::to_string(channels));
}

} // namespace detail

// 8-bit PNG bytes; values are clamped to [0,1] and rounded to k/255.
inline std::string encode_png(const Image &img) {
    require(img.width > 0 && img.height > 0, ErrorKind::Shape, "cannot encode an empty image");
    std::vector<std::uint8_t> pixels(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img.data[i], 0.0, 1.0) * 255.0));
    }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = detail::png_format_for(img.channels);
    png_alloc_size_t size = 0;
    require(png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr) != 0, ErrorKind::Io,
            std::string("PNG encode failed: ") + image.message);
    std::string out(size, '\0');
    require(png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr) != 0, ErrorKind::Io,
            std::string("PNG encode failed: ") + image.message);
    out.resize(size);
    return out;
}

// Decodes to `channels` channels (0 keeps the file's own layout) with values k/255.
inline Image decode_png(const std::string &bytes, int channels = 3, const std::string &what = "PNG data") {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    require(png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) != 0, ErrorKind::Io,
            what + ": " + image.message);
    if (channels == 0) {
        channels = static_cast<int>(PNG_IMAGE_PIXEL_CHANNELS(image.format));
    }
    image.format = detail::png_format_for(channels);
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
    if (png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr) == 0) {
        const std::string msg = image.message;
        png_image_free(&image);
        fail(ErrorKind::Io, what + ": " + msg);
    }
    Image img(static_cast<int>(image.width), static_cast<int>(image.height), channels);
    for (std::size_t i = 0; i < img.size(); ++i) {
        img.data[i] = pixels[i] / 255.0;
    }
    return img;
}

inline void write_png(const fs::path &path, const Image &img) { atomic_write(path, encode_png(img)); }

inline Image read_png(const fs::path &path, int channels = 3) {
    return decode_png(read_file(path), channels, path.string());
}

} // namespace gsfix
