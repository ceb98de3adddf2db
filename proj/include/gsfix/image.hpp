#pragma once

#include "gsfix/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace gsfix {

// Row-major interleaved float image, values nominally in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c = 3, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {
        require(w >= 0 && h >= 0 && c > 0, ErrorKind::Shape, "image dimensions must be non-negative");
    }

    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double &at(int x, int y, int c) { return data[index(x, y, c)]; }
    double at(int x, int y, int c) const { return data[index(x, y, c)]; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    bool same_shape(const Image &other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }

    friend bool operator==(const Image &, const Image &) = default;
};

inline void require_same_shape(const Image &a, const Image &b, const std::string &what) {
    require(a.same_shape(b), ErrorKind::Shape,
            what + ": image shapes differ (" + std::to_string(a.width) + "x" + std::to_string(a.height) + "x" +
                std::to_string(a.channels) + " vs " + std::to_string(b.width) + "x" + std::to_string(b.height) +
                "x" + std::to_string(b.channels) + ")");
}

// Snap to the 8-bit grid used by PNG interchange.
inline Image quantize8(const Image &img) {
    Image out = img;
    for (double &v : out.data) {
        v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    }
    return out;
}

} // namespace gsfix
