#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "freecond/errors.hpp"

namespace freecond {

/*===================================== containers =====================================*/

// 2D non-negative scalar field. Binary masks hold exactly {0,1}; scaled mask
// conditions reuse the same type with arbitrary non-negative values.
struct MaskGrid {
    int height = 0;
    int width  = 0;
    std::vector<double> values;  // row-major

    MaskGrid() = default;
    MaskGrid(int h, int w, double fill = 0.0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
    double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return values.size(); }

    bool is_binary() const {
        return std::all_of(values.begin(), values.end(),
                           [](double v) { return v == 0.0 || v == 1.0; });
    }

    double sum() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }

    bool all_finite() const {
        return std::all_of(values.begin(), values.end(),
                           [](double v) { return std::isfinite(v); });
    }

    std::string shape_str() const {
        return std::to_string(height) + "x" + std::to_string(width);
    }
};

// channels x height x width scalar field; holds latents, noise predictions,
// feature maps and (with channels == 3) plain images.
struct LatentGrid {
    int channels = 0;
    int height   = 0;
    int width    = 0;
    std::vector<double> values;  // channel-major, each channel row-major

    LatentGrid() = default;
    LatentGrid(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          values(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return values.size(); }

    double at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double& at(int c, int y, int x) {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    const double* channel_data(int c) const { return values.data() + c * plane(); }
    double* channel_data(int c) { return values.data() + c * plane(); }

    bool all_finite() const {
        return std::all_of(values.begin(), values.end(),
                           [](double v) { return std::isfinite(v); });
    }

    bool same_shape(const LatentGrid& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    std::string shape_str() const {
        return std::to_string(channels) + "x" + std::to_string(height) + "x" +
               std::to_string(width);
    }
};

inline void require_binary(const MaskGrid& m, const char* what) {
    if (!m.is_binary())
        throw DomainError(std::string(what) + ": mask must be binary (every value 0 or 1)");
}

/*===================================== operations =====================================*/

// Elementwise product of two equally shaped grids.
inline LatentGrid hadamard(const LatentGrid& a, const LatentGrid& b) {
    if (!a.same_shape(b))
        throw DimensionError("hadamard: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    LatentGrid out = a;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= b.values[i];
    return out;
}

// Mask broadcast over channels.
inline LatentGrid hadamard(const LatentGrid& a, const MaskGrid& m) {
    if (a.height != m.height || a.width != m.width)
        throw DimensionError("hadamard: shape mismatch " + a.shape_str() + " vs " + m.shape_str());
    LatentGrid out = a;
    for (int c = 0; c < a.channels; ++c) {
        double* plane = out.channel_data(c);
        for (std::size_t i = 0; i < m.size(); ++i) plane[i] *= m.values[i];
    }
    return out;
}

// 1 - m on a binary mask.
inline MaskGrid complement(const MaskGrid& m) {
    require_binary(m, "complement");
    MaskGrid out = m;
    for (double& v : out.values) v = 1.0 - v;
    return out;
}

// Nearest-neighbor downsampling. Convention: output cell (i, j) samples the
// top-left source pixel of its block, m[i*factor][j*factor].
inline MaskGrid downsample_nearest(const MaskGrid& m, int factor) {
    if (factor <= 0) throw DomainError("downsample_nearest: factor must be positive");
    if (m.height % factor != 0 || m.width % factor != 0)
        throw DimensionError("downsample_nearest: " + m.shape_str() +
                             " not divisible by factor " + std::to_string(factor));
    MaskGrid out(m.height / factor, m.width / factor);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.at(y, x) = m.at(y * factor, x * factor);
    return out;
}

// Morphological dilation with a (2*radius+1)^2 square structuring element.
inline MaskGrid dilate(const MaskGrid& m, int radius) {
    require_binary(m, "dilate");
    if (radius < 0) throw DomainError("dilate: radius must be >= 0");
    if (radius == 0) return m;
    MaskGrid out(m.height, m.width);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (m.at(y, x) != 1.0) continue;
            int y0 = std::max(0, y - radius), y1 = std::min(m.height - 1, y + radius);
            int x0 = std::max(0, x - radius), x1 = std::min(m.width - 1, x + radius);
            for (int yy = y0; yy <= y1; ++yy)
                for (int xx = x0; xx <= x1; ++xx) out.at(yy, xx) = 1.0;
        }
    }
    return out;
}

// Translation by (dx, dy) pixels; exposed borders are zero-filled and pixels
// pushed off the grid are dropped.
inline MaskGrid shift(const MaskGrid& m, int dx, int dy) {
    require_binary(m, "shift");
    MaskGrid out(m.height, m.width);
    for (int y = 0; y < m.height; ++y) {
        int sy = y - dy;
        if (sy < 0 || sy >= m.height) continue;
        for (int x = 0; x < m.width; ++x) {
            int sx = x - dx;
            if (sx < 0 || sx >= m.width) continue;
            out.at(y, x) = m.at(sy, sx);
        }
    }
    return out;
}

}  // namespace freecond
