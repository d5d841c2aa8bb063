#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "freecond/errors.hpp"
#include "freecond/grid.hpp"

namespace freecond {

inline constexpr double kPi = std::numbers::pi;

// Unnormalized forward 2D DFT of a real field.
//
// Conventions used throughout:
//   forward   X[u,v] = sum_{y,x} f[y,x] * exp(-2*pi*i*(u*y/H + v*x/W))
//   inverse   f[y,x] = (1/(H*W)) * sum_{u,v} X[u,v] * exp(+2*pi*i*(...))
// so the DC bin of a constant field c is c*H*W.
struct Spectrum2D {
    int height = 0;
    int width  = 0;
    std::vector<std::complex<double>> values;  // row-major

    Spectrum2D() = default;
    Spectrum2D(int h, int w)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w) {}

    std::complex<double> at(int u, int v) const {
        return values[static_cast<std::size_t>(u) * width + v];
    }
    std::complex<double>& at(int u, int v) {
        return values[static_cast<std::size_t>(u) * width + v];
    }
};

namespace detail {

// exp(-2*pi*i*k/n) for k in [0, n); conjugate for the inverse direction.
inline std::vector<std::complex<double>> twiddles(int n, bool inverse) {
    std::vector<std::complex<double>> w(static_cast<std::size_t>(n));
    double sign = inverse ? 1.0 : -1.0;
    for (int k = 0; k < n; ++k) {
        double ang = sign * 2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
        w[k] = {std::cos(ang), std::sin(ang)};
    }
    return w;
}

// Signed frequency index: u in [0, n) -> s in (-n/2, n/2].
inline int signed_freq(int u, int n) {
    return (u <= n / 2) ? u : u - n;
}

// Normalized axis frequency in [-pi, pi].
inline double axis_omega(int u, int n) {
    return 2.0 * kPi * static_cast<double>(signed_freq(u, n)) / static_cast<double>(n);
}

}  // namespace detail

// Row-column decomposition: 1D DFTs along rows, then along columns.
inline Spectrum2D dft2(std::span<const double> field, int height, int width) {
    if (static_cast<std::size_t>(height) * width != field.size())
        throw DimensionError("dft2: field size " + std::to_string(field.size()) +
                             " does not match " + std::to_string(height) + "x" +
                             std::to_string(width));
    auto wh = detail::twiddles(height, false);
    auto ww = detail::twiddles(width, false);

    Spectrum2D rows(height, width);
    for (int y = 0; y < height; ++y) {
        for (int v = 0; v < width; ++v) {
            std::complex<double> acc{0.0, 0.0};
            for (int x = 0; x < width; ++x)
                acc += field[static_cast<std::size_t>(y) * width + x] *
                       ww[static_cast<std::size_t>(v) * x % width];
            rows.at(y, v) = acc;
        }
    }
    Spectrum2D out(height, width);
    for (int u = 0; u < height; ++u) {
        for (int v = 0; v < width; ++v) {
            std::complex<double> acc{0.0, 0.0};
            for (int y = 0; y < height; ++y)
                acc += rows.at(y, v) * wh[static_cast<std::size_t>(u) * y % height];
            out.at(u, v) = acc;
        }
    }
    return out;
}

// Inverse transform back to a real field. The spectrum must carry conjugate
// symmetry (it came from a real field); an imaginary residue >= 1e-6 on any
// output element is treated as corruption, residues below that are discarded.
inline std::vector<double> idft2(const Spectrum2D& s) {
    int height = s.height, width = s.width;
    auto wh = detail::twiddles(height, true);
    auto ww = detail::twiddles(width, true);

    std::vector<std::complex<double>> rows(static_cast<std::size_t>(height) * width);
    for (int u = 0; u < height; ++u) {
        for (int x = 0; x < width; ++x) {
            std::complex<double> acc{0.0, 0.0};
            for (int v = 0; v < width; ++v)
                acc += s.at(u, v) * ww[static_cast<std::size_t>(x) * v % width];
            rows[static_cast<std::size_t>(u) * width + x] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(height) * width);
    const double scale = 1.0 / (static_cast<double>(height) * static_cast<double>(width));
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            std::complex<double> acc{0.0, 0.0};
            for (int u = 0; u < height; ++u)
                acc += rows[static_cast<std::size_t>(u) * width + x] *
                       wh[static_cast<std::size_t>(y) * u % height];
            acc *= scale;
            if (std::abs(acc.imag()) >= 1e-6)
                throw IntegrityError("idft2: spectrum is not conjugate-symmetric (imag residue " +
                                     std::to_string(std::abs(acc.imag())) + ")");
            out[static_cast<std::size_t>(y) * width + x] = acc.real();
        }
    }
    return out;
}

// Ideal low-pass filter applied to every channel independently: bins whose
// Chebyshev-normalized frequency max(|w_u|, |w_v|) exceeds the cutoff are
// zeroed. With the Chebyshev norm a cutoff of pi keeps every bin, and that
// case short-circuits to an exact copy so the no-op configuration reduces
// bit-exactly to the unfiltered pipeline. cutoff = 0 keeps only DC, i.e.
// replaces each channel by its mean; the mean is preserved for every cutoff.
inline LatentGrid lpf(const LatentGrid& z, double cutoff) {
    if (!(cutoff >= 0.0 && cutoff <= kPi))
        throw DomainError("lpf: gamma outside [0, pi]");
    if (cutoff == kPi) return z;

    LatentGrid out = z;
    for (int c = 0; c < z.channels; ++c) {
        Spectrum2D spec = dft2(std::span<const double>(z.channel_data(c), z.plane()),
                               z.height, z.width);
        for (int u = 0; u < z.height; ++u) {
            double wu = std::abs(detail::axis_omega(u, z.height));
            for (int v = 0; v < z.width; ++v) {
                double wv = std::abs(detail::axis_omega(v, z.width));
                if (std::max(wu, wv) > cutoff) spec.at(u, v) = {0.0, 0.0};
            }
        }
        std::vector<double> filtered = idft2(spec);
        std::copy(filtered.begin(), filtered.end(), out.channel_data(c));
    }
    return out;
}

}  // namespace freecond
