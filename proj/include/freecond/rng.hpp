#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace freecond {

// Deterministic 64-bit stream (splitmix64 state advance). Every random value
// in this project comes out of one of these, so a (seed, draw-order) pair
// fully determines all weights and noise across processes and platforms.
class SeededStream {
public:
    explicit SeededStream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 bits of mantissa.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (cosine branch). Consumes exactly two
    // u64 draws per value; u1 is mapped into (0, 1] so log() is always finite.
    double next_normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
        double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

// Round through float32. Generated weights and noise are quantized with this
// at birth so the float32 on-disk tensor format round-trips bit-exactly.
inline double quantize_f32(double v) {
    return static_cast<double>(static_cast<float>(v));
}

}  // namespace freecond
