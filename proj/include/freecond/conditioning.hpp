#pragma once

#include <string>

#include "freecond/errors.hpp"
#include "freecond/freq.hpp"
#include "freecond/grid.hpp"

namespace freecond {

// The FreeCond control tuple plus the scheduler length. Defaults reduce the
// pipeline to plain conditional inpainting: inner/outer mask scales (1, 0)
// leave the mask condition untouched and a cutoff of pi makes the low-pass
// stage an exact copy, so every transform below is a bit-exact no-op until a
// parameter is moved off its default.
struct FreeCondParams {
    double guidance_scale = 15.0;  // w in the CFG combination
    double inner_scale    = 1.0;   // alpha: value written where the mask is 1
    double outer_scale    = 0.0;   // beta: value written where the mask is 0
    double lpf_cutoff     = kPi;   // gamma in [0, pi]
    int    lpf_from_t     = 0;     // t_fc: filter active for t >= t_fc
    int    total_steps    = 50;    // T

    void validate() const {
        if (!(guidance_scale >= 0.0))
            throw DomainError("w must be >= 0, got " + std::to_string(guidance_scale));
        if (!(inner_scale >= 0.0))
            throw DomainError("alpha must be >= 0, got " + std::to_string(inner_scale));
        if (!(outer_scale >= 0.0))
            throw DomainError("beta must be >= 0, got " + std::to_string(outer_scale));
        if (!(lpf_cutoff >= 0.0 && lpf_cutoff <= kPi))
            throw DomainError("gamma outside [0, pi]");
        if (total_steps < 1)
            throw DomainError("T must be >= 1, got " + std::to_string(total_steps));
        if (lpf_from_t < 0 || lpf_from_t > total_steps)
            throw DomainError("t_fc must lie in [0, T], got " + std::to_string(lpf_from_t));
    }
};

// I^c: zero out the masked area, keep the rest. M is the full-resolution mask.
inline LatentGrid mask_image(const LatentGrid& image, const MaskGrid& mask) {
    require_binary(mask, "mask_image: mask");
    return hadamard(image, complement(mask));
}

// M^c: the input mask brought to latent resolution.
inline MaskGrid make_mask_condition(const MaskGrid& mask, int latent_factor = 4) {
    return downsample_nearest(mask, latent_factor);
}

// M^fc = alpha*M^c + beta*(1 - M^c). With (1, 0) this reproduces M^c exactly,
// including bit patterns, because 1*1 + 0*0 and 1*0 + 0*1 are exact.
inline MaskGrid freecond_mask(const MaskGrid& mc, double alpha, double beta) {
    require_binary(mc, "freecond_mask: mask condition");
    if (alpha < 0.0 || beta < 0.0)
        throw DomainError("freecond_mask: alpha/beta must be >= 0, got alpha=" +
                          std::to_string(alpha) + " beta=" + std::to_string(beta));
    MaskGrid out = mc;
    for (double& v : out.values) v = alpha * v + beta * (1.0 - v);
    return out;
}

// z^fc: low-pass the image condition during the early (large-t) steps.
// For t < t_fc the input is returned unchanged; for gamma = pi the filter
// itself short-circuits, so the default configuration never perturbs z^c.
inline LatentGrid freecond_image(const LatentGrid& zc, int t, const FreeCondParams& params) {
    if (t < 0 || t > params.total_steps)
        throw DomainError("freecond_image: t must lie in [0, T], got " + std::to_string(t));
    if (t < params.lpf_from_t) return zc;
    return lpf(zc, params.lpf_cutoff);
}

}  // namespace freecond
