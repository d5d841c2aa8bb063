#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>

#include "freecond/conditioning.hpp"
#include "freecond/errors.hpp"
#include "freecond/grid.hpp"
#include "freecond/rng.hpp"
#include "freecond/toynet.hpp"

namespace freecond {

/*===================================== schedule =====================================*/

// Linear noise-level schedule over integer timesteps T..0. alpha_bar[t] is
// the clean-signal fraction at step t: alpha_bar[0] = 1 (clean),
// alpha_bar[T] = 0.005 (almost pure noise), strictly decreasing in t.
struct SamplerSchedule {
    int total_steps = 0;
    std::vector<double> alpha_bar;  // size total_steps + 1, indexed by t

    static SamplerSchedule make(int total_steps) {
        if (total_steps < 1)
            throw DomainError("schedule needs at least 1 step, got " +
                              std::to_string(total_steps));
        const double final_level = 0.005;
        SamplerSchedule s;
        s.total_steps = total_steps;
        s.alpha_bar.resize(static_cast<std::size_t>(total_steps) + 1);
        for (int t = 0; t <= total_steps; ++t)
            s.alpha_bar[t] = 1.0 - (1.0 - final_level) * static_cast<double>(t) /
                                       static_cast<double>(total_steps);
        return s;
    }
};

/*===================================== primitive ops =====================================*/

// i.i.d. standard normal latent from the seeded stream; values are squeezed
// through float32 like the weights so saved latents reload bit-exactly.
inline LatentGrid sample_initial_noise(int channels, int height, int width,
                                       std::uint64_t seed) {
    LatentGrid z(channels, height, width);
    SeededStream rng(seed);
    for (double& v : z.values) v = quantize_f32(rng.next_normal());
    return z;
}

// eps_uncond + w * (eps_cond - eps_uncond). w = 1 and w = 0 return the
// conditional / unconditional input verbatim (no arithmetic), so those
// settings are exact by construction.
inline LatentGrid cfg_combine(const LatentGrid& eps_uncond, const LatentGrid& eps_cond,
                              double w) {
    if (!eps_uncond.same_shape(eps_cond))
        throw DimensionError("cfg_combine: " + eps_uncond.shape_str() + " vs " +
                             eps_cond.shape_str());
    if (w == 1.0) return eps_cond;
    if (w == 0.0) return eps_uncond;
    LatentGrid out = eps_uncond;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = eps_uncond.values[i] + w * (eps_cond.values[i] - eps_uncond.values[i]);
    return out;
}

// Deterministic (zero-stochasticity) update from step t to t_prev:
//   x0     = (z_t - sqrt(1 - alpha_bar[t]) * eps) / sqrt(alpha_bar[t])
//   z_prev = sqrt(alpha_bar[t_prev]) * x0 + sqrt(1 - alpha_bar[t_prev]) * eps
// i.e. re-noise the implied clean estimate to the target noise level.
inline LatentGrid denoise_step(const LatentGrid& z_t, const LatentGrid& eps_hat, int t,
                               int t_prev, const SamplerSchedule& schedule) {
    if (t_prev >= t)
        throw DomainError("denoise_step: timesteps inverted (t=" + std::to_string(t) +
                          ", t_prev=" + std::to_string(t_prev) + ")");
    if (t_prev < 0 || t > schedule.total_steps)
        throw DomainError("denoise_step: steps outside [0, " +
                          std::to_string(schedule.total_steps) + "]");
    if (!z_t.same_shape(eps_hat))
        throw DimensionError("denoise_step: " + z_t.shape_str() + " vs " +
                             eps_hat.shape_str());
    double ab_t = schedule.alpha_bar[t];
    double ab_p = schedule.alpha_bar[t_prev];
    double sq_t = std::sqrt(ab_t), sq_1t = std::sqrt(1.0 - ab_t);
    double sq_p = std::sqrt(ab_p), sq_1p = std::sqrt(1.0 - ab_p);
    LatentGrid out = z_t;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        double x0 = (z_t.values[i] - sq_1t * eps_hat.values[i]) / sq_t;
        out.values[i] = sq_p * x0 + sq_1p * eps_hat.values[i];
    }
    return out;
}

/*===================================== full run =====================================*/

// Everything needed to reproduce a run, serialized beside the output.
// wall_seconds is informational only and never written to disk, so run
// artifacts stay byte-identical across repeats and worker counts.
struct RunRecord {
    FreeCondParams params;
    NetConfig net;
    std::uint64_t noise_seed = 0;
    std::string prompt;
    std::string image_path;
    std::string mask_path;
    std::string output_path;
    bool empty_mask = false;
    double wall_seconds = 0.0;
};

struct InpaintResult {
    LatentGrid output;   // decoded 3-channel image
    LatentGrid z_final;  // latent at t = 0
    RunRecord record;
};

// Called with (T, z_T) before the first step and (t_prev, z) after each step;
// lets tests compare whole trajectories without re-running anything.
using StepObserver = std::function<void(int t, const LatentGrid& z)>;

// The generalized loop: conditions built once, then per step the FreeCond
// transforms pick the effective (z^fc, M^fc), the denoiser runs under the
// prompt and under the null prompt, the two predictions are CFG-combined and
// the latent stepped. With default params every transform is an exact no-op
// and this is plain CFG inpainting.
// Full conditioned denoising loop. The known region is carried only through
// the conditioning channels — there is no explicit latent blending or
// background paste-back between steps, and every step is noise-free, so the
// trajectory is a pure function of (inputs, seeds).
inline InpaintResult inpaint(const LatentGrid& image, const MaskGrid& mask,
                             const std::string& prompt, const FreeCondParams& params,
                             const NetWeights& weights, std::uint64_t noise_seed,
                             const StepObserver& observer = {}) {
    auto t_start = std::chrono::steady_clock::now();
    params.validate();
    require_binary(mask, "inpaint: mask");
    const NetConfig& c = weights.config;
    if (image.channels != 3)
        throw DimensionError("inpaint: expected a 3-channel image, got " + image.shape_str());
    if (mask.height != image.height || mask.width != image.width)
        throw DimensionError("inpaint: mask " + mask.shape_str() + " vs image " +
                             image.shape_str());

    LatentGrid ic = mask_image(image, mask);
    LatentGrid zc = encode_image(ic, weights);
    MaskGrid mc = make_mask_condition(mask, c.latent_factor);
    MaskGrid mfc = freecond_mask(mc, params.inner_scale, params.outer_scale);
    PromptEmbedding cond = text_encode(prompt, weights);
    PromptEmbedding null_cond = text_encode("", weights);
    SamplerSchedule sched = SamplerSchedule::make(params.total_steps);

    LatentGrid z = sample_initial_noise(c.latent_channels, image.height / c.latent_factor,
                                        image.width / c.latent_factor, noise_seed);
    if (observer) observer(params.total_steps, z);

    for (int t = params.total_steps; t >= 1; --t) {
        LatentGrid zfc = freecond_image(zc, t, params);
        LatentGrid eps_c = predict_noise(z, zfc, mfc, t, cond, weights);
        LatentGrid eps_u = predict_noise(z, zfc, mfc, t, null_cond, weights);
        LatentGrid eps = cfg_combine(eps_u, eps_c, params.guidance_scale);
        z = denoise_step(z, eps, t, t - 1, sched);
        if (observer) observer(t - 1, z);
    }

    InpaintResult res;
    res.output = decode_latent(z, weights);
    res.z_final = std::move(z);
    res.record.params = params;
    res.record.net = c;
    res.record.noise_seed = noise_seed;
    res.record.prompt = prompt;
    res.record.empty_mask = (mask.sum() == 0.0);
    res.record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

}  // namespace freecond
