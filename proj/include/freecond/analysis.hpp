#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "freecond/errors.hpp"
#include "freecond/grid.hpp"
#include "freecond/sampler.hpp"
#include "freecond/toynet.hpp"

namespace freecond {

/*===================================== channel influence =====================================*/

// CI(Q, m, k)_i = (1/sum_j m_j) * sum_j (Q_j * k)_i * m_j — the masked
// average of the elementwise product between each query vector and one token
// key, kept per channel. Summing over i recovers the masked-average logit
// <Q_j, k> (times sqrt(d) relative to the softmax input), so this is a
// channelwise decomposition of the attention strength inside the region.
inline std::vector<double> channel_influence(const Mat& q, std::span<const double> m_flat,
                                             std::span<const double> k) {
    if (static_cast<int>(m_flat.size()) != q.rows)
        throw DimensionError("channel_influence: region length " +
                             std::to_string(m_flat.size()) + " vs " + std::to_string(q.rows) +
                             " query positions");
    if (static_cast<int>(k.size()) != q.cols)
        throw DimensionError("channel_influence: key length " + std::to_string(k.size()) +
                             " vs " + std::to_string(q.cols) + " channels");
    double msum = 0.0;
    for (double v : m_flat) msum += v;
    if (msum <= 0.0)
        throw DomainError("channel_influence: empty region (mask weights sum to zero)");

    std::vector<double> ci(q.cols, 0.0);
    for (int j = 0; j < q.rows; ++j) {
        double m = m_flat[j];
        if (m == 0.0) continue;
        const double* qj = q.row(j);
        for (int i = 0; i < q.cols; ++i) ci[i] += m * qj[i];
    }
    for (int i = 0; i < q.cols; ++i) ci[i] = ci[i] * k[i] / msum;
    return ci;
}

/*===================================== query construction =====================================*/

// Query matrix (positions x d) for a given conditioning triple. Layer 0
// projects the input-conv features directly; layer 1 first applies the
// self-attention block. Neither depends on the timestep — time conditioning
// enters the network after cross-attention.
inline Mat query_features(const LatentGrid& z_t, const MaskGrid& mc, const LatentGrid& zc,
                          const NetWeights& w, int layer = 0) {
    if (layer != 0 && layer != 1)
        throw DomainError("query_features: layer must be 0 or 1, got " + std::to_string(layer));
    LatentGrid h = input_conv(z_t, mc, zc, w);
    if (layer == 1) {
        Mat hp = to_positions(h);
        Mat proj = project_rows(to_positions(self_attention(h, w)), w.self_wo);
        for (std::size_t i = 0; i < hp.values.size(); ++i) hp.values[i] += proj.values[i];
        h = from_positions(hp, h.height, h.width);
    }
    return project_rows(to_positions(h), w.cross_wq);
}

inline std::vector<double> token_key(const PromptEmbedding& p, int token_index,
                                     const NetWeights& w) {
    if (token_index < 0 || token_index >= p.tokens.rows)
        throw DomainError("token index " + std::to_string(token_index) + " out of range [0, " +
                          std::to_string(p.tokens.rows) + ")");
    std::vector<double> k(w.cross_wk.rows);
    const double* tok = p.tokens.row(token_index);
    for (int i = 0; i < w.cross_wk.rows; ++i) {
        const double* wi = w.cross_wk.row(i);
        double acc = 0.0;
        for (int j = 0; j < w.cross_wk.cols; ++j) acc += wi[j] * tok[j];
        k[i] = acc;
    }
    return k;
}

/*===================================== delta CI =====================================*/

struct DeltaCI {
    std::vector<double> ci_masked;  // CI(Q^l, region, k)
    std::vector<double> ci_zero;    // CI(Q^n, region, k) — same region on purpose
    std::vector<double> delta;      // ci_masked - ci_zero
};

// Compares the run conditioned on the real mask (z^l, M^l) against a
// companion with the zero mask and the unmasked image condition (z^n, M^n),
// both seeing the same noise latent z_t. Both CI evaluations use the SAME
// region weights; only the conditioning that built Q differs. Identical
// conditioning therefore gives an exactly zero delta.
inline DeltaCI delta_ci(const LatentGrid& z_t, const LatentGrid& zc_l, const MaskGrid& mc_l,
                        const LatentGrid& zc_n, const MaskGrid& mc_n,
                        std::span<const double> region, const PromptEmbedding& p,
                        int token_index, const NetWeights& w, int layer = 0) {
    Mat ql = query_features(z_t, mc_l, zc_l, w, layer);
    Mat qn = query_features(z_t, mc_n, zc_n, w, layer);
    std::vector<double> k = token_key(p, token_index, w);
    DeltaCI out;
    out.ci_masked = channel_influence(ql, region, k);
    out.ci_zero = channel_influence(qn, region, k);
    out.delta.resize(out.ci_masked.size());
    for (std::size_t i = 0; i < out.delta.size(); ++i)
        out.delta[i] = out.ci_masked[i] - out.ci_zero[i];
    return out;
}

// Convenience overload: region defaults to the mask M^l itself.
inline DeltaCI delta_ci(const LatentGrid& z_t, const LatentGrid& zc_l, const MaskGrid& mc_l,
                        const LatentGrid& zc_n, const MaskGrid& mc_n,
                        const PromptEmbedding& p, int token_index, const NetWeights& w,
                        int layer = 0) {
    return delta_ci(z_t, zc_l, mc_l, zc_n, mc_n,
                    std::span<const double>(mc_l.values.data(), mc_l.values.size()), p,
                    token_index, w, layer);
}

/*===================================== attention maps =====================================*/

// One token's attention column reshaped to the latent grid; softmax output,
// so every value sits in [0, 1] and summing the maps of all tokens gives 1
// at each position.
inline MaskGrid extract_attention_map(const AttentionRecord& record, int token_index) {
    if (token_index < 0 || token_index >= record.attention.cols)
        throw DomainError("token index " + std::to_string(token_index) + " out of range [0, " +
                          std::to_string(record.attention.cols) + ")");
    if (record.height * record.width != record.attention.rows)
        throw DimensionError("attention record: " + std::to_string(record.attention.rows) +
                             " positions vs " + std::to_string(record.height) + "x" +
                             std::to_string(record.width));
    MaskGrid heat(record.height, record.width);
    for (int p = 0; p < record.attention.rows; ++p)
        heat.values[p] = record.attention.at(p, token_index);
    return heat;
}

/*===================================== mask placement =====================================*/

enum class MaskPlacement { not_masked, partially_masked, fully_masked };

inline const char* to_string(MaskPlacement p) {
    switch (p) {
        case MaskPlacement::not_masked: return "not_masked";
        case MaskPlacement::partially_masked: return "partially_masked";
        default: return "fully_masked";
    }
}

// Overlap fraction of the object with the inpainting mask: 0 -> untouched,
// 1 -> fully covered, anything else partial. Counts are integer-valued
// doubles, so the boundary comparisons are exact.
inline MaskPlacement mask_placement_classify(const MaskGrid& object_mask,
                                             const MaskGrid& inpaint_mask) {
    require_binary(object_mask, "mask_placement_classify: object mask");
    require_binary(inpaint_mask, "mask_placement_classify: inpaint mask");
    if (object_mask.height != inpaint_mask.height || object_mask.width != inpaint_mask.width)
        throw DimensionError("mask_placement_classify: " + object_mask.shape_str() + " vs " +
                             inpaint_mask.shape_str());
    double object_count = object_mask.sum();
    if (object_count == 0.0)
        throw DomainError("mask_placement_classify: empty object mask");
    double overlap = 0.0;
    for (std::size_t i = 0; i < object_mask.values.size(); ++i)
        overlap += object_mask.values[i] * inpaint_mask.values[i];
    if (overlap == 0.0) return MaskPlacement::not_masked;
    if (overlap == object_count) return MaskPlacement::fully_masked;
    return MaskPlacement::partially_masked;
}

/*===================================== shift experiment =====================================*/

// Two inpaint runs differing only in a horizontal mask translation; shared
// weights and noise seed so every output difference is attributable to the
// mask move (which exposes image content the original mask hid).
inline std::pair<InpaintResult, InpaintResult> run_shift_experiment(
    const LatentGrid& image, const MaskGrid& mask, const std::string& prompt, int shift_px,
    const FreeCondParams& params, const NetWeights& weights, std::uint64_t noise_seed) {
    MaskGrid shifted = shift(mask, shift_px, 0);
    if (shifted.sum() == 0.0)
        throw DomainError("run_shift_experiment: shifted mask is empty (shift " +
                          std::to_string(shift_px) + " px)");
    InpaintResult base = inpaint(image, mask, prompt, params, weights, noise_seed);
    InpaintResult moved = inpaint(image, shifted, prompt, params, weights, noise_seed);
    return {std::move(base), std::move(moved)};
}

}  // namespace freecond
