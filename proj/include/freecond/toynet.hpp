#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "freecond/errors.hpp"
#include "freecond/grid.hpp"
#include "freecond/rng.hpp"
#include "freecond/util.hpp"

namespace freecond {

/*===================================== small dense matrix =====================================*/

struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;  // row-major

    Mat() = default;
    Mat(int r, int c, double fill = 0.0)
        : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}

    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    const double* row(int r) const { return values.data() + static_cast<std::size_t>(r) * cols; }
    double* row(int r) { return values.data() + static_cast<std::size_t>(r) * cols; }
};

/*===================================== config / weights =====================================*/

// Everything that sizes the toy denoiser. Weights are a pure function of this
// struct (the seed included); latent_height/width only size the default noise
// shape — the forward ops accept any spatial size.
struct NetConfig {
    int latent_channels  = 4;
    int feature_channels = 64;  // d; attention width
    int text_len         = 77;
    int latent_factor    = 4;   // image -> latent downsampling stride
    int latent_height    = 16;
    int latent_width     = 16;
    int timesteps        = 50;  // sizes the (T+1)-row time embedding table
    std::uint64_t seed   = 42;

    int concat_channels() const { return 2 * latent_channels + 1; }  // [z_t, M, z^c]
    int patch_values() const { return 3 * latent_factor * latent_factor; }

    void validate() const {
        if (latent_channels < 1)
            throw DomainError("latent_channels must be >= 1");
        if (feature_channels < 1)
            throw DomainError("feature_channels must be >= 1");
        if (text_len < 2)
            throw DomainError("text_len must be >= 2 (room for start/end markers)");
        if (latent_factor < 1)
            throw DomainError("latent_factor must be >= 1");
        if (latent_height < 4 || latent_width < 4)
            throw DomainError("latent dims must be >= 4, got " +
                              std::to_string(latent_height) + "x" + std::to_string(latent_width));
        if (timesteps < 1)
            throw DomainError("timesteps must be >= 1");
    }
};

// Token embedding table layout: fixed special rows, then hashed word rows.
inline constexpr int kTokenTableRows = 1024;
inline constexpr int kSotRow = 0;
inline constexpr int kEotRow = 1;
inline constexpr int kPadRow = 2;

inline int token_row(const std::string& word) {
    return 3 + static_cast<int>(fnv1a64(word) % (kTokenTableRows - 3));
}

// All learned-looking state. Deterministically generated, never trained.
struct NetWeights {
    NetConfig config;

    Mat encoder_w;                      // latent_channels x patch_values
    std::vector<double> encoder_b;      // latent_channels
    Mat decoder_w;                      // patch_values x latent_channels
    std::vector<double> decoder_b;      // patch_values
    std::vector<double> input_conv_w;   // [d][concat][3][3]
    std::vector<double> input_conv_b;   // d
    Mat self_wq, self_wk, self_wv, self_wo;      // d x d
    Mat cross_wq, cross_wk, cross_wv, cross_wo;  // d x d
    Mat out_proj_w;                     // latent_channels x d
    std::vector<double> out_proj_b;     // latent_channels
    Mat token_table;                    // kTokenTableRows x d
    Mat time_table;                     // (timesteps+1) x d

    void allocate() {
        int lc = config.latent_channels, d = config.feature_channels;
        int pv = config.patch_values(), cc = config.concat_channels();
        encoder_w = Mat(lc, pv);
        encoder_b.assign(lc, 0.0);
        decoder_w = Mat(pv, lc);
        decoder_b.assign(pv, 0.0);
        input_conv_w.assign(static_cast<std::size_t>(d) * cc * 9, 0.0);
        input_conv_b.assign(d, 0.0);
        self_wq = self_wk = self_wv = self_wo = Mat(d, d);
        cross_wq = cross_wk = cross_wv = cross_wo = Mat(d, d);
        out_proj_w = Mat(lc, d);
        out_proj_b.assign(lc, 0.0);
        token_table = Mat(kTokenTableRows, d);
        time_table = Mat(config.timesteps + 1, d);
    }

    // Visits every tensor in the fixed generation/serialization order.
    // f(name, shape, values-vector).
    template <class Self, class F>
    static void visit_tensors(Self& self, F&& f) {
        const NetConfig& c = self.config;
        int lc = c.latent_channels, d = c.feature_channels;
        int pv = c.patch_values(), cc = c.concat_channels();
        f("encoder_w", std::vector<int>{lc, pv}, self.encoder_w.values);
        f("encoder_b", std::vector<int>{lc}, self.encoder_b);
        f("decoder_w", std::vector<int>{pv, lc}, self.decoder_w.values);
        f("decoder_b", std::vector<int>{pv}, self.decoder_b);
        f("input_conv_w", std::vector<int>{d, cc, 3, 3}, self.input_conv_w);
        f("input_conv_b", std::vector<int>{d}, self.input_conv_b);
        f("self_wq", std::vector<int>{d, d}, self.self_wq.values);
        f("self_wk", std::vector<int>{d, d}, self.self_wk.values);
        f("self_wv", std::vector<int>{d, d}, self.self_wv.values);
        f("self_wo", std::vector<int>{d, d}, self.self_wo.values);
        f("cross_wq", std::vector<int>{d, d}, self.cross_wq.values);
        f("cross_wk", std::vector<int>{d, d}, self.cross_wk.values);
        f("cross_wv", std::vector<int>{d, d}, self.cross_wv.values);
        f("cross_wo", std::vector<int>{d, d}, self.cross_wo.values);
        f("out_proj_w", std::vector<int>{lc, d}, self.out_proj_w.values);
        f("out_proj_b", std::vector<int>{lc}, self.out_proj_b);
        f("token_table", std::vector<int>{kTokenTableRows, d}, self.token_table.values);
        f("time_table", std::vector<int>{c.timesteps + 1, d}, self.time_table.values);
    }
    template <class F> void for_each_tensor(F&& f) { visit_tensors(*this, f); }
    template <class F> void for_each_tensor(F&& f) const { visit_tensors(*this, f); }
};

// 1/sqrt(fan_in) for projections (biases share their layer's scale);
// embedding tables use unit scale.
inline double init_scale(const std::string& name, const NetConfig& c) {
    if (name.rfind("encoder", 0) == 0) return 1.0 / std::sqrt(static_cast<double>(c.patch_values()));
    if (name.rfind("decoder", 0) == 0) return 1.0 / std::sqrt(static_cast<double>(c.latent_channels));
    if (name.rfind("input_conv", 0) == 0)
        return 1.0 / std::sqrt(static_cast<double>(c.concat_channels() * 9));
    if (name == "token_table" || name == "time_table") return 1.0;
    return 1.0 / std::sqrt(static_cast<double>(c.feature_channels));
}

// One stream, fixed draw order, every value squeezed through float32 so the
// on-disk tensors reload bit-exactly. Same (config, seed) => same bits.
inline NetWeights gen_weights(const NetConfig& config) {
    config.validate();
    NetWeights w;
    w.config = config;
    w.allocate();
    SeededStream rng(config.seed);
    w.for_each_tensor([&](const std::string& name, const std::vector<int>&,
                          std::vector<double>& values) {
        double scale = init_scale(name, config);
        for (double& v : values) v = quantize_f32(scale * rng.next_normal());
    });
    return w;
}

/*===================================== text encoder =====================================*/

struct PromptEmbedding {
    Mat tokens;  // text_len x d
    std::vector<std::string> token_labels;
};

// Whitespace tokenizer + embedding lookup: [<sot>, words..., <eot>, <pad>...],
// truncated to text_len. The empty string is the null prompt.
inline PromptEmbedding text_encode(const std::string& prompt, const NetWeights& w) {
    int len = w.config.text_len, d = w.config.feature_channels;
    std::vector<std::string> words;
    std::istringstream ss(prompt);
    std::string tok;
    while (ss >> tok) words.push_back(tok);
    if (static_cast<int>(words.size()) > len - 2) words.resize(len - 2);

    PromptEmbedding p;
    p.tokens = Mat(len, d);
    p.token_labels.reserve(len);
    std::vector<int> rows;
    rows.push_back(kSotRow);
    p.token_labels.push_back("<sot>");
    for (const std::string& word : words) {
        rows.push_back(token_row(word));
        p.token_labels.push_back(word);
    }
    rows.push_back(kEotRow);
    p.token_labels.push_back("<eot>");
    while (static_cast<int>(rows.size()) < len) {
        rows.push_back(kPadRow);
        p.token_labels.push_back("<pad>");
    }
    for (int i = 0; i < len; ++i)
        for (int j = 0; j < d; ++j) p.tokens.at(i, j) = w.token_table.at(rows[i], j);
    return p;
}

/*===================================== layout helpers =====================================*/

// channel-major field -> positions x channels matrix (row-major positions).
inline Mat to_positions(const LatentGrid& g) {
    Mat m(g.height * g.width, g.channels);
    for (int c = 0; c < g.channels; ++c) {
        const double* plane = g.channel_data(c);
        for (int p = 0; p < m.rows; ++p) m.at(p, c) = plane[p];
    }
    return m;
}

inline LatentGrid from_positions(const Mat& m, int height, int width) {
    LatentGrid g(m.cols, height, width);
    for (int c = 0; c < m.cols; ++c) {
        double* plane = g.channel_data(c);
        for (int p = 0; p < m.rows; ++p) plane[p] = m.at(p, c);
    }
    return g;
}

// Applies W (out x in) to every row of H (positions x in): out = H * W^T.
inline Mat project_rows(const Mat& h, const Mat& w) {
    if (h.cols != w.cols)
        throw DimensionError("project_rows: feature dim " + std::to_string(h.cols) +
                             " does not match weight columns " + std::to_string(w.cols));
    Mat out(h.rows, w.rows);
    for (int p = 0; p < h.rows; ++p) {
        const double* hp = h.row(p);
        double* op = out.row(p);
        for (int i = 0; i < w.rows; ++i) {
            const double* wi = w.row(i);
            double acc = 0.0;
            for (int j = 0; j < h.cols; ++j) acc += wi[j] * hp[j];
            op[i] = acc;
        }
    }
    return out;
}

// In-place row softmax with max subtraction.
inline void softmax_rows(Mat& m) {
    for (int r = 0; r < m.rows; ++r) {
        double* row = m.row(r);
        double mx = row[0];
        for (int c = 1; c < m.cols; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (int c = 0; c < m.cols; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        for (int c = 0; c < m.cols; ++c) row[c] /= sum;
    }
}

// Softmax(Q K^T / sqrt(d)) with Q: P x d, K: L x d. Returns P x L.
inline Mat attention_weights(const Mat& q, const Mat& k) {
    Mat logits(q.rows, k.rows);
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols));
    for (int p = 0; p < q.rows; ++p) {
        const double* qp = q.row(p);
        double* lp = logits.row(p);
        for (int t = 0; t < k.rows; ++t) {
            const double* kt = k.row(t);
            double acc = 0.0;
            for (int j = 0; j < q.cols; ++j) acc += qp[j] * kt[j];
            lp[t] = acc * inv_sqrt_d;
        }
    }
    softmax_rows(logits);
    return logits;
}

// attn (P x L) times V (L x d) -> P x d.
inline Mat attention_apply(const Mat& attn, const Mat& v) {
    Mat out(attn.rows, v.cols);
    for (int p = 0; p < attn.rows; ++p) {
        const double* ap = attn.row(p);
        double* op = out.row(p);
        for (int t = 0; t < attn.cols; ++t) {
            double a = ap[t];
            const double* vt = v.row(t);
            for (int j = 0; j < v.cols; ++j) op[j] += a * vt[j];
        }
    }
    return out;
}

/*===================================== forward ops =====================================*/

// Toy stand-in for the VAE encoder: each latent_factor-square RGB patch maps
// affinely to one latent vector. Patch values are ordered channel-major
// (ic * f + py) * f + px.
inline LatentGrid encode_image(const LatentGrid& image, const NetWeights& w) {
    const NetConfig& c = w.config;
    int f = c.latent_factor;
    if (image.channels != 3)
        throw DimensionError("encode_image: expected a 3-channel image, got " + image.shape_str());
    if (image.height % f != 0 || image.width % f != 0)
        throw DimensionError("encode_image: image " + image.shape_str() +
                             " not divisible by latent_factor " + std::to_string(f));
    int lh = image.height / f, lw = image.width / f;
    LatentGrid out(c.latent_channels, lh, lw);
    std::vector<double> patch(c.patch_values());
    for (int y = 0; y < lh; ++y) {
        for (int x = 0; x < lw; ++x) {
            for (int ic = 0; ic < 3; ++ic)
                for (int py = 0; py < f; ++py)
                    for (int px = 0; px < f; ++px)
                        patch[(ic * f + py) * f + px] = image.at(ic, y * f + py, x * f + px);
            for (int oc = 0; oc < c.latent_channels; ++oc) {
                const double* row = w.encoder_w.row(oc);
                double acc = w.encoder_b[oc];
                for (int j = 0; j < c.patch_values(); ++j) acc += row[j] * patch[j];
                out.at(oc, y, x) = acc;
            }
        }
    }
    return out;
}

// Inverse of the encoder's layout: one latent vector expands affinely to a
// latent_factor-square RGB patch.
inline LatentGrid decode_latent(const LatentGrid& z, const NetWeights& w) {
    const NetConfig& c = w.config;
    int f = c.latent_factor;
    if (z.channels != c.latent_channels)
        throw DimensionError("decode_latent: expected " + std::to_string(c.latent_channels) +
                             " channels, got " + z.shape_str());
    LatentGrid out(3, z.height * f, z.width * f);
    for (int y = 0; y < z.height; ++y) {
        for (int x = 0; x < z.width; ++x) {
            for (int j = 0; j < c.patch_values(); ++j) {
                const double* row = w.decoder_w.row(j);
                double acc = w.decoder_b[j];
                for (int lc = 0; lc < c.latent_channels; ++lc) acc += row[lc] * z.at(lc, y, x);
                int ic = j / (f * f), py = (j / f) % f, px = j % f;
                out.at(ic, y * f + py, x * f + px) = acc;
            }
        }
    }
    return out;
}

// h0 = conv3x3(Concat([z_t, M, z^c])), zero padding. The mask enters as one
// scalar channel, so the feature response to it is affine — scaling the mask
// values scales the induced feature shift by exactly the same factor.
inline LatentGrid input_conv(const LatentGrid& z_t, const MaskGrid& mc, const LatentGrid& zc,
                             const NetWeights& w) {
    const NetConfig& c = w.config;
    if (z_t.channels != c.latent_channels)
        throw DimensionError("input_conv: z_t expected " + std::to_string(c.latent_channels) +
                             " channels, got " + z_t.shape_str());
    if (!z_t.same_shape(zc))
        throw DimensionError("input_conv: z_t " + z_t.shape_str() + " vs z^c " + zc.shape_str());
    if (mc.height != z_t.height || mc.width != z_t.width)
        throw DimensionError("input_conv: mask " + mc.shape_str() + " vs latent " +
                             z_t.shape_str());

    int cc = c.concat_channels(), d = c.feature_channels;
    int h = z_t.height, wd = z_t.width;
    LatentGrid cat(cc, h, wd);
    std::copy(z_t.values.begin(), z_t.values.end(), cat.values.begin());
    std::copy(mc.values.begin(), mc.values.end(),
              cat.values.begin() + static_cast<std::size_t>(c.latent_channels) * cat.plane());
    std::copy(zc.values.begin(), zc.values.end(),
              cat.values.begin() + static_cast<std::size_t>(c.latent_channels + 1) * cat.plane());

    LatentGrid out(d, h, wd);
    for (int o = 0; o < d; ++o) {
        double* plane = out.channel_data(o);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < wd; ++x) {
                double acc = w.input_conv_b[o];
                for (int i = 0; i < cc; ++i) {
                    const double* k = &w.input_conv_w[((static_cast<std::size_t>(o) * cc + i) * 9)];
                    const double* src = cat.channel_data(i);
                    for (int ky = -1; ky <= 1; ++ky) {
                        int yy = y + ky;
                        if (yy < 0 || yy >= h) continue;
                        for (int kx = -1; kx <= 1; ++kx) {
                            int xx = x + kx;
                            if (xx < 0 || xx >= wd) continue;
                            acc += k[(ky + 1) * 3 + (kx + 1)] *
                                   src[static_cast<std::size_t>(yy) * wd + xx];
                        }
                    }
                }
                plane[static_cast<std::size_t>(y) * wd + x] = acc;
            }
        }
    }
    return out;
}

// Raw attention output Softmax(QK^T/sqrt(d))V per spatial position, queries
// from the feature field, keys/values from the prompt embedding. No residual
// or output projection here — each returned vector is a convex combination of
// V rows. `record`, when given, captures the attention matrix, Q, and labels.
struct AttentionRecord {
    int height = 0;
    int width  = 0;
    Mat attention;  // positions x text_len
    Mat query;      // positions x d
    std::vector<std::string> token_labels;
};

inline LatentGrid cross_attention(const LatentGrid& h, const PromptEmbedding& p,
                                  const NetWeights& w, AttentionRecord* record = nullptr) {
    if (h.channels != w.config.feature_channels)
        throw DimensionError("cross_attention: expected " +
                             std::to_string(w.config.feature_channels) + " channels, got " +
                             h.shape_str());
    Mat hp = to_positions(h);
    Mat q = project_rows(hp, w.cross_wq);
    Mat k = project_rows(p.tokens, w.cross_wk);
    Mat v = project_rows(p.tokens, w.cross_wv);
    Mat attn = attention_weights(q, k);
    Mat out = attention_apply(attn, v);
    if (record) {
        record->height = h.height;
        record->width = h.width;
        record->attention = attn;
        record->query = std::move(q);
        record->token_labels = p.token_labels;
    }
    return from_positions(out, h.height, h.width);
}

// Same shape of computation with keys/values from the positions themselves.
inline LatentGrid self_attention(const LatentGrid& h, const NetWeights& w) {
    if (h.channels != w.config.feature_channels)
        throw DimensionError("self_attention: expected " +
                             std::to_string(w.config.feature_channels) + " channels, got " +
                             h.shape_str());
    Mat hp = to_positions(h);
    Mat q = project_rows(hp, w.self_wq);
    Mat k = project_rows(hp, w.self_wk);
    Mat v = project_rows(hp, w.self_wv);
    Mat attn = attention_weights(q, k);
    return from_positions(attention_apply(attn, v), h.height, h.width);
}

namespace detail {

// Per-position LayerNorm over channels (no learned affine) keeps the output
// projection's input at unit scale regardless of depth, which in turn keeps
// noise predictions in the range a sampler expects.
inline void layer_norm_rows(Mat& m) {
    const double eps = 1e-5;
    for (int r = 0; r < m.rows; ++r) {
        double* row = m.row(r);
        double mean = 0.0;
        for (int c = 0; c < m.cols; ++c) mean += row[c];
        mean /= m.cols;
        double var = 0.0;
        for (int c = 0; c < m.cols; ++c) {
            double dv = row[c] - mean;
            var += dv * dv;
        }
        var /= m.cols;
        double inv = 1.0 / std::sqrt(var + eps);
        for (int c = 0; c < m.cols; ++c) row[c] = (row[c] - mean) * inv;
    }
}

}  // namespace detail

// Full denoiser: input conv, self-attention block, cross-attention block
// (both residual with an output projection), additive time embedding, then a
// LayerNorm + affine head back to latent channels.
inline LatentGrid predict_noise(const LatentGrid& z_t, const LatentGrid& zc, const MaskGrid& mc,
                                int t, const PromptEmbedding& prompt, const NetWeights& w,
                                AttentionRecord* cross_record = nullptr) {
    const NetConfig& c = w.config;
    if (t < 0 || t > c.timesteps)
        throw DomainError("predict_noise: t must lie in [0, " + std::to_string(c.timesteps) +
                          "], got " + std::to_string(t));
    LatentGrid h0 = input_conv(z_t, mc, zc, w);
    Mat h = to_positions(h0);

    {
        Mat a = to_positions(self_attention(h0, w));
        Mat proj = project_rows(a, w.self_wo);
        for (std::size_t i = 0; i < h.values.size(); ++i) h.values[i] += proj.values[i];
    }
    {
        LatentGrid h1 = from_positions(h, z_t.height, z_t.width);
        Mat a = to_positions(cross_attention(h1, prompt, w, cross_record));
        Mat proj = project_rows(a, w.cross_wo);
        for (std::size_t i = 0; i < h.values.size(); ++i) h.values[i] += proj.values[i];
    }
    {
        const double* te = w.time_table.row(t);
        for (int p = 0; p < h.rows; ++p) {
            double* row = h.row(p);
            for (int j = 0; j < h.cols; ++j) row[j] += te[j];
        }
    }
    detail::layer_norm_rows(h);

    Mat eps(h.rows, c.latent_channels);
    for (int p = 0; p < h.rows; ++p) {
        const double* row = h.row(p);
        double* op = eps.row(p);
        for (int oc = 0; oc < c.latent_channels; ++oc) {
            const double* wr = w.out_proj_w.row(oc);
            double acc = w.out_proj_b[oc];
            for (int j = 0; j < h.cols; ++j) acc += wr[j] * row[j];
            op[oc] = acc;
        }
    }
    return from_positions(eps, z_t.height, z_t.width);
}

inline LatentGrid predict_noise(const LatentGrid& z_t, const LatentGrid& zc, const MaskGrid& mc,
                                int t, const std::string& prompt, const NetWeights& w,
                                AttentionRecord* cross_record = nullptr) {
    return predict_noise(z_t, zc, mc, t, text_encode(prompt, w), w, cross_record);
}

}  // namespace freecond
