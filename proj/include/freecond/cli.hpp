#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "freecond/analysis.hpp"
#include "freecond/conditioning.hpp"
#include "freecond/errors.hpp"
#include "freecond/grid.hpp"
#include "freecond/image_io.hpp"
#include "freecond/metrics.hpp"
#include "freecond/sampler.hpp"
#include "freecond/tensor_io.hpp"
#include "freecond/toynet.hpp"
#include "freecond/util.hpp"

namespace freecond {

/*===================================== run configuration =====================================*/

struct Seeds {
    std::uint64_t weights = 42;
    std::uint64_t noise = 1234;
};

struct CaptureFlags {
    bool attention = false;  // write the t=T cross-attention matrix + per-token heatmaps
    bool ci = false;         // write ci.csv beside the run output
    bool latent = false;     // write the final latent as a tensor file
};

struct AnalysisOptions {
    int layer = 0;            // 0: queries off the input conv, 1: after self-attention
    std::string token = "all";  // "all", an index, or a token label
};

// One JSON document describes a run completely; commands only add output
// placement and (for sweeps) the varied axis. Unknown config keys are
// rejected rather than ignored so typos cannot silently change a run.
struct RunConfig {
    FreeCondParams params;
    NetConfig net;  // latent_height/width are recomputed from the input image
    Seeds seeds;
    std::string image_path;
    std::string mask_path;
    std::string prompt;
    std::string output_dir = "out";
    CaptureFlags capture;
    AnalysisOptions analysis;
};

// Accepts a plain number (radians), "pi", or "<factor>pi" (e.g. "0.5pi").
inline double parse_gamma(const std::string& text) {
    std::string s;
    for (char ch : text)
        if (!std::isspace(static_cast<unsigned char>(ch))) s += ch;
    if (s == "pi") return kPi;
    if (s.size() > 2 && s.compare(s.size() - 2, 2, "pi") == 0) {
        double f;
        if (parse_double(s.substr(0, s.size() - 2), f)) return f * kPi;
    }
    double v;
    if (parse_double(s, v)) return v;
    throw ParseError("cannot parse gamma value '" + text + "' (use a number, 'pi', or '<x>pi')");
}

namespace cfg_detail {

inline void reject_unknown(const nlohmann::json& obj,
                           std::initializer_list<const char*> allowed,
                           const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                known = true;
                break;
            }
        if (!known) throw ParseError("unknown key '" + it.key() + "' in " + where);
    }
}

inline const nlohmann::json& block(const nlohmann::json& j, const char* key) {
    const nlohmann::json& b = j.at(key);
    if (!b.is_object()) throw ParseError(std::string("'") + key + "' must be a JSON object");
    return b;
}

inline double get_num(const nlohmann::json& o, const char* key, double fallback,
                      const std::string& where) {
    if (!o.contains(key)) return fallback;
    if (!o.at(key).is_number()) throw ParseError(where + "." + key + " must be a number");
    return o.at(key).get<double>();
}

inline int get_int(const nlohmann::json& o, const char* key, int fallback,
                   const std::string& where) {
    if (!o.contains(key)) return fallback;
    if (!o.at(key).is_number_integer())
        throw ParseError(where + "." + key + " must be an integer");
    return o.at(key).get<int>();
}

inline std::uint64_t get_u64(const nlohmann::json& o, const char* key, std::uint64_t fallback,
                             const std::string& where) {
    if (!o.contains(key)) return fallback;
    const nlohmann::json& v = o.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<long long>() < 0))
        throw ParseError(where + "." + key + " must be a non-negative integer");
    return v.get<std::uint64_t>();
}

inline bool get_bool(const nlohmann::json& o, const char* key, bool fallback,
                     const std::string& where) {
    if (!o.contains(key)) return fallback;
    if (!o.at(key).is_boolean()) throw ParseError(where + "." + key + " must be a boolean");
    return o.at(key).get<bool>();
}

inline std::string get_str(const nlohmann::json& o, const char* key, std::string fallback,
                           const std::string& where) {
    if (!o.contains(key)) return fallback;
    if (!o.at(key).is_string()) throw ParseError(where + "." + key + " must be a string");
    return o.at(key).get<std::string>();
}

}  // namespace cfg_detail

// Image/mask paths are resolved relative to the config file's directory;
// output_dir stays relative to the working directory.
inline RunConfig parse_run_config(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir = {}) {
    using namespace cfg_detail;
    if (!j.is_object()) throw ParseError("config root must be a JSON object");
    reject_unknown(j, {"freecond", "net", "seeds", "image", "mask", "prompt", "output_dir",
                       "capture", "analysis"},
                   "config");
    RunConfig cfg;
    if (j.contains("freecond")) {
        const nlohmann::json& f = block(j, "freecond");
        reject_unknown(f, {"w", "alpha", "beta", "gamma", "t_fc", "T"}, "freecond");
        cfg.params.guidance_scale = get_num(f, "w", cfg.params.guidance_scale, "freecond");
        cfg.params.inner_scale = get_num(f, "alpha", cfg.params.inner_scale, "freecond");
        cfg.params.outer_scale = get_num(f, "beta", cfg.params.outer_scale, "freecond");
        if (f.contains("gamma")) {
            const nlohmann::json& g = f.at("gamma");
            if (g.is_string())
                cfg.params.lpf_cutoff = parse_gamma(g.get<std::string>());
            else if (g.is_number())
                cfg.params.lpf_cutoff = g.get<double>();
            else
                throw ParseError("freecond.gamma must be a number or a string like 'pi'");
        }
        cfg.params.lpf_from_t = get_int(f, "t_fc", cfg.params.lpf_from_t, "freecond");
        cfg.params.total_steps = get_int(f, "T", cfg.params.total_steps, "freecond");
    }
    if (j.contains("net")) {
        const nlohmann::json& n = block(j, "net");
        reject_unknown(n, {"latent_channels", "feature_channels", "text_len", "latent_factor",
                           "latent_height", "latent_width"},
                       "net");
        cfg.net.latent_channels = get_int(n, "latent_channels", cfg.net.latent_channels, "net");
        cfg.net.feature_channels =
            get_int(n, "feature_channels", cfg.net.feature_channels, "net");
        cfg.net.text_len = get_int(n, "text_len", cfg.net.text_len, "net");
        cfg.net.latent_factor = get_int(n, "latent_factor", cfg.net.latent_factor, "net");
        cfg.net.latent_height = get_int(n, "latent_height", cfg.net.latent_height, "net");
        cfg.net.latent_width = get_int(n, "latent_width", cfg.net.latent_width, "net");
    }
    if (j.contains("seeds")) {
        const nlohmann::json& s = block(j, "seeds");
        reject_unknown(s, {"weights", "noise"}, "seeds");
        cfg.seeds.weights = get_u64(s, "weights", cfg.seeds.weights, "seeds");
        cfg.seeds.noise = get_u64(s, "noise", cfg.seeds.noise, "seeds");
    }
    auto resolve = [&](const std::string& s) -> std::string {
        if (s.empty() || base_dir.empty()) return s;
        std::filesystem::path p(s);
        return p.is_absolute() ? s : (base_dir / p).string();
    };
    cfg.image_path = resolve(cfg_detail::get_str(j, "image", "", "config"));
    cfg.mask_path = resolve(cfg_detail::get_str(j, "mask", "", "config"));
    cfg.prompt = cfg_detail::get_str(j, "prompt", "", "config");
    cfg.output_dir = cfg_detail::get_str(j, "output_dir", cfg.output_dir, "config");
    if (j.contains("capture")) {
        const nlohmann::json& c = block(j, "capture");
        reject_unknown(c, {"attention", "ci", "latent"}, "capture");
        cfg.capture.attention = get_bool(c, "attention", false, "capture");
        cfg.capture.ci = get_bool(c, "ci", false, "capture");
        cfg.capture.latent = get_bool(c, "latent", false, "capture");
    }
    if (j.contains("analysis")) {
        const nlohmann::json& a = block(j, "analysis");
        reject_unknown(a, {"layer", "token"}, "analysis");
        cfg.analysis.layer = get_int(a, "layer", 0, "analysis");
        if (a.contains("token")) {
            const nlohmann::json& t = a.at("token");
            if (t.is_string())
                cfg.analysis.token = t.get<std::string>();
            else if (t.is_number_integer())
                cfg.analysis.token = std::to_string(t.get<int>());
            else
                throw ParseError("analysis.token must be a string or an integer");
        }
    }
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::string text = read_file_text(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("config " + path.string() + ": " + e.what());
    }
    return parse_run_config(j, path.parent_path());
}

// Net sized for a concrete image; scheduler length and weight seed flow in
// from the rest of the config so one document pins the whole run.
inline NetConfig effective_net(const RunConfig& cfg, int image_h, int image_w) {
    NetConfig n = cfg.net;
    if (n.latent_factor < 1)
        throw DomainError("latent_factor must be >= 1, got " + std::to_string(n.latent_factor));
    if (image_h % n.latent_factor != 0 || image_w % n.latent_factor != 0)
        throw DimensionError("image " + std::to_string(image_h) + "x" +
                             std::to_string(image_w) + " not divisible by latent_factor " +
                             std::to_string(n.latent_factor));
    n.latent_height = image_h / n.latent_factor;
    n.latent_width = image_w / n.latent_factor;
    n.timesteps = cfg.params.total_steps;
    n.seed = cfg.seeds.weights;
    n.validate();
    return n;
}

/*===================================== record serialization =====================================*/

inline nlohmann::json params_json(const FreeCondParams& p) {
    nlohmann::json j;
    j["w"] = p.guidance_scale;
    j["alpha"] = p.inner_scale;
    j["beta"] = p.outer_scale;
    j["gamma"] = p.lpf_cutoff;
    j["t_fc"] = p.lpf_from_t;
    j["T"] = p.total_steps;
    return j;
}

inline nlohmann::json run_record_json(const RunRecord& r) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["freecond"] = params_json(r.params);
    j["net"] = detail::net_config_json(r.net);
    j["seeds"] = {{"weights", r.net.seed}, {"noise", r.noise_seed}};
    j["prompt"] = r.prompt;
    j["image"] = r.image_path;
    j["mask"] = r.mask_path;
    j["output"] = r.output_path;
    j["empty_mask"] = r.empty_mask;
    // wall time goes to stdout, not into the artifact; see RunRecord
    return j;
}

/*===================================== CI report =====================================*/

inline constexpr const char* kCiCsvHeader =
    "layer,t,token_index,token_label,region,channel,ci,delta_ci";

namespace detail {

inline std::string csv_safe(const std::string& s) {
    std::string out;
    for (char ch : s) out += (ch == ',' || ch == '\n' || ch == '\r') ? '_' : ch;
    return out;
}

inline std::vector<int> resolve_tokens(const std::string& selector, const PromptEmbedding& p) {
    std::vector<int> out;
    if (selector.empty() || selector == "all") {
        for (int i = 0; i < p.tokens.rows; ++i) out.push_back(i);
        return out;
    }
    double num;
    if (parse_double(selector, num) && num == std::floor(num)) {
        int idx = static_cast<int>(num);
        if (idx < 0 || idx >= p.tokens.rows)
            throw DomainError("token index " + selector + " out of range [0, " +
                              std::to_string(p.tokens.rows) + ")");
        return {idx};
    }
    for (int i = 0; i < p.tokens.rows; ++i)
        if (p.token_labels[i] == selector) out.push_back(i);
    if (out.empty()) throw DomainError("no token labelled '" + selector + "' in the prompt");
    return out;
}

}  // namespace detail

// Paired CI analysis at t = T: the masked conditioning (z^l, M^l) against the
// zero-mask companion (unmasked image condition, all-zero mask), sharing one
// noise latent. Both CI evaluations use the same region weights; rows cover
// the inside-M and outside-M regions (a region with empty support is
// skipped — with an all-zero input mask only outside-M remains, and there the
// two runs coincide so every delta is exactly zero).
inline std::string ci_report_csv(const RunConfig& cfg, const LatentGrid& image,
                                 const MaskGrid& mask, const NetWeights& w) {
    const NetConfig& c = w.config;
    int big_t = cfg.params.total_steps;
    LatentGrid z_t = sample_initial_noise(c.latent_channels, image.height / c.latent_factor,
                                          image.width / c.latent_factor, cfg.seeds.noise);
    LatentGrid zc_l = encode_image(mask_image(image, mask), w);
    MaskGrid mc_l = make_mask_condition(mask, c.latent_factor);
    LatentGrid zc_n = encode_image(image, w);
    MaskGrid mc_n(mc_l.height, mc_l.width, 0.0);

    Mat ql = query_features(z_t, mc_l, zc_l, w, cfg.analysis.layer);
    Mat qn = query_features(z_t, mc_n, zc_n, w, cfg.analysis.layer);
    PromptEmbedding p = text_encode(cfg.prompt, w);
    std::vector<int> tokens = detail::resolve_tokens(cfg.analysis.token, p);

    std::vector<std::pair<std::string, MaskGrid>> regions;
    regions.emplace_back("inside-M", mc_l);
    regions.emplace_back("outside-M", complement(mc_l));

    std::string csv = kCiCsvHeader;
    csv += '\n';
    for (const auto& [region_name, region] : regions) {
        if (region.sum() == 0.0) continue;
        std::span<const double> rspan(region.values.data(), region.values.size());
        for (int idx : tokens) {
            std::vector<double> key = token_key(p, idx, w);
            std::vector<double> ci_l = channel_influence(ql, rspan, key);
            std::vector<double> ci_n = channel_influence(qn, rspan, key);
            std::string label = detail::csv_safe(p.token_labels[idx]);
            std::string prefix = std::to_string(cfg.analysis.layer) + "," +
                                 std::to_string(big_t) + "," + std::to_string(idx) + "," +
                                 label + "," + region_name + ",";
            for (int ch = 0; ch < static_cast<int>(ci_l.size()); ++ch) {
                csv += prefix;
                csv += std::to_string(ch);
                csv += ',';
                csv += format_double(ci_l[ch]);
                csv += ',';
                csv += format_double(ci_l[ch] - ci_n[ch]);
                csv += '\n';
            }
        }
    }
    return csv;
}

/*===================================== commands =====================================*/

namespace detail {

inline void require_input_paths(const RunConfig& cfg, const char* cmd) {
    if (cfg.image_path.empty())
        throw DomainError(std::string(cmd) + ": config is missing 'image'");
    if (cfg.mask_path.empty())
        throw DomainError(std::string(cmd) + ": config is missing 'mask'");
}

// The cross-attention state the conditional branch sees at the first step.
inline AttentionRecord capture_attention(const RunConfig& cfg, const LatentGrid& image,
                                         const MaskGrid& mask, const NetWeights& w) {
    const NetConfig& c = w.config;
    int big_t = cfg.params.total_steps;
    LatentGrid z_t = sample_initial_noise(c.latent_channels, image.height / c.latent_factor,
                                          image.width / c.latent_factor, cfg.seeds.noise);
    LatentGrid zc = encode_image(mask_image(image, mask), w);
    MaskGrid mc = make_mask_condition(mask, c.latent_factor);
    MaskGrid mfc = freecond_mask(mc, cfg.params.inner_scale, cfg.params.outer_scale);
    LatentGrid zfc = freecond_image(zc, big_t, cfg.params);
    AttentionRecord rec;
    predict_noise(z_t, zfc, mfc, big_t, text_encode(cfg.prompt, w), w, &rec);
    return rec;
}

inline std::string zero_pad3(std::size_t i) {
    std::string s = std::to_string(i);
    while (s.size() < 3) s = "0" + s;
    return s;
}

}  // namespace detail

inline void cmd_inpaint(const RunConfig& cfg) {
    cfg.params.validate();
    detail::require_input_paths(cfg, "inpaint");
    LatentGrid image = load_png_image(cfg.image_path);
    MaskGrid mask = load_mask(cfg.mask_path);
    NetConfig net = effective_net(cfg, image.height, image.width);
    NetWeights w = gen_weights(net);

    InpaintResult res = inpaint(image, mask, cfg.prompt, cfg.params, w, cfg.seeds.noise);

    std::filesystem::path dir = cfg.output_dir;
    std::filesystem::create_directories(dir);
    save_png_image(dir / "output.png", res.output);
    res.record.image_path = cfg.image_path;
    res.record.mask_path = cfg.mask_path;
    res.record.output_path = "output.png";
    write_file_atomic(dir / "run.json", run_record_json(res.record).dump(2) + "\n");

    if (cfg.capture.latent) save_latent(dir / "latent.tensor", res.z_final);
    if (cfg.capture.attention) {
        AttentionRecord rec = detail::capture_attention(cfg, image, mask, w);
        save_tensor(dir / "attention.tensor", {rec.attention.rows, rec.attention.cols},
                    std::span<const double>(rec.attention.values.data(),
                                            rec.attention.values.size()));
        for (int i = 0; i < static_cast<int>(rec.token_labels.size()); ++i) {
            std::string label = rec.token_labels[i];
            std::string safe;
            for (char ch : label)
                safe += (std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_');
            save_pgm(dir / ("attention_" + detail::zero_pad3(i) + "_" + safe + ".pgm"),
                     extract_attention_map(rec, i));
            if (label == "<eot>") break;  // pads carry nothing of interest
        }
    }
    if (cfg.capture.ci)
        write_file_atomic(dir / "ci.csv", ci_report_csv(cfg, image, mask, w));

    std::cout << "wrote " << (dir / "output.png").string() << " (" << image.width << "x"
              << image.height << ", T=" << cfg.params.total_steps << ", wall "
              << std::fixed << std::setprecision(2) << res.record.wall_seconds << "s)"
              << std::endl;
}

/*------------------------------------- sweep -------------------------------------*/

inline constexpr const char* kSweepCsvHeader = "value,iou,psnr_outside,changed_fraction,run";

inline void set_sweep_axis(FreeCondParams& p, const std::string& axis, double v) {
    if (axis == "w") {
        p.guidance_scale = v;
    } else if (axis == "alpha") {
        p.inner_scale = v;
    } else if (axis == "beta") {
        p.outer_scale = v;
    } else if (axis == "gamma") {
        p.lpf_cutoff = v;
    } else if (axis == "t_fc") {
        if (v != std::floor(v))
            throw DomainError("t_fc values must be integers, got " + format_double(v));
        p.lpf_from_t = static_cast<int>(v);
    } else {
        throw DomainError("unknown sweep axis '" + axis + "' (use w, alpha, beta, gamma, t_fc)");
    }
}

inline std::vector<double> parse_axis_values(const std::string& axis,
                                             const std::vector<std::string>& texts) {
    std::vector<double> out;
    for (const std::string& s : texts) {
        if (axis == "gamma") {
            out.push_back(parse_gamma(s));
        } else {
            double v;
            if (!parse_double(s, v))
                throw ParseError("cannot parse sweep value '" + s + "' for axis " + axis);
            out.push_back(v);
        }
    }
    return out;
}

// Worker count: an explicit request wins, otherwise FREECOND_THREADS,
// otherwise 1; FREECOND_THREADS always caps the pool.
inline int resolve_workers(int requested, std::size_t jobs) {
    int cap = 0;
    if (const char* env = std::getenv("FREECOND_THREADS")) {
        double v;
        if (!parse_double(env, v) || v < 1.0 || v != std::floor(v))
            throw DomainError(std::string("FREECOND_THREADS must be a positive integer, got '") +
                              env + "'");
        cap = static_cast<int>(v);
    }
    int n = requested > 0 ? requested : (cap > 0 ? cap : 1);
    if (cap > 0) n = std::min(n, cap);
    n = std::max(1, std::min<int>(n, static_cast<int>(jobs)));
    return n;
}

// One inpaint per value with shared image, weights and noise; per-run
// subdirectories run_000, run_001, ... and a sweep.csv whose rows follow the
// input value order. Workers only change scheduling, never content: every row
// is computed from that run's own reloaded artifacts and the CSV is assembled
// after all workers join, so the bytes are schedule-independent. A failed run
// keeps its row with nan metrics; the sweep carries on.
inline void cmd_sweep(const RunConfig& base, const std::string& axis,
                      const std::vector<std::string>& value_texts, int workers_requested = 0) {
    base.params.validate();
    detail::require_input_paths(base, "sweep");
    if (value_texts.empty()) throw DomainError("sweep needs at least one value");
    std::vector<double> values = parse_axis_values(axis, value_texts);

    std::vector<FreeCondParams> grid;
    for (double v : values) {
        FreeCondParams p = base.params;
        set_sweep_axis(p, axis, v);
        p.validate();
        grid.push_back(p);
    }

    LatentGrid image = load_png_image(base.image_path);
    MaskGrid mask = load_mask(base.mask_path);
    NetConfig net = effective_net(base, image.height, image.width);
    NetWeights w = gen_weights(net);

    std::filesystem::path dir = base.output_dir;
    std::filesystem::create_directories(dir);

    struct Row {
        bool ok = false;
        double iou_v = 0.0, psnr_o = 0.0, changed = 0.0;
        std::string run_name;
    };
    std::vector<Row> rows(values.size());
    std::atomic<std::size_t> cursor{0};
    std::mutex log_mx;

    auto run_one = [&](std::size_t i) {
        Row& row = rows[i];
        row.run_name = "run_" + detail::zero_pad3(i);
        std::filesystem::path rdir = dir / row.run_name;
        try {
            InpaintResult res = inpaint(image, mask, base.prompt, grid[i], w, base.seeds.noise);
            std::filesystem::create_directories(rdir);
            save_png_image(rdir / "output.png", res.output);
            res.record.image_path = base.image_path;
            res.record.mask_path = base.mask_path;
            res.record.output_path = "output.png";
            write_file_atomic(rdir / "run.json", run_record_json(res.record).dump(2) + "\n");

            // metrics off the reloaded 8-bit artifact, so the CSV reflects
            // exactly what a reader of output.png would measure
            LatentGrid reloaded = load_png_image(rdir / "output.png");
            MaskGrid changed(mask.height, mask.width, 0.0);
            for (int y = 0; y < mask.height; ++y)
                for (int x = 0; x < mask.width; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        if (reloaded.at(ch, y, x) != image.at(ch, y, x)) {
                            changed.at(y, x) = 1.0;
                            break;
                        }
            row.iou_v = iou(changed, mask);
            RegionMetrics rm = masked_region_metrics(reloaded, image, mask);
            row.psnr_o = rm.psnr_outside;
            row.changed = rm.changed_fraction;
            row.ok = true;
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lock(log_mx);
            std::cerr << "sweep " << row.run_name << " failed: " << e.what() << std::endl;
        }
    };

    auto worker = [&] {
        for (std::size_t i = cursor.fetch_add(1); i < values.size();
             i = cursor.fetch_add(1))
            run_one(i);
    };
    int nw = resolve_workers(workers_requested, values.size());
    if (nw <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nw; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    std::string csv = kSweepCsvHeader;
    csv += '\n';
    for (std::size_t i = 0; i < values.size(); ++i) {
        const Row& r = rows[i];
        csv += format_double(values[i]);
        csv += ',';
        csv += r.ok ? format_double(r.iou_v) : "nan";
        csv += ',';
        csv += r.ok ? format_double(r.psnr_o) : "nan";
        csv += ',';
        csv += r.ok ? format_double(r.changed) : "nan";
        csv += ',';
        csv += r.run_name;
        csv += '\n';
    }
    write_file_atomic(dir / "sweep.csv", csv);
    std::cout << values.size() << " runs (axis " << axis << ", " << nw << " worker"
              << (nw == 1 ? "" : "s") << ") -> " << (dir / "sweep.csv").string() << std::endl;
}

/*------------------------------------- ci report -------------------------------------*/

inline void cmd_ci_report(const RunConfig& cfg) {
    cfg.params.validate();
    detail::require_input_paths(cfg, "ci-report");
    LatentGrid image = load_png_image(cfg.image_path);
    MaskGrid mask = load_mask(cfg.mask_path);
    NetConfig net = effective_net(cfg, image.height, image.width);
    NetWeights w = gen_weights(net);

    std::string csv = ci_report_csv(cfg, image, mask, w);
    std::filesystem::path dir = cfg.output_dir;
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "ci.csv", csv);

    std::size_t rows = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) - 1;
    std::cout << rows << " rows -> " << (dir / "ci.csv").string() << std::endl;
}

/*------------------------------------- metrics -------------------------------------*/

struct MetricsArgs {
    std::string pred_mask, ref_mask;        // IoU pair
    std::string image, reference, mask;     // PSNR pair, optional region mask
    std::string external;                   // CSV of externally computed scores
    std::string sample = "sample";
    std::string method = "default";
    std::string output = "metrics.csv";
    double max_value = 1.0;
};

inline void cmd_metrics(const MetricsArgs& a) {
    if (a.pred_mask.empty() != a.ref_mask.empty())
        throw DomainError("metrics: --pred-mask and --ref-mask go together");
    if (a.image.empty() != a.reference.empty())
        throw DomainError("metrics: --image and --reference go together");

    ScoreTable table;
    if (!a.pred_mask.empty())
        table.add_internal(a.sample, a.method, "iou",
                           iou(load_mask(a.pred_mask), load_mask(a.ref_mask)));
    if (!a.image.empty()) {
        LatentGrid out = load_png_image(a.image);
        LatentGrid ref = load_png_image(a.reference);
        table.add_internal(a.sample, a.method, "psnr", psnr(out, ref, a.max_value));
        if (!a.mask.empty()) {
            RegionMetrics rm = masked_region_metrics(out, ref, load_mask(a.mask), a.max_value);
            table.add_internal(a.sample, a.method, "psnr_outside", rm.psnr_outside);
            table.add_internal(a.sample, a.method, "changed_fraction", rm.changed_fraction);
        }
    }
    if (!a.external.empty()) ingest_external_scores(read_file_text(a.external), table);
    if (table.rows.empty())
        throw DomainError("metrics: nothing to compute (give masks, images, or an external CSV)");

    std::cout << std::left << std::setw(14) << "sample" << std::setw(14) << "method"
              << std::setw(20) << "metric" << "value" << "\n";
    for (const auto& r : table.rows)
        std::cout << std::left << std::setw(14) << r.sample << std::setw(14) << r.method
                  << std::setw(20) << r.metric << format_double(r.value) << "\n";
    std::cout << "\nmean per (method, metric):\n";
    for (const AggregateRow& g : aggregate(table)) {
        std::cout << std::left << std::setw(14) << g.method << std::setw(20) << g.metric
                  << (g.count > 0 ? format_double(g.mean) : "-") << "  (n=" << g.count;
        if (g.inf_count > 0) std::cout << ", inf=" << g.inf_count;
        std::cout << ")\n";
    }
    write_file_atomic(a.output, export_scores_csv(table));
    std::cout << "\nwrote " << a.output << std::endl;
}

/*------------------------------------- weights -------------------------------------*/

inline void cmd_gen_weights(const RunConfig& cfg) {
    NetConfig net = cfg.net;
    net.timesteps = cfg.params.total_steps;
    net.seed = cfg.seeds.weights;
    net.validate();
    NetWeights w = gen_weights(net);
    std::filesystem::path dir = std::filesystem::path(cfg.output_dir) / "weights";
    save_weights(dir, w);
    std::cout << "wrote " << (dir / "manifest.json").string() << "\n"
              << "weight stream fnv1a64: " << to_hex16(weight_stream_checksum(w))
              << std::endl;
}

inline void cmd_verify_weights(const std::string& dir) {
    NetWeights w = load_weights(dir);
    int n = 0;
    w.for_each_tensor([&](const std::string&, const std::vector<int>&,
                          const std::vector<double>&) { ++n; });
    std::cout << "ok: " << n << " tensors verified (seed " << w.config.seed << ")"
              << std::endl;
}

}  // namespace freecond
