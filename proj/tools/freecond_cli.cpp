// Command-line front end: inpaint / sweep / ci-report / metrics / gen-weights.
// Exit codes: 0 ok, 2 bad configuration or arguments, 3 I/O failure,
// 4 integrity failure (corrupt tensors, checksum mismatch), 1 anything else.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "freecond/freecond.hpp"

namespace {

using freecond::RunConfig;

// Shared flags; a flag given on the command line wins over the config file.
struct CommonOpts {
    std::string config;
    std::string image, mask, prompt, output_dir;
    double w = 0.0, alpha = 0.0, beta = 0.0;
    std::string gamma;
    int t_fc = 0, total_steps = 0;
    std::uint64_t seed_weights = 0, seed_noise = 0;
    int layer = 0;
    std::string token;
    bool cap_attention = false, cap_ci = false, cap_latent = false;

    CLI::Option *o_image = nullptr, *o_mask = nullptr, *o_prompt = nullptr,
                *o_outdir = nullptr, *o_w = nullptr, *o_alpha = nullptr, *o_beta = nullptr,
                *o_gamma = nullptr, *o_tfc = nullptr, *o_steps = nullptr, *o_sw = nullptr,
                *o_sn = nullptr, *o_layer = nullptr, *o_token = nullptr;

    void attach(CLI::App* cmd, bool config_required) {
        auto* c = cmd->add_option("--config", config, "run configuration (JSON)");
        if (config_required) c->required();
        o_image = cmd->add_option("--image", image, "input image (overrides config)");
        o_mask = cmd->add_option("--mask", mask, "inpainting mask (overrides config)");
        o_prompt = cmd->add_option("--prompt", prompt, "text prompt (overrides config)");
        o_outdir = cmd->add_option("--output-dir,-o", output_dir, "output directory");
        o_w = cmd->add_option("--w", w, "guidance scale w");
        o_alpha = cmd->add_option("--alpha", alpha, "inner mask scale");
        o_beta = cmd->add_option("--beta", beta, "outer mask scale");
        o_gamma = cmd->add_option("--gamma", gamma, "low-pass cutoff (number, 'pi', '<x>pi')");
        o_tfc = cmd->add_option("--t-fc", t_fc, "apply the low-pass filter for t >= t_fc");
        o_steps = cmd->add_option("--steps,-T", total_steps, "denoising steps T");
        o_sw = cmd->add_option("--seed-weights", seed_weights, "weight generation seed");
        o_sn = cmd->add_option("--seed-noise", seed_noise, "initial noise seed");
        o_layer = cmd->add_option("--layer", layer, "analysis layer (0 or 1)");
        o_token = cmd->add_option("--token", token, "token selector: 'all', index, or label");
        cmd->add_flag("--capture-attention", cap_attention, "also write attention artifacts");
        cmd->add_flag("--capture-ci", cap_ci, "also write ci.csv");
        cmd->add_flag("--capture-latent", cap_latent, "also write the final latent tensor");
    }

    RunConfig build() const {
        RunConfig cfg = config.empty() ? RunConfig{} : freecond::load_run_config(config);
        if (o_image->count()) cfg.image_path = image;
        if (o_mask->count()) cfg.mask_path = mask;
        if (o_prompt->count()) cfg.prompt = prompt;
        if (o_outdir->count()) cfg.output_dir = output_dir;
        if (o_w->count()) cfg.params.guidance_scale = w;
        if (o_alpha->count()) cfg.params.inner_scale = alpha;
        if (o_beta->count()) cfg.params.outer_scale = beta;
        if (o_gamma->count()) cfg.params.lpf_cutoff = freecond::parse_gamma(gamma);
        if (o_tfc->count()) cfg.params.lpf_from_t = t_fc;
        if (o_steps->count()) cfg.params.total_steps = total_steps;
        if (o_sw->count()) cfg.seeds.weights = seed_weights;
        if (o_sn->count()) cfg.seeds.noise = seed_noise;
        if (o_layer->count()) cfg.analysis.layer = layer;
        if (o_token->count()) cfg.analysis.token = token;
        if (cap_attention) cfg.capture.attention = true;
        if (cap_ci) cfg.capture.ci = true;
        if (cap_latent) cfg.capture.latent = true;
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"freecond: deterministic latent inpainting laboratory"};
    app.require_subcommand(1);

    CLI::App* inpaint = app.add_subcommand("inpaint", "run one conditioned denoising loop");
    CommonOpts in_opts;
    in_opts.attach(inpaint, true);

    CLI::App* sweep = app.add_subcommand("sweep", "repeat a run across one parameter axis");
    CommonOpts sw_opts;
    sw_opts.attach(sweep, true);
    std::string axis;
    std::vector<std::string> values;
    int workers = 0;
    sweep->add_option("--axis", axis, "parameter to vary: w, alpha, beta, gamma, t_fc")
        ->required();
    sweep->add_option("--values", values, "comma-separated values for the axis")
        ->required()
        ->delimiter(',');
    sweep->add_option("--workers", workers,
                      "worker threads (default: FREECOND_THREADS or 1)");

    CLI::App* ci = app.add_subcommand("ci-report", "channel influence report at t = T");
    CommonOpts ci_opts;
    ci_opts.attach(ci, true);

    CLI::App* metrics = app.add_subcommand("metrics", "compute and aggregate scores");
    freecond::MetricsArgs margs;
    metrics->add_option("--pred-mask", margs.pred_mask, "predicted mask (with --ref-mask: IoU)");
    metrics->add_option("--ref-mask", margs.ref_mask, "reference mask");
    metrics->add_option("--image", margs.image, "image to score (with --reference: PSNR)");
    metrics->add_option("--reference", margs.reference, "reference image");
    metrics->add_option("--mask", margs.mask, "region mask for psnr_outside/changed_fraction");
    metrics->add_option("--external", margs.external, "CSV of externally computed scores");
    metrics->add_option("--sample", margs.sample, "sample name for computed rows");
    metrics->add_option("--method", margs.method, "method name for computed rows");
    metrics->add_option("--output", margs.output, "merged score CSV path");
    metrics->add_option("--max-value", margs.max_value, "PSNR peak signal value");

    CLI::App* genw = app.add_subcommand("gen-weights", "write or verify the weight bundle");
    CommonOpts gw_opts;
    gw_opts.attach(genw, false);
    std::string verify_dir;
    genw->add_option("--verify", verify_dir, "reload this weight directory and check it");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (inpaint->parsed()) {
            freecond::cmd_inpaint(in_opts.build());
        } else if (sweep->parsed()) {
            freecond::cmd_sweep(sw_opts.build(), axis, values, workers);
        } else if (ci->parsed()) {
            freecond::cmd_ci_report(ci_opts.build());
        } else if (metrics->parsed()) {
            freecond::cmd_metrics(margs);
        } else if (genw->parsed()) {
            if (!verify_dir.empty())
                freecond::cmd_verify_weights(verify_dir);
            else
                freecond::cmd_gen_weights(gw_opts.build());
        }
        return 0;
    } catch (const freecond::IoError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 3;
    } catch (const freecond::IntegrityError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 4;
    } catch (const std::invalid_argument& e) {  // DomainError, DimensionError
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const freecond::ParseError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const freecond::ConflictError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << std::endl;
        return 1;
    }
}
