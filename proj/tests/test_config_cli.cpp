#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "freecond/cli.hpp"
#include "test_paths.hpp"

using namespace freecond;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    fs::path dir = fs::path(kScratchDir) / "cli";
    fs::create_directories(dir);
    return dir / name;
}

fs::path data(const std::string& name) { return fs::path(kTestDataDir) / name; }

// Run the installed binary through the shell, capturing stdout+stderr.
int run_cli(const std::string& args, std::string* out = nullptr,
            const std::string& env_prefix = "") {
    std::string cmd = env_prefix + std::string(kCliBinary) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string text;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) text.append(buf, n);
    int rc = pclose(pipe);
    if (out) *out = text;
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

bool same_bytes(const fs::path& a, const fs::path& b) {
    return read_file_bytes(a) == read_file_bytes(b);
}

}  // namespace

/*===================================== config parsing =====================================*/

TEST_CASE("gamma accepts numbers, pi, and pi multiples") {
    CHECK(parse_gamma("pi") == kPi);
    CHECK(parse_gamma(" pi ") == kPi);
    CHECK(parse_gamma("0.5pi") == Catch::Approx(kPi / 2).margin(1e-15));
    CHECK(parse_gamma("0.25 pi") == Catch::Approx(kPi / 4).margin(1e-15));
    CHECK(parse_gamma("2") == 2.0);
    CHECK(parse_gamma("1.5708") == 1.5708);
    CHECK_THROWS_MATCHES(parse_gamma("twopi"), ParseError,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring(
                             "cannot parse gamma value 'twopi'")));
    CHECK_THROWS_AS(parse_gamma(""), ParseError);
}

TEST_CASE("run config parses the full document") {
    json j = json::parse(R"({
        "freecond": {"w": 7.5, "alpha": 2, "beta": 0.5, "gamma": "0.5pi", "t_fc": 3, "T": 10},
        "net": {"latent_channels": 4, "feature_channels": 16, "text_len": 8, "latent_factor": 4},
        "seeds": {"weights": 9, "noise": 77},
        "image": "img.png",
        "mask": "mask.pgm",
        "prompt": "hello world",
        "output_dir": "out/here",
        "capture": {"attention": true, "ci": false, "latent": true},
        "analysis": {"layer": 1, "token": 2}
    })");
    RunConfig cfg = parse_run_config(j, "/base");
    CHECK(cfg.params.guidance_scale == 7.5);
    CHECK(cfg.params.inner_scale == 2.0);
    CHECK(cfg.params.outer_scale == 0.5);
    CHECK(cfg.params.lpf_cutoff == Catch::Approx(kPi / 2).margin(1e-15));
    CHECK(cfg.params.lpf_from_t == 3);
    CHECK(cfg.params.total_steps == 10);
    CHECK(cfg.net.feature_channels == 16);
    CHECK(cfg.seeds.weights == 9);
    CHECK(cfg.seeds.noise == 77);
    // image/mask are config-relative; output_dir stays as written
    CHECK(cfg.image_path == "/base/img.png");
    CHECK(cfg.mask_path == "/base/mask.pgm");
    CHECK(cfg.output_dir == "out/here");
    CHECK(cfg.prompt == "hello world");
    CHECK(cfg.capture.attention);
    CHECK(!cfg.capture.ci);
    CHECK(cfg.capture.latent);
    CHECK(cfg.analysis.layer == 1);
    CHECK(cfg.analysis.token == "2");

    // absolute paths pass through untouched
    json j2 = json::parse(R"({"image": "/abs/img.png"})");
    CHECK(parse_run_config(j2, "/base").image_path == "/abs/img.png");
}

TEST_CASE("empty config falls back to defaults") {
    RunConfig cfg = parse_run_config(json::object());
    CHECK(cfg.params.guidance_scale == 15.0);
    CHECK(cfg.params.inner_scale == 1.0);
    CHECK(cfg.params.outer_scale == 0.0);
    CHECK(cfg.params.lpf_cutoff == kPi);
    CHECK(cfg.params.lpf_from_t == 0);
    CHECK(cfg.params.total_steps == 50);
    CHECK(cfg.seeds.weights == 42);
    CHECK(cfg.seeds.noise == 1234);
    CHECK(cfg.output_dir == "out");
    CHECK(cfg.analysis.token == "all");
}

TEST_CASE("unknown keys are rejected at every level") {
    auto expect_unknown = [](const char* doc, const char* key, const char* where) {
        CHECK_THROWS_MATCHES(
            parse_run_config(json::parse(doc)), ParseError,
            Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring(
                std::string("unknown key '") + key + "' in " + where)));
    };
    expect_unknown(R"({"freqcond": {}})", "freqcond", "config");
    expect_unknown(R"({"freecond": {"omega": 1}})", "omega", "freecond");
    expect_unknown(R"({"net": {"depth": 3}})", "depth", "net");
    expect_unknown(R"({"seeds": {"bias": 1}})", "bias", "seeds");
    expect_unknown(R"({"capture": {"video": true}})", "video", "capture");
    expect_unknown(R"({"analysis": {"head": 0}})", "head", "analysis");
    // net.timesteps and net.seed are owned by freecond.T / seeds.weights
    expect_unknown(R"({"net": {"timesteps": 10}})", "timesteps", "net");
    expect_unknown(R"({"net": {"seed": 1}})", "seed", "net");
}

TEST_CASE("config type errors surface as parse errors") {
    CHECK_THROWS_AS(parse_run_config(json::parse(R"([1,2])")), ParseError);
    CHECK_THROWS_AS(parse_run_config(json::parse(R"({"freecond": 3})")), ParseError);
    CHECK_THROWS_AS(parse_run_config(json::parse(R"({"freecond": {"w": "big"}})")), ParseError);
    CHECK_THROWS_AS(parse_run_config(json::parse(R"({"freecond": {"T": 9.5}})")), ParseError);
    CHECK_THROWS_AS(parse_run_config(json::parse(R"({"freecond": {"gamma": true}})")),
                    ParseError);
    CHECK_THROWS_AS(parse_run_config(json::parse(R"({"seeds": {"weights": -4}})")), ParseError);
    CHECK_THROWS_AS(parse_run_config(json::parse(R"({"prompt": 12})")), ParseError);
    CHECK_THROWS_AS(parse_run_config(json::parse(R"({"analysis": {"token": 1.5}})")),
                    ParseError);

    // gamma may be a plain number too; both spellings agree
    RunConfig a = parse_run_config(json::parse(R"({"freecond": {"gamma": 1.25}})"));
    CHECK(a.params.lpf_cutoff == 1.25);
}

TEST_CASE("effective net wires scheduler and seed into the weights config") {
    RunConfig cfg = parse_run_config(json::parse(
        R"({"freecond": {"T": 12}, "seeds": {"weights": 5},
            "net": {"latent_factor": 4, "feature_channels": 16}})"));
    NetConfig n = effective_net(cfg, 64, 32);
    CHECK(n.latent_height == 16);
    CHECK(n.latent_width == 8);
    CHECK(n.timesteps == 12);
    CHECK(n.seed == 5);
    CHECK_THROWS_MATCHES(effective_net(cfg, 30, 64), DimensionError,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring(
                             "not divisible by latent_factor")));
}

TEST_CASE("config file loader reports the file and parse position") {
    fs::path bad = scratch("broken.json");
    write_file_atomic(bad, std::string("{\"freecond\": \n"));
    CHECK_THROWS_MATCHES(load_run_config(bad), ParseError,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring(
                             "config " + bad.string())));
    CHECK_THROWS_AS(load_run_config(scratch("nope.json")), IoError);
}

/*===================================== binary end-to-end =====================================*/

TEST_CASE("help exits clean", "[cli]") {
    std::string out;
    CHECK(run_cli("--help", &out) == 0);
    CHECK(out.find("inpaint") != std::string::npos);
    CHECK(out.find("sweep") != std::string::npos);
    CHECK(run_cli("inpaint --help") == 0);
}

TEST_CASE("config problems map to distinct exit codes", "[cli]") {
    std::string out;

    // missing config file: I/O
    CHECK(run_cli("inpaint --config " + scratch("absent.json").string(), &out) == 3);

    // malformed JSON: config error
    fs::path bad = scratch("bad.json");
    write_file_atomic(bad, std::string("{nope"));
    CHECK(run_cli("inpaint --config " + bad.string(), &out) == 2);

    // unknown key: config error naming the key
    fs::path unknown = scratch("unknown.json");
    write_file_atomic(unknown, std::string(R"({"freecond": {"omega": 3}})"));
    CHECK(run_cli("inpaint --config " + unknown.string(), &out) == 2);
    CHECK(out.find("unknown key 'omega'") != std::string::npos);

    // out-of-domain gamma via flag override
    CHECK(run_cli("inpaint --config " + data("small_config.json").string() +
                      " --gamma 4.0 -o " + scratch("never").string(),
                  &out) == 2);
    CHECK(out.find("gamma outside [0, pi]") != std::string::npos);

    // referenced mask file missing: I/O error naming the path
    fs::path cfg = scratch("missing_mask.json");
    write_file_atomic(cfg, std::string(R"({"image": ")") + data("small.png").string() +
                               R"(", "mask": "/definitely/not/here.pgm"})");
    CHECK(run_cli("inpaint --config " + cfg.string(), &out) == 3);
    CHECK(out.find("/definitely/not/here.pgm") != std::string::npos);
}

TEST_CASE("inpaint is bit-reproducible across invocations", "[cli]") {
    fs::path a = scratch("rep_a");
    fs::path b = scratch("rep_b");
    std::string base = "inpaint --config " + data("small_config.json").string();
    std::string out;
    REQUIRE(run_cli(base + " -o " + a.string() + " --capture-latent", &out) == 0);
    CHECK(out.find("wrote") != std::string::npos);
    REQUIRE(run_cli(base + " -o " + b.string() + " --capture-latent", &out) == 0);

    CHECK(same_bytes(a / "output.png", b / "output.png"));
    CHECK(same_bytes(a / "run.json", b / "run.json"));
    CHECK(same_bytes(a / "latent.tensor", b / "latent.tensor"));

    // wall time is printed, never serialized
    CHECK(read_file_text(a / "run.json").find("wall") == std::string::npos);
}

TEST_CASE("flag overrides land in the run record", "[cli]") {
    fs::path dir = scratch("override");
    REQUIRE(run_cli("inpaint --config " + data("small_config.json").string() + " --w 3 -o " +
                    dir.string()) == 0);
    json rec = json::parse(read_file_text(dir / "run.json"));
    CHECK(rec.at("freecond").at("w").get<double>() == 3.0);
    CHECK(rec.at("freecond").at("T").get<int>() == 8);
    CHECK(rec.at("prompt").get<std::string>() == "tiny test prompt");
    CHECK(rec.at("net").at("latent_height").get<int>() == 8);
    CHECK(!rec.contains("wall_seconds"));
}

TEST_CASE("a one-value sweep reproduces the plain run", "[cli]") {
    fs::path plain = scratch("sweep_plain");
    fs::path swept = scratch("sweep_tree");
    std::string base = " --config " + data("small_config.json").string();
    REQUIRE(run_cli("inpaint" + base + " -o " + plain.string()) == 0);
    REQUIRE(run_cli("sweep" + base + " --axis alpha --values 1 -o " + swept.string()) == 0);

    CHECK(same_bytes(plain / "output.png", swept / "run_000" / "output.png"));
    std::string csv = read_file_text(swept / "sweep.csv");
    CHECK(csv.rfind("value,iou,psnr_outside,changed_fraction,run", 0) == 0);
    CHECK(csv.find("run_000") != std::string::npos);
}

TEST_CASE("sweep worker count is validated", "[cli]") {
    std::string out;
    CHECK(run_cli("sweep --config " + data("small_config.json").string() +
                      " --axis alpha --values 1,2 -o " + scratch("sw_env").string(),
                  &out, "FREECOND_THREADS=abc ") == 2);
    CHECK(out.find("FREECOND_THREADS") != std::string::npos);

    CHECK(run_cli("sweep --config " + data("small_config.json").string() +
                      " --axis radius --values 1 -o " + scratch("sw_axis").string(),
                  &out) == 2);
    CHECK(out.find("unknown sweep axis 'radius'") != std::string::npos);
}

TEST_CASE("metrics computes, ingests, and aggregates", "[cli]") {
    std::string out;
    fs::path csv = scratch("scores.csv");

    // identical masks and images: IoU 1, PSNR saturates to inf
    REQUIRE(run_cli("metrics --pred-mask " + data("iou_a.pgm").string() + " --ref-mask " +
                        data("iou_a.pgm").string() + " --image " + data("case1.png").string() +
                        " --reference " + data("case1.png").string() + " --output " +
                        csv.string(),
                    &out) == 0);
    CHECK(out.find("inf") != std::string::npos);
    CHECK(out.find("mean per (method, metric):") != std::string::npos);
    std::string table = read_file_text(csv);
    CHECK(table.rfind("sample,method,metric,value", 0) == 0);
    CHECK(table.find("sample,default,iou,1") != std::string::npos);

    // disjoint masks give IoU zero; fixture pair a/b overlaps by a third
    REQUIRE(run_cli("metrics --pred-mask " + data("disjoint_a.pgm").string() +
                        " --ref-mask " + data("disjoint_b.pgm").string() + " --output " +
                        scratch("dis.csv").string(),
                    &out) == 0);
    CHECK(out.find("iou") != std::string::npos);
    CHECK(read_file_text(scratch("dis.csv")).find("sample,default,iou,0\n") !=
          std::string::npos);

    REQUIRE(run_cli("metrics --pred-mask " + data("iou_a.pgm").string() + " --ref-mask " +
                        data("iou_b.pgm").string() + " --output " +
                        scratch("third.csv").string(),
                    &out) == 0);
    CHECK(read_file_text(scratch("third.csv")).find("0.3333333333333333") !=
          std::string::npos);

    // external rows ride along into the merged table
    REQUIRE(run_cli("metrics --pred-mask " + data("iou_a.pgm").string() + " --ref-mask " +
                        data("iou_b.pgm").string() + " --external " +
                        data("external_scores.csv").string() + " --output " +
                        scratch("merged.csv").string(),
                    &out) == 0);
    std::string merged = read_file_text(scratch("merged.csv"));
    CHECK(merged.find("clip_score") != std::string::npos);
    CHECK(merged.find("case1,freecond,iou,0.72") != std::string::npos);
    CHECK(out.find("clip_score") != std::string::npos);

    // half a pair is a config error
    CHECK(run_cli("metrics --pred-mask " + data("iou_a.pgm").string(), &out) == 2);
    // nothing to score at all is too
    CHECK(run_cli("metrics", &out) == 2);
}

TEST_CASE("weight bundles regenerate identically and verify", "[cli]") {
    fs::path a = scratch("wa");
    fs::path b = scratch("wb");
    std::string cfg = " --config " + data("small_config.json").string();
    std::string out;
    REQUIRE(run_cli("gen-weights" + cfg + " -o " + a.string(), &out) == 0);
    CHECK(out.find("weight stream fnv1a64:") != std::string::npos);
    REQUIRE(run_cli("gen-weights" + cfg + " -o " + b.string()) == 0);

    CHECK(same_bytes(a / "weights" / "manifest.json", b / "weights" / "manifest.json"));
    CHECK(same_bytes(a / "weights" / "encoder_w.tensor", b / "weights" / "encoder_w.tensor"));
    CHECK(same_bytes(a / "weights" / "time_table.tensor", b / "weights" / "time_table.tensor"));

    CHECK(run_cli("gen-weights --verify " + (a / "weights").string(), &out) == 0);
    CHECK(out.find("ok:") != std::string::npos);

    // flip a byte; verification must fail with the integrity exit code
    fs::path victim = a / "weights" / "self_wq.tensor";
    std::string bytes = read_file_text(victim);
    bytes[bytes.size() / 2] ^= 0x01;
    write_file_atomic(victim, bytes);
    CHECK(run_cli("gen-weights --verify " + (a / "weights").string(), &out) == 4);
    CHECK(out.find("checksum mismatch") != std::string::npos);
}

TEST_CASE("ci report covers every token, channel, and region", "[cli]") {
    fs::path dir = scratch("ci_rep");
    std::string out;
    REQUIRE(run_cli("ci-report --config " + data("small_config.json").string() + " -o " +
                        dir.string(),
                    &out) == 0);
    std::string csv = read_file_text(dir / "ci.csv");
    CHECK(csv.rfind("layer,t,token_index,token_label,region,channel,ci,delta_ci", 0) == 0);
    // 8 tokens x 16 channels x 2 regions, plus the header line
    int lines = 0;
    for (char ch : csv)
        if (ch == '\n') ++lines;
    CHECK(lines == 1 + 8 * 16 * 2);
    CHECK(csv.find("<sot>") != std::string::npos);
    CHECK(csv.find("outside") != std::string::npos);

    // a token selector narrows the report
    fs::path one = scratch("ci_one");
    REQUIRE(run_cli("ci-report --config " + data("small_config.json").string() +
                        " --token tiny -o " + one.string(),
                    &out) == 0);
    std::string narrow = read_file_text(one / "ci.csv");
    int nlines = 0;
    for (char ch : narrow)
        if (ch == '\n') ++nlines;
    CHECK(nlines == 1 + 1 * 16 * 2);
    CHECK(run_cli("ci-report --config " + data("small_config.json").string() +
                      " --token absent -o " + scratch("ci_bad").string(),
                  &out) == 2);
    CHECK(out.find("no token labelled 'absent'") != std::string::npos);
}
