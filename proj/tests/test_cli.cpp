// End-to-end checks of the command line binary: dataset synthesis, training,
// upscaling, evaluation, determinism of repeated runs, and exit codes.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tinyvsr/config.hpp"
#include "tinyvsr/image_io.hpp"

namespace fs = std::filesystem;
using namespace tinyvsr;

#ifndef TINYVSR_CLI_PATH
#error "TINYVSR_CLI_PATH must be defined by the build"
#endif

namespace {

int run(const std::string& args) {
    std::string cmd = std::string(TINYVSR_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

bool same_frame_bytes(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> fa, fb;
    for (const auto& e : fs::directory_iterator(a)) fa.push_back(e.path());
    for (const auto& e : fs::directory_iterator(b)) fb.push_back(e.path());
    std::sort(fa.begin(), fa.end());
    std::sort(fb.begin(), fb.end());
    if (fa.size() != fb.size()) return false;
    for (size_t i = 0; i < fa.size(); ++i)
        if (slurp(fa[i]) != slurp(fb[i])) return false;
    return true;
}

struct Workspace {
    fs::path root;
    Workspace() {
        root = fs::temp_directory_path() / ("tinyvsr_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(root);
        fs::create_directories(root);
        RunConfig cfg;
        cfg.model.frames = 4;
        cfg.model.latent_channels = 2;
        cfg.model.base_width = 8;
        cfg.model.num_heads = 2;
        cfg.model.vae_factor = 4;
        cfg.model.ref_embed_dim = 8;
        cfg.model.adapter_rank = 2;
        cfg.model.temb_dim = 16;
        cfg.model.resolutions = {8, 12};
        cfg.sampler.steps = 4;
        cfg.seed = 11;
        StageConfig<float> s0;
        s0.iterations = 2;
        cfg.stages[0] = s0;
        save_run_config((root / "toy.json").string(), cfg);
    }
    ~Workspace() { fs::remove_all(root); }
    std::string p(const std::string& rel) const { return (root / rel).string(); }
};

}  // namespace

TEST_CASE("usage errors exit with status 2") {
    CHECK(run("train --stage 1") == 2);                       // missing required flags
    CHECK(run("eval --pred /nonexistent --gt /nonexistent") == 2);
    CHECK(run("definitely-not-a-subcommand") == 2);
}

TEST_CASE("full pipeline through the binary") {
    Workspace ws;
    std::string cfg = " --config " + ws.p("toy.json");

    REQUIRE(run("synth-data --out " + ws.p("data") + cfg + " --count 1 --size 16") == 0);
    REQUIRE(fs::exists(ws.p("data/video000/gt/000001.png")));
    REQUIRE(fs::exists(ws.p("data/video000/lq/000004.png")));
    REQUIRE(fs::exists(ws.p("data/video000/flow/000003.flo")));
    REQUIRE(fs::exists(ws.p("data/config.json")));

    SECTION("dataset synthesis is deterministic") {
        REQUIRE(run("synth-data --out " + ws.p("data2") + cfg + " --count 1 --size 16") == 0);
        CHECK(same_frame_bytes(ws.p("data/video000/gt"), ws.p("data2/video000/gt")));
        CHECK(same_frame_bytes(ws.p("data/video000/lq"), ws.p("data2/video000/lq")));
    }

    REQUIRE(run("train --stage 0 --data " + ws.p("data") + " --out " + ws.p("s0.ckpt") + cfg) ==
            0);
    REQUIRE(fs::exists(ws.p("s0.ckpt")));

    SECTION("later stages refuse to start without a checkpoint") {
        CHECK(run("train --stage 1 --data " + ws.p("data") + " --out " + ws.p("x.ckpt") + cfg) ==
              2);
    }

    std::string ups = "upscale --in " + ws.p("data/video000/lq") + " --checkpoint " +
                      ws.p("s0.ckpt") + cfg + " --enhancer oracle --gt " +
                      ws.p("data/video000/gt");
    REQUIRE(run(ups + " --out " + ws.p("pred")) == 0);
    auto pred = read_frames<float>(ws.p("pred"));
    CHECK(pred.dim(0) == 4);
    CHECK(pred.dim(2) == 16);

    SECTION("same seed reruns are byte identical") {
        REQUIRE(run(ups + " --out " + ws.p("pred2")) == 0);
        CHECK(same_frame_bytes(ws.p("pred"), ws.p("pred2")));
    }

    SECTION("evaluation writes a report") {
        REQUIRE(run("eval --pred " + ws.p("pred") + " --gt " + ws.p("data/video000/gt") +
                    " --flows " + ws.p("data/video000/flow") + " --report " +
                    ws.p("report.json")) == 0);
        std::ifstream is(ws.p("report.json"));
        nlohmann::json j;
        is >> j;
        CHECK(j["videos"].size() == 1);
        CHECK(j["aggregate"]["psnr"].get<double>() > 0.0);
        CHECK(j["aggregate"]["e_warp"].get<double>() >= 0.0);
    }
}

TEST_CASE("long inputs are scheduled into overlapping clips") {
    Workspace ws;
    std::string cfg = " --config " + ws.p("toy.json");
    // 10 frames with k = 4: stride 3, one padded frame, output trimmed to 10
    REQUIRE(run("synth-data --out " + ws.p("ld") + cfg + " --count 1 --frames 10 --size 16") ==
            0);
    REQUIRE(run("train --stage 0 --data " + ws.p("ld") + " --out " + ws.p("m.ckpt") + cfg) == 0);
    REQUIRE(run("upscale --in " + ws.p("ld/video000/lq") + " --checkpoint " + ws.p("m.ckpt") +
                cfg + " --enhancer oracle --gt " + ws.p("ld/video000/gt") + " --out " +
                ws.p("long_pred")) == 0);
    auto pred = read_frames<float>(ws.p("long_pred"));
    CHECK(pred.dim(0) == 10);
    CHECK(pred.dim(2) == 16);
}

TEST_CASE("run config round trips through JSON") {
    Workspace ws;
    auto cfg = load_run_config(ws.p("toy.json"));
    CHECK(cfg.model.frames == 4);
    CHECK(cfg.model.resolutions == std::vector<int>{8, 12});
    CHECK(cfg.sampler.steps == 4);
    CHECK(cfg.seed == 11);
    CHECK(cfg.stage(0).iterations == 2);
    CHECK(cfg.stage(2).stage == 2);  // default filled in
    save_run_config(ws.p("rt.json"), cfg);
    auto cfg2 = load_run_config(ws.p("rt.json"));
    CHECK(cfg2.model.frames == cfg.model.frames);
    CHECK(cfg2.stage(0).iterations == 2);
}
