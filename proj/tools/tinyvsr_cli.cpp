// Command line front end: toy dataset synthesis, staged training, single and
// long video upscaling, and reference metric evaluation. Exit codes: 0 ok,
// 1 runtime failure, 2 usage/config problems.

#include <filesystem>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "tinyvsr/config.hpp"
#include "tinyvsr/image_io.hpp"
#include "tinyvsr/longvideo.hpp"
#include "tinyvsr/metrics.hpp"

namespace fs = std::filesystem;
using namespace tinyvsr;
using T = float;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

RunConfig load_config_if_given(const std::string& path) {
    if (path.empty()) return RunConfig{};
    if (!fs::exists(path)) throw UsageError("config file not found: " + path);
    return load_run_config(path);
}

std::vector<std::string> list_video_dirs(const std::string& root) {
    std::vector<std::string> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "gt") && fs::exists(e.path() / "lq"))
            dirs.push_back(e.path().string());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

std::unique_ptr<ReferenceEnhancer<T>> make_enhancer(const std::string& spec, int scale,
                                                    const std::string& gt_dir, uint64_t seed) {
    if (spec == "identity") return std::make_unique<IdentityUpscaler<T>>(scale);
    if (spec == "oracle") {
        if (gt_dir.empty()) throw UsageError("--enhancer oracle requires --gt");
        return std::make_unique<OracleEnhancer<T>>(read_frames<T>(gt_dir), scale);
    }
    if (spec == "net") {
        auto net = std::make_unique<TinySRNet<T>>(scale, 8, seed);
        if (!gt_dir.empty()) {
            // quick supervised fit against the provided ground truth
            auto gt = read_frames<T>(gt_dir);
            std::vector<std::pair<Tensor<T>, Tensor<T>>> pairs;
            for (int f = 0; f < gt.dim(0); ++f) {
                auto hq = slice_frame(gt, f);
                pairs.emplace_back(bicubic_resize(hq, hq.dim(2) / scale, hq.dim(3) / scale), hq);
            }
            net->fit(pairs, 200, T(2e-3));
        }
        return net;
    }
    if (spec.rfind("external:", 0) == 0)
        return std::make_unique<ExternalEnhancer<T>>(spec.substr(9), scale);
    throw UsageError("unknown enhancer '" + spec + "' (use identity|oracle|net|external:<cmd>)");
}

int cmd_synth_data(const std::string& out_dir, RunConfig cfg, int count, int frames, int size,
                   double dx, double dy, bool random_motion) {
    int k = frames > 0 ? frames : cfg.model.frames;
    auto videos = synthesize_toy_videos<T>(count, k, size, MotionSpec{dx, dy, random_motion},
                                           derive_seed(cfg.seed, "synth"));
    RngStream deg_rng(derive_seed(cfg.seed, "synth-degrade"), "degrade");
    fs::create_directories(out_dir);
    for (size_t i = 0; i < videos.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "video%03zu", i);
        std::string base = out_dir + "/" + name;
        write_frames(base + "/gt", videos[i].hq);
        write_frames(base + "/lq", degrade(videos[i].hq, cfg.degradation, deg_rng));
        fs::create_directories(base + "/flow");
        for (size_t f = 0; f < videos[i].flows.size(); ++f) {
            char fn[32];
            std::snprintf(fn, sizeof(fn), "%06zu.flo", f + 1);
            write_flow(base + "/flow/" + fn, videos[i].flows[f]);
        }
    }
    save_run_config(out_dir + "/config.json", cfg);
    std::cout << "wrote " << videos.size() << " videos to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& ckpt_in,
              const std::string& ckpt_out, RunConfig cfg, int stage, int iterations, double lr) {
    if (!fs::exists(data_dir)) throw UsageError("data directory not found: " + data_dir);
    auto dirs = list_video_dirs(data_dir);
    if (dirs.empty()) throw UsageError("no video directories (gt/ + lq/) under " + data_dir);
    std::vector<TrainPair<T>> data;
    for (const auto& d : dirs)
        data.push_back({read_frames<T>(d + "/gt"), read_frames<T>(d + "/lq")});

    std::unique_ptr<ModelBundle<T>> bundle;
    if (!ckpt_in.empty()) {
        if (!fs::exists(ckpt_in)) throw UsageError("checkpoint not found: " + ckpt_in);
        bundle = std::make_unique<ModelBundle<T>>(ModelBundle<T>::load(ckpt_in));
    } else if (stage == 0) {
        bundle = std::make_unique<ModelBundle<T>>(cfg.model, cfg.seed);
    } else {
        throw UsageError("stages 1-3 need --checkpoint from the previous stage");
    }

    auto sc = cfg.stage(stage);
    if (iterations > 0) sc.iterations = iterations;
    if (lr > 0) sc.lr = static_cast<T>(lr);
    auto sched = NoiseSchedule<T>::cosine(cfg.sampler.steps);
    std::vector<T> losses;
    switch (stage) {
        case 0: losses = train_stage0(data, *bundle, sc, sched); break;
        case 1: losses = train_stage1(data, *bundle, sc, sched); break;
        case 2: losses = train_stage2(data, *bundle, sc, sched); break;
        case 3: losses = train_stage3(data, *bundle, sc, sched); break;
        default: throw UsageError("--stage must be 0..3");
    }
    bundle->save(ckpt_out);
    std::cout << "stage " << stage << ": " << losses.size() << " iterations, first loss "
              << losses.front() << ", last loss " << losses.back() << ", saved " << ckpt_out
              << "\n";
    return 0;
}

int cmd_upscale(const std::string& in_dir, const std::string& out_dir, const std::string& ckpt,
                RunConfig cfg, const std::string& enhancer_spec, const std::string& gt_dir,
                bool long_mode) {
    if (!fs::exists(in_dir)) throw UsageError("input directory not found: " + in_dir);
    if (!fs::exists(ckpt)) throw UsageError("checkpoint not found: " + ckpt);
    auto bundle = ModelBundle<T>::load(ckpt);
    auto video = read_frames<T>(in_dir);
    int scale = bundle.cfg.vae_factor;
    auto enhancer = make_enhancer(enhancer_spec, scale, gt_dir, derive_seed(cfg.seed, "enhancer"));
    auto sched = NoiseSchedule<T>::cosine(cfg.sampler.steps);
    int k = bundle.cfg.frames;

    Tensor<T> result;
    if (long_mode || video.dim(0) > k) {
        result = run_long_vsr(video, *enhancer, bundle, sched, cfg.sampler, k);
    } else {
        auto h1 = enhancer->enhance(slice_frame(video, 0), 0);
        auto hk = enhancer->enhance(slice_frame(video, video.dim(0) - 1), video.dim(0) - 1);
        result = bidirectional_sample(video, h1, hk, bundle, sched, cfg.sampler);
    }
    write_frames(out_dir, result);
    std::cout << "wrote " << result.dim(0) << " frames to " << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& flow_dir,
             const std::string& report_path) {
    if (!fs::exists(pred_dir)) throw UsageError("prediction directory not found: " + pred_dir);
    if (!fs::exists(gt_dir)) throw UsageError("ground-truth directory not found: " + gt_dir);

    auto eval_one = [&](const std::string& pred, const std::string& gt, const std::string& flows,
                        const std::string& id) {
        VideoMetrics m;
        m.id = id;
        auto p = read_frames<T>(pred);
        auto g = read_frames<T>(gt);
        m.psnr = psnr(p, g);
        m.ssim = ssim(p, g);
        if (!flows.empty() && fs::exists(flows)) {
            std::vector<std::string> files;
            for (const auto& e : fs::directory_iterator(flows))
                if (e.path().extension() == ".flo") files.push_back(e.path().string());
            std::sort(files.begin(), files.end());
            std::vector<Tensor<T>> fl;
            for (const auto& f : files) fl.push_back(read_flow<T>(f));
            m.e_warp = flow_warp_error(p, fl);
        }
        return m;
    };

    MetricReport report;
    bool flat = false;
    for (const auto& e : fs::directory_iterator(pred_dir))
        if (e.path().extension() == ".png") flat = true;
    if (flat) {
        report.videos.push_back(eval_one(pred_dir, gt_dir, flow_dir, "video"));
    } else {
        for (const auto& e : fs::directory_iterator(pred_dir)) {
            if (!e.is_directory()) continue;
            std::string id = e.path().filename().string();
            std::string gt = gt_dir + "/" + id;
            if (!fs::exists(gt)) continue;
            if (fs::exists(gt + "/gt")) gt += "/gt";  // dataset layout
            std::string flows = flow_dir.empty() ? "" : flow_dir + "/" + id + "/flow";
            report.videos.push_back(eval_one(e.path().string(), gt, flows, id));
        }
        std::sort(report.videos.begin(), report.videos.end(),
                  [](const auto& a, const auto& b) { return a.id < b.id; });
    }
    if (report.videos.empty()) throw UsageError("nothing to evaluate under " + pred_dir);

    nlohmann::json j = report;
    if (!report_path.empty()) {
        std::ofstream os(report_path);
        os << j.dump(2) << "\n";
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toy video super-resolution pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir, data_dir, in_dir, ckpt_in, ckpt_out;
    std::string enhancer_spec = "identity", gt_dir, flow_dir, report_path, pred_dir;
    int count = 8, frames = 0, size = 32, stage = 0, iterations = 0;
    double dx = 1, dy = 0, lr = 0;
    bool random_motion = false, long_mode = false;

    // flags shared by several subcommands; only applied when the user sets them
    uint64_t seed = 0;
    int steps = 0, tile = 0, tile_overlap = -2;
    double strength = 0;
    bool unidirectional = false, bidirectional = false;

    auto* synth = app.add_subcommand("synth-data", "generate a toy dataset");
    synth->add_option("--out", out_dir)->required();
    synth->add_option("--config", config_path);
    synth->add_option("--count", count);
    synth->add_option("--frames", frames);
    synth->add_option("--size", size);
    synth->add_option("--dx", dx);
    synth->add_option("--dy", dy);
    synth->add_flag("--random-motion", random_motion);
    synth->add_option("--seed", seed);

    auto* train = app.add_subcommand("train", "run one training stage");
    train->add_option("--data", data_dir)->required();
    train->add_option("--stage", stage)->required();
    train->add_option("--checkpoint", ckpt_in);
    train->add_option("--out", ckpt_out)->required();
    train->add_option("--config", config_path);
    train->add_option("--iterations", iterations);
    train->add_option("--lr", lr);
    train->add_option("--seed", seed);
    train->add_option("--steps", steps);

    auto* upscale = app.add_subcommand("upscale", "enhance a low-quality clip");
    upscale->add_option("--in", in_dir)->required();
    upscale->add_option("--out", out_dir)->required();
    upscale->add_option("--checkpoint", ckpt_in)->required();
    upscale->add_option("--config", config_path);
    upscale->add_option("--enhancer", enhancer_spec);
    upscale->add_option("--gt", gt_dir);
    upscale->add_flag("--long", long_mode);
    upscale->add_flag("--bidirectional", bidirectional);
    upscale->add_flag("--unidirectional", unidirectional);
    upscale->add_option("--steps", steps);
    upscale->add_option("--sdedit-strength", strength);
    upscale->add_option("--tile-size", tile);
    upscale->add_option("--tile-overlap", tile_overlap);
    upscale->add_option("--seed", seed);

    auto* eval = app.add_subcommand("eval", "reference metrics on frame directories");
    eval->add_option("--pred", pred_dir)->required();
    eval->add_option("--gt", gt_dir)->required();
    eval->add_option("--flows", flow_dir);
    eval->add_option("--report", report_path);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        RunConfig cfg = load_config_if_given(config_path);
        if (seed != 0) cfg.seed = seed;
        if (steps > 0) cfg.sampler.steps = steps;
        if (strength > 0) cfg.sampler.sdedit_strength = strength;
        if (tile > 0) cfg.sampler.tile = tile;
        if (tile_overlap > -2) cfg.sampler.tile_overlap = tile_overlap;
        if (unidirectional && bidirectional)
            throw UsageError("--bidirectional and --unidirectional are mutually exclusive");
        if (unidirectional) cfg.sampler.bidirectional = false;
        if (bidirectional) cfg.sampler.bidirectional = true;
        cfg.sampler.seed = derive_seed(cfg.seed, "sampling");

        if (synth->parsed())
            return cmd_synth_data(out_dir, cfg, count, frames, size, dx, dy, random_motion);
        if (train->parsed())
            return cmd_train(data_dir, ckpt_in, ckpt_out, cfg, stage, iterations, lr);
        if (upscale->parsed())
            return cmd_upscale(in_dir, out_dir, ckpt_in, cfg, enhancer_spec, gt_dir, long_mode);
        if (eval->parsed()) return cmd_eval(pred_dir, gt_dir, flow_dir, report_path);
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
