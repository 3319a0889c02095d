#pragma once

// Toy data synthesis with exact ground-truth flow, a blur/downsample/noise/
// quantize degradation pipeline, and the staged training recipe. Stages touch
// disjoint parameter subsets:
//   stage 0: VAE + forward denoiser + reference encoder pretraining
//   stage 1: video ControlNet only
//   stage 2: backward temporal value/output projections only
//   stage 3: VAE decoder low-rank adapters + discriminator
// Gradients are computed for the whole graph; the optimizer only steps the
// stage's mask, and the mask tests compare everything else bitwise.

#include <cstdio>

#include "tinyvsr/optim.hpp"
#include "tinyvsr/sampling.hpp"

namespace tinyvsr {

// ---------------------------------------------------------------------------
// toy data
// ---------------------------------------------------------------------------

struct MotionSpec {
    double dx = 0, dy = 0;   // pixels per frame
    bool randomize = false;  // sample integer velocities in [-dx,dx] x [-dy,dy] per video
};

template <typename T>
struct ToyVideo {
    Tensor<T> hq;                  // [k,3,size,size]
    std::vector<Tensor<T>> flows;  // k-1 fields, [1,2,size,size]
    double dx = 0, dy = 0;
};

// Band-limited sums of random sinusoids evaluated at translated coordinates,
// so motion is an exact global translation and the flow is known analytically.
template <typename T>
std::vector<ToyVideo<T>> synthesize_toy_videos(int count, int k, int size,
                                               const MotionSpec& motion, uint64_t seed) {
    if (count < 1 || k < 1 || size < 1)
        throw std::invalid_argument("synthesize_toy_videos: bad geometry");
    RngStream rng(seed, "toy-videos");
    std::vector<ToyVideo<T>> out;
    constexpr int kWaves = 6;
    for (int v = 0; v < count; ++v) {
        ToyVideo<T> video;
        video.dx = motion.dx;
        video.dy = motion.dy;
        if (motion.randomize) {
            video.dx = rng.uniform_int(-static_cast<int>(std::abs(motion.dx)),
                                       static_cast<int>(std::abs(motion.dx)));
            video.dy = rng.uniform_int(-static_cast<int>(std::abs(motion.dy)),
                                       static_cast<int>(std::abs(motion.dy)));
        }
        T amp[kWaves], fx[kWaves], fy[kWaves], ph[kWaves][3];
        T amp_sum = 0;
        for (int j = 0; j < kWaves; ++j) {
            amp[j] = rng.uniform<T>(T(0.4), T(1));
            fx[j] = rng.uniform<T>(T(-1), T(1));
            fy[j] = rng.uniform<T>(T(-1), T(1));
            for (int c = 0; c < 3; ++c) ph[j][c] = rng.uniform<T>(T(0), T(6.283185));
            amp_sum += amp[j];
        }
        video.hq = Tensor<T>({k, 3, size, size});
        for (int t = 0; t < k; ++t) {
            T ox = static_cast<T>(t * video.dx), oy = static_cast<T>(t * video.dy);
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x) {
                        T s = 0;
                        for (int j = 0; j < kWaves; ++j)
                            s += amp[j] * std::sin(fx[j] * (x - ox) + fy[j] * (y - oy) + ph[j][c]);
                        video.hq.at(t, c, y, x) = T(0.5) + T(0.45) * s / amp_sum;
                    }
        }
        for (int t = 0; t + 1 < k; ++t) {
            Tensor<T> f({1, 2, size, size});
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    f.at(0, 0, y, x) = static_cast<T>(video.dx);
                    f.at(0, 1, y, x) = static_cast<T>(video.dy);
                }
            video.flows.push_back(std::move(f));
        }
        out.push_back(std::move(video));
    }
    return out;
}

// ---------------------------------------------------------------------------
// degradation
// ---------------------------------------------------------------------------

template <typename T>
struct DegradationConfig {
    T blur_lo = T(0.4), blur_hi = T(1.2);  // Gaussian sigma range, sampled per clip
    int factor = 4;                        // spatial downscale
    T noise_lo = T(0), noise_hi = T(0.03); // additive noise sigma range, pixel units
    int quant_levels = 0;                  // 0 disables the compression surrogate

    void validate() const {
        if (blur_lo > blur_hi || blur_lo < 0)
            throw std::invalid_argument("degrade: bad blur range");
        if (noise_lo > noise_hi || noise_lo < 0)
            throw std::invalid_argument("degrade: bad noise range");
        if (factor < 1) throw std::invalid_argument("degrade: factor must be >= 1");
        if (quant_levels == 1 || quant_levels < 0)
            throw std::invalid_argument("degrade: quant_levels must be 0 or >= 2");
    }
};

namespace detail {
template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& x, T sigma) {
    if (sigma <= T(0)) return x;
    int r = static_cast<int>(std::ceil(T(3) * sigma));
    std::vector<T> w(2 * r + 1);
    T sum = 0;
    for (int i = -r; i <= r; ++i) {
        w[i + r] = std::exp(-T(0.5) * i * i / (sigma * sigma));
        sum += w[i + r];
    }
    for (auto& v : w) v /= sum;
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> tmp(x.shape()), out(x.shape());
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) {
                    T acc = 0;
                    for (int i = -r; i <= r; ++i)
                        acc += w[i + r] * x.at(n, c, y, std::clamp(xx + i, 0, W - 1));
                    tmp.at(n, c, y, xx) = acc;
                }
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) {
                    T acc = 0;
                    for (int i = -r; i <= r; ++i)
                        acc += w[i + r] * tmp.at(n, c, std::clamp(y + i, 0, H - 1), xx);
                    out.at(n, c, y, xx) = acc;
                }
        }
    return out;
}

template <typename T>
Tensor<T> average_pool(const Tensor<T>& x, int factor) {
    if (factor == 1) return x;
    if (x.dim(2) % factor != 0 || x.dim(3) % factor != 0)
        throw std::invalid_argument("degrade: dims not divisible by the downscale factor");
    int N = x.dim(0), C = x.dim(1), H = x.dim(2) / factor, W = x.dim(3) / factor;
    Tensor<T> out({N, C, H, W});
    T inv = T(1) / static_cast<T>(factor * factor);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) {
                    T acc = 0;
                    for (int i = 0; i < factor; ++i)
                        for (int j = 0; j < factor; ++j)
                            acc += x.at(n, c, y * factor + i, xx * factor + j);
                    out.at(n, c, y, xx) = acc * inv;
                }
    return out;
}
}  // namespace detail

// blur -> downsample -> noise -> optional quantization, parameters sampled
// once per clip.
template <typename T>
Tensor<T> degrade(const Tensor<T>& hq, const DegradationConfig<T>& cfg, RngStream& rng) {
    cfg.validate();
    Tensor<T> out = hq;
    if (cfg.blur_hi > T(0)) out = detail::gaussian_blur(out, rng.uniform<T>(cfg.blur_lo, cfg.blur_hi));
    out = detail::average_pool(out, cfg.factor);
    if (cfg.noise_hi > T(0)) {
        T sigma = rng.uniform<T>(cfg.noise_lo, cfg.noise_hi);
        for (int64_t i = 0; i < out.size(); ++i) out[i] += sigma * rng.normal<T>();
    }
    if (cfg.quant_levels >= 2) {
        T levels = static_cast<T>(cfg.quant_levels - 1);
        for (int64_t i = 0; i < out.size(); ++i)
            out[i] = std::clamp(std::round(out[i] * levels) / levels, T(0), T(1));
    }
    return out;
}

template <typename T>
struct TrainPair {
    Tensor<T> hq;  // [k,3,S,S]
    Tensor<T> lq;  // [k,3,S/f,S/f]
};

template <typename T>
std::vector<TrainPair<T>> make_training_pairs(const std::vector<ToyVideo<T>>& videos,
                                              const DegradationConfig<T>& cfg, uint64_t seed) {
    RngStream rng(seed, "degrade");
    std::vector<TrainPair<T>> pairs;
    for (const auto& v : videos) pairs.push_back({v.hq, degrade(v.hq, cfg, rng)});
    return pairs;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// Mean squared distance between activations of a fixed, randomly initialized
// two-layer conv feature net (the desk-scale stand-in for a pretrained
// perceptual backbone). The weights are seeded once and never trained.
template <typename T>
Var<T> perceptual_loss(const Var<T>& a, const Var<T>& b) {
    struct Features {
        Tensor<T> w1, b1, w2, b2;
        Features() {
            RngStream rng(0x70657263, "percept-features");
            w1 = randn<T>({8, 3, 3, 3}, rng, std::sqrt(T(2) / T(27)));
            b1 = Tensor<T>::zeros({8});
            w2 = randn<T>({8, 8, 3, 3}, rng, std::sqrt(T(2) / T(72)));
            b2 = Tensor<T>::zeros({8});
        }
    };
    static const Features F;
    auto feat = [&](const Var<T>& x) {
        auto h = silu(conv2d(x, constant(F.w1), constant(F.b1), 2, 1));
        return silu(conv2d(h, constant(F.w2), constant(F.b2), 2, 1));
    };
    return mse_loss(feat(a), feat(b));
}

// Hinge GAN losses on raw patch scores.
template <typename T>
Var<T> hinge_d_loss(const Var<T>& real_scores, const Var<T>& fake_scores) {
    auto real_term = mean_all(relu(add_scalar(scale(real_scores, T(-1)), T(1))));  // relu(1 - r)
    auto fake_term = mean_all(relu(add_scalar(fake_scores, T(1))));                // relu(1 + f)
    return add(real_term, fake_term);
}

template <typename T>
Var<T> hinge_g_loss(const Var<T>& fake_scores) {
    return scale(mean_all(fake_scores), T(-1));
}

// ---------------------------------------------------------------------------
// stage configuration and masks
// ---------------------------------------------------------------------------

template <typename T>
struct StageConfig {
    int stage = 1;
    int iterations = 50;
    T lr = T(8e-5);
    int batch_size = 1;
    T alpha = T(1);       // perceptual weight (stage 3)
    T beta = T(0.025);    // GAN weight (stage 3)
    int sample_steps = 8; // stage-3 sampling depth
    uint64_t seed = 0;
};

namespace detail {
inline bool ends_with(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}
inline bool starts_with(const std::string& s, const std::string& pre) {
    return s.rfind(pre, 0) == 0;
}
}  // namespace detail

template <typename T>
std::map<std::string, Var<T>> stage_trainable(ModelBundle<T>& bundle, int stage) {
    using detail::ends_with;
    using detail::starts_with;
    std::map<std::string, Var<T>> mask;
    for (auto& [name, p] : bundle.store.params) {
        bool in = false;
        switch (stage) {
            case 0:
                in = (starts_with(name, "vae.") && name.find(".lora.") == std::string::npos) ||
                     (starts_with(name, "unet.") && !ends_with(name, ".wv_b") &&
                      !ends_with(name, ".wo_b")) ||
                     starts_with(name, "refenc.");
                break;
            case 1:
                in = starts_with(name, "ctrl.");
                break;
            case 2:
                in = starts_with(name, "unet.") &&
                     (ends_with(name, ".wv_b") || ends_with(name, ".wo_b"));
                break;
            case 3:
                in = (starts_with(name, "vae.") && name.find(".lora.") != std::string::npos) ||
                     starts_with(name, "disc.");
                break;
            default:
                throw std::invalid_argument("stage_trainable: stage must be 0..3");
        }
        if (in) mask.emplace(name, p);
    }
    return mask;
}

// ---------------------------------------------------------------------------
// stage loops
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void check_finite(const Var<T>& loss, int stage, int iteration) {
    if (!std::isfinite(static_cast<double>(loss->value[0])))
        throw std::runtime_error("stage " + std::to_string(stage) +
                                 ": loss diverged (non-finite) at iteration " +
                                 std::to_string(iteration));
}

// v-prediction loss of the forward pipeline on one clip. The clean latent and
// reference latent are treated as data (no gradient into the encoder from
// this loss); the reference embedding keeps its gradient path so stage 0 can
// train the reference encoder.
template <typename T>
Var<T> forward_v_loss(ModelBundle<T>& bundle, const Tensor<T>& hq, const Tensor<T>& lq,
                      bool use_ctrl, const NoiseSchedule<T>& sched, RngStream& rng) {
    int k = hq.dim(0);
    Tensor<T> z0, ref_lat;
    {
        NoGradGuard ng;
        z0 = bundle.vae.encode(constant(hq))->value;
        ref_lat = bundle.vae.encode(constant(slice_frame(hq, 0)))->value;
    }
    int t = rng.uniform_int(1, sched.num_steps);
    Tensor<T> eps = randn<T>(z0.shape(), rng);
    Tensor<T> z_t = add_noise(z0, eps, t, sched);
    Tensor<T> target = v_target(z0, eps, t, sched);

    auto z_in = constant(concat_channels_value(z_t, repeat_frame(ref_lat, k)));
    auto emb = bundle.refenc.forward(constant(slice_frame(hq, 0)));
    T tv = sched.timestep_embed_values[t];
    auto ctx = AttnCtx<T>::plain();
    std::vector<Var<T>> residuals;
    if (use_ctrl) {
        auto cond = constant(bicubic_resize(lq, hq.dim(2), hq.dim(3)));
        residuals = bundle.ctrl.forward(z_in, cond, tv, emb, ctx);
    }
    auto v = bundle.unet.forward(z_in, tv, emb, use_ctrl ? &residuals : nullptr, ctx,
                                 DenoiserRole::Forward);
    return mse_loss(v, constant(target));
}

// Stage-2 loss: capture the forward attention, then train the backward pass
// against the frame-reversed v target.
template <typename T>
Var<T> backward_v_loss(ModelBundle<T>& bundle, const Tensor<T>& hq, const Tensor<T>& lq,
                       const NoiseSchedule<T>& sched, RngStream& rng) {
    int k = hq.dim(0);
    Tensor<T> z0;
    {
        NoGradGuard ng;
        z0 = bundle.vae.encode(constant(hq))->value;
    }
    int t = rng.uniform_int(1, sched.num_steps);
    Tensor<T> eps = randn<T>(z0.shape(), rng);
    Tensor<T> z_t = add_noise(z0, eps, t, sched);
    Tensor<T> target_rev = reverse_frames(v_target(z0, eps, t, sched));

    auto up = bicubic_resize(lq, hq.dim(2), hq.dim(3));
    auto ref1 = make_ref_cond(slice_frame(hq, 0), bundle);
    auto refk = make_ref_cond(slice_frame(hq, k - 1), bundle);
    auto [p_f, rec] = forward_core(z_t, t, ref1, up, bundle, sched);
    (void)p_f;

    auto rotated = rotate_attention(rec);
    auto z_in = constant(concat_channels_value(reverse_frames(z_t), repeat_frame(refk.latent, k)));
    auto emb = constant(refk.embed);
    auto cond = constant(reverse_frames(up));
    T tv = sched.timestep_embed_values[t];
    auto ctx = AttnCtx<T>::inject(rotated);
    auto residuals = bundle.ctrl.forward(z_in, cond, tv, emb, ctx);
    auto v_b = bundle.unet.forward(z_in, tv, emb, &residuals, ctx, DenoiserRole::Backward);
    return mse_loss(v_b, constant(target_rev));
}

// Detached short sampling run for stage 3; returns the predicted clean latent.
template <typename T>
Tensor<T> sample_latents_detached(ModelBundle<T>& bundle, const Tensor<T>& hq, const Tensor<T>& lq,
                                  int steps, uint64_t seed) {
    NoGradGuard ng;
    int k = hq.dim(0);
    auto sched = NoiseSchedule<T>::cosine(steps);
    auto up = bicubic_resize(lq, hq.dim(2), hq.dim(3));
    auto ref1 = make_ref_cond(slice_frame(hq, 0), bundle);
    auto refk = make_ref_cond(slice_frame(hq, k - 1), bundle);
    Tensor<T> lq_latent = bundle.vae_encode(up);
    RngStream rng(seed, "stage3-sample");
    auto [z, t_start] = sdedit_start(lq_latent, SdeditConfig{1.0, steps}, sched, rng);
    for (int t = t_start; t >= 1; --t) {
        auto [p_f, rec] = forward_core(z, t, ref1, up, bundle, sched);
        auto p_b = backward_core(z, t, refk, up, rec, bundle, sched);
        z = denoise_step(z, blend(reverse_frames(p_b), p_f), t, t - 1, sched);
    }
    return z;
}

}  // namespace detail

// Stage 0: pretrain the VAE (reconstruction), the forward image-to-video
// denoiser, and the reference encoder. Afterwards the backward projections
// are re-synced to the trained forward ones and the ControlNet is re-cloned
// from the trained encoder, restoring the copy invariants the later stages
// and the sampler rely on.
template <typename T>
std::vector<T> train_stage0(const std::vector<TrainPair<T>>& data, ModelBundle<T>& bundle,
                            const StageConfig<T>& cfg, const NoiseSchedule<T>& sched) {
    if (data.empty()) throw std::invalid_argument("train_stage0: empty dataset");
    RngStream rng(cfg.seed, "train-stage0");
    auto mask = stage_trainable(bundle, 0);
    AdamW<T> opt;
    opt.lr = cfg.lr;
    std::vector<T> losses;
    for (int it = 0; it < cfg.iterations; ++it) {
        const auto& pair = data[it % data.size()];
        bundle.store.zero_grads();
        auto recon = bundle.vae.decode(bundle.vae.encode(constant(pair.hq)), false);
        auto loss = add(mse_loss(recon, constant(pair.hq)),
                        detail::forward_v_loss(bundle, pair.hq, pair.lq, false, sched, rng));
        detail::check_finite(loss, 0, it);
        backward(loss);
        opt.step(mask);
        losses.push_back(loss->value[0]);
    }
    // restore the copy invariants broken by updating the forward weights
    for (auto& [name, p] : bundle.store.params) {
        if (detail::starts_with(name, "unet.") && detail::ends_with(name, ".wv_b"))
            p->value = bundle.store.at(name.substr(0, name.size() - 2))->value;
        if (detail::starts_with(name, "unet.") && detail::ends_with(name, ".wo_b"))
            p->value = bundle.store.at(name.substr(0, name.size() - 2))->value;
    }
    bundle.ctrl.clone_from(bundle.store, bundle.store);
    bundle.stage = "stage0";
    return losses;
}

// Stage 1: ControlNet only, v-prediction loss of the conditioned forward pass.
template <typename T>
std::vector<T> train_stage1(const std::vector<TrainPair<T>>& data, ModelBundle<T>& bundle,
                            const StageConfig<T>& cfg, const NoiseSchedule<T>& sched) {
    if (data.empty()) throw std::invalid_argument("train_stage1: empty dataset");
    RngStream rng(cfg.seed, "train-stage1");
    auto mask = stage_trainable(bundle, 1);
    AdamW<T> opt;
    opt.lr = cfg.lr;
    std::vector<T> losses;
    for (int it = 0; it < cfg.iterations; ++it) {
        const auto& pair = data[it % data.size()];
        bundle.store.zero_grads();
        auto loss = detail::forward_v_loss(bundle, pair.hq, pair.lq, true, sched, rng);
        detail::check_finite(loss, 1, it);
        backward(loss);
        opt.step(mask);
        losses.push_back(loss->value[0]);
    }
    bundle.stage = "stage1";
    return losses;
}

// Stage 2: backward temporal value/output projections only.
template <typename T>
std::vector<T> train_stage2(const std::vector<TrainPair<T>>& data, ModelBundle<T>& bundle,
                            const StageConfig<T>& cfg, const NoiseSchedule<T>& sched) {
    if (data.empty()) throw std::invalid_argument("train_stage2: empty dataset");
    RngStream rng(cfg.seed, "train-stage2");
    auto mask = stage_trainable(bundle, 2);
    AdamW<T> opt;
    opt.lr = cfg.lr;
    std::vector<T> losses;
    for (int it = 0; it < cfg.iterations; ++it) {
        const auto& pair = data[it % data.size()];
        bundle.store.zero_grads();
        auto loss = detail::backward_v_loss(bundle, pair.hq, pair.lq, sched, rng);
        detail::check_finite(loss, 2, it);
        backward(loss);
        opt.step(mask);
        losses.push_back(loss->value[0]);
    }
    bundle.stage = "stage2";
    return losses;
}

// Stage 3: decode adapters + discriminator on detached sampled latents, with
// L2 + alpha * perceptual + beta * hinge GAN. The discriminator runs at twice
// the generator-side learning rate.
template <typename T>
std::vector<T> train_stage3(const std::vector<TrainPair<T>>& data, ModelBundle<T>& bundle,
                            const StageConfig<T>& cfg, const NoiseSchedule<T>& sched) {
    (void)sched;  // stage 3 samples on its own short schedule
    if (data.empty()) throw std::invalid_argument("train_stage3: empty dataset");
    RngStream rng(cfg.seed, "train-stage3");
    auto full_mask = stage_trainable(bundle, 3);
    std::map<std::string, Var<T>> lora_mask, disc_mask;
    for (auto& [name, p] : full_mask)
        (detail::starts_with(name, "disc.") ? disc_mask : lora_mask).emplace(name, p);
    AdamW<T> opt_g, opt_d;
    opt_g.lr = cfg.lr;
    opt_d.lr = T(2) * cfg.lr;
    std::vector<T> losses;
    int pinned_window = 0;
    bool warned = false;
    for (int it = 0; it < cfg.iterations; ++it) {
        const auto& pair = data[it % data.size()];
        auto z_pred = detail::sample_latents_detached(bundle, pair.hq, pair.lq, cfg.sample_steps,
                                                      derive_seed(cfg.seed, "s3-" + std::to_string(it)));
        // generator side: decoder adapters
        bundle.store.zero_grads();
        auto recon = bundle.vae.decode(constant(z_pred), true);
        auto g_loss = add(mse_loss(recon, constant(pair.hq)),
                          add(scale(perceptual_loss(recon, constant(pair.hq)), cfg.alpha),
                              scale(hinge_g_loss(bundle.disc.forward(recon)), cfg.beta)));
        detail::check_finite(g_loss, 3, it);
        backward(g_loss);
        opt_g.step(lora_mask);
        losses.push_back(g_loss->value[0]);

        // discriminator side on detached images
        bundle.store.zero_grads();
        auto real_scores = bundle.disc.forward(constant(pair.hq));
        auto fake_scores = bundle.disc.forward(constant(recon->value));
        auto d_loss = hinge_d_loss(real_scores, fake_scores);
        detail::check_finite(d_loss, 3, it);
        backward(d_loss);
        opt_d.step(disc_mask);

        // collapse guard: alarm if accuracy sits at chance for a long window
        int64_t correct = 0, total = 0;
        for (int64_t i = 0; i < real_scores->value.size(); ++i, ++total)
            if (real_scores->value[i] > T(0)) ++correct;
        for (int64_t i = 0; i < fake_scores->value.size(); ++i, ++total)
            if (fake_scores->value[i] <= T(0)) ++correct;
        double acc = static_cast<double>(correct) / static_cast<double>(total);
        pinned_window = (acc > 0.45 && acc < 0.55) ? pinned_window + 1 : 0;
        if (pinned_window >= 10 && !warned) {
            std::fprintf(stderr,
                         "warning: stage 3 discriminator accuracy pinned near 0.5 for %d "
                         "iterations\n",
                         pinned_window);
            warned = true;
        }
    }
    bundle.stage = "stage3";
    return losses;
}

}  // namespace tinyvsr
