#pragma once

// Motion-aligned bidirectional sampling. Each step runs a forward pass that
// captures the temporal attention maps, then a backward pass on reversed
// frames that injects the maps rotated by 180 degrees and uses the backward
// value/output projections; the two v predictions are averaged. The latent
// trajectory starts from the noised low-quality input rather than pure noise.

#include "tinyvsr/frames.hpp"
#include "tinyvsr/model.hpp"
#include "tinyvsr/schedule.hpp"
#include "tinyvsr/tiling.hpp"

namespace tinyvsr {

struct SamplerOptions {
    int steps = 30;             // schedule length T
    double sdedit_strength = 0.6;
    bool bidirectional = true;
    int tile = 0;               // latent tile edge; 0 or >= latent size disables tiling
    int tile_overlap = -1;      // latent units; negative picks 25% of the tile edge
    bool adapter_on = true;     // decode with the fine-tuned low-rank adapters
    uint64_t seed = 0;
};

// Rotate every k-by-k attention map by 180 degrees:
// out[i][j] = in[k-1-i][k-1-j]. Row sums are permuted, not changed.
template <typename T>
AttentionRecord<T> rotate_attention(const AttentionRecord<T>& rec) {
    validate_record(rec);
    AttentionRecord<T> out = rec;
    for (size_t s = 0; s < rec.sites.size(); ++s) {
        const auto& in = rec.sites[s];
        auto& dst = out.sites[s];
        int k = in.k;
        for (int p = 0; p < in.positions; ++p)
            for (int h = 0; h < in.heads; ++h) {
                const T* a = in.a.data() + in.mat_offset(p, h);
                T* b = dst.a.data() + dst.mat_offset(p, h);
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) b[i * k + j] = a[(k - 1 - i) * k + (k - 1 - j)];
            }
    }
    return out;
}

// Conditioning derived from one high-quality frame: the global embedding fed
// to cross-attention and the latent concatenated to every frame.
template <typename T>
struct RefCond {
    Tensor<T> embed;   // [1, ref_dim]
    Tensor<T> latent;  // [1, cz, H, W]
};

template <typename T>
RefCond<T> make_ref_cond(const Tensor<T>& image, const ModelBundle<T>& bundle) {
    auto [emb, lat] = bundle.encode_reference(image);
    return {std::move(emb), std::move(lat)};
}

// Forward v prediction with attention capture. cond_clip is the upsampled
// low-quality clip in pixels, at f times the latent resolution of z_t.
template <typename T>
std::pair<Tensor<T>, AttentionRecord<T>> forward_core(const Tensor<T>& z_t, int t,
                                                      const RefCond<T>& ref,
                                                      const Tensor<T>& cond_clip,
                                                      const ModelBundle<T>& bundle,
                                                      const NoiseSchedule<T>& sched) {
    NoGradGuard ng;
    sched.check_step(t);
    int k = z_t.dim(0);
    auto z_in = constant(concat_channels_value(z_t, repeat_frame(ref.latent, k)));
    auto emb = constant(ref.embed);
    auto cond = constant(cond_clip);
    T tv = sched.timestep_embed_values[t];
    AttentionRecord<T> rec;
    auto ctx = AttnCtx<T>::capture(rec);
    auto residuals = bundle.ctrl.forward(z_in, cond, tv, emb, ctx);
    auto v = bundle.unet.forward(z_in, tv, emb, &residuals, ctx, DenoiserRole::Forward);
    return {v->value, std::move(rec)};
}

// Backward v prediction: reversed frames, rotated attention injected at every
// temporal site, backward value/output projections, end-frame conditioning.
// The returned prediction is in the reversed frame order.
template <typename T>
Tensor<T> backward_core(const Tensor<T>& z_t, int t, const RefCond<T>& ref_end,
                        const Tensor<T>& cond_clip, const AttentionRecord<T>& fwd_record,
                        const ModelBundle<T>& bundle, const NoiseSchedule<T>& sched) {
    NoGradGuard ng;
    sched.check_step(t);
    int k = z_t.dim(0);
    auto rotated = rotate_attention(fwd_record);
    auto z_in = constant(
        concat_channels_value(reverse_frames(z_t), repeat_frame(ref_end.latent, k)));
    auto emb = constant(ref_end.embed);
    auto cond = constant(reverse_frames(cond_clip));
    T tv = sched.timestep_embed_values[t];
    auto ctx = AttnCtx<T>::inject(rotated);
    auto residuals = bundle.ctrl.forward(z_in, cond, tv, emb, ctx);
    auto v = bundle.unet.forward(z_in, tv, emb, &residuals, ctx, DenoiserRole::Backward);
    if (ctx.cursor != rotated.sites.size())
        throw std::runtime_error("backward pass: attention record not fully consumed");
    return v->value;
}

// Convenience wrappers that encode the reference frames themselves.
template <typename T>
std::pair<Tensor<T>, AttentionRecord<T>> forward_generation(const Tensor<T>& z_t, int t,
                                                            const Tensor<T>& h_first,
                                                            const Tensor<T>& cond_clip,
                                                            const ModelBundle<T>& bundle,
                                                            const NoiseSchedule<T>& sched) {
    return forward_core(z_t, t, make_ref_cond(h_first, bundle), cond_clip, bundle, sched);
}

template <typename T>
Tensor<T> backward_generation(const Tensor<T>& z_t, int t, const Tensor<T>& h_last,
                              const Tensor<T>& cond_clip, const AttentionRecord<T>& fwd_record,
                              const ModelBundle<T>& bundle, const NoiseSchedule<T>& sched) {
    return backward_core(z_t, t, make_ref_cond(h_last, bundle), cond_clip, fwd_record, bundle,
                         sched);
}

// Average of the re-reversed backward prediction and the forward prediction.
template <typename T>
Tensor<T> blend(const Tensor<T>& p_b_rev, const Tensor<T>& p_f) {
    check_same_shape(p_b_rev, p_f, "blend");
    Tensor<T> out(p_f.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = (p_b_rev[i] + p_f[i]) * T(0.5);
    return out;
}

namespace detail {

// Shared sampling loop. lq_clip [k,3,h,w]; h_first/h_last [1,3,Hp,Wp] set the
// target resolution. With tiling, every tile crops z, the pixel condition and
// the reference latents consistently; the reference embedding stays global.
template <typename T>
Tensor<T> sample_clip(const Tensor<T>& lq_clip, const Tensor<T>& h_first, const Tensor<T>& h_last,
                      const ModelBundle<T>& bundle, const NoiseSchedule<T>& sched,
                      const SamplerOptions& opts) {
    if (lq_clip.ndim() != 4 || h_first.ndim() != 4)
        throw std::invalid_argument("sample: need [k,3,h,w] clip and [1,3,Hp,Wp] references");
    int k = lq_clip.dim(0);
    int Hp = h_first.dim(2), Wp = h_first.dim(3);
    auto up = bicubic_resize(lq_clip, Hp, Wp);
    auto ref1 = make_ref_cond(h_first, bundle);
    RefCond<T> refk;
    if (opts.bidirectional) refk = make_ref_cond(h_last, bundle);

    auto lq_latent = bundle.vae_encode(up);
    int Hl = lq_latent.dim(2), Wl = lq_latent.dim(3);
    SdeditConfig sd{opts.sdedit_strength, sched.num_steps};
    RngStream rng(opts.seed, "sampler");
    auto [z, t_start] = sdedit_start(lq_latent, sd, sched, rng);

    bool tiled = opts.tile > 0 && (opts.tile < Hl || opts.tile < Wl);
    TilePlan plan;
    int f = bundle.cfg.vae_factor;
    if (tiled) {
        int tile = std::min({opts.tile, Hl, Wl});
        int overlap = opts.tile_overlap >= 0 ? opts.tile_overlap : tile / 4;
        plan = plan_tiles(Hl, Wl, tile, tile, overlap);
    }

    for (int t = t_start; t >= 1; --t) {
        Tensor<T> p_t;
        if (!tiled) {
            auto [p_f, rec] = forward_core(z, t, ref1, up, bundle, sched);
            if (opts.bidirectional) {
                auto p_b = backward_core(z, t, refk, up, rec, bundle, sched);
                p_t = blend(reverse_frames(p_b), p_f);
            } else {
                p_t = std::move(p_f);
            }
        } else {
            auto predict_tile = [&](const TileRect& r) {
                auto zc = crop_spatial(z, r.top, r.left, r.h, r.w);
                auto upc = crop_spatial(up, r.top * f, r.left * f, r.h * f, r.w * f);
                RefCond<T> r1{ref1.embed, crop_spatial(ref1.latent, r.top, r.left, r.h, r.w)};
                auto [p_f, rec] = forward_core(zc, t, r1, upc, bundle, sched);
                if (!opts.bidirectional) return p_f;
                RefCond<T> rk{refk.embed, crop_spatial(refk.latent, r.top, r.left, r.h, r.w)};
                auto p_b = backward_core(zc, t, rk, upc, rec, bundle, sched);
                return blend(reverse_frames(p_b), p_f);
            };
            p_t = tiled_prediction<T>({k, bundle.cfg.latent_channels, Hl, Wl}, predict_tile, plan);
        }
        z = denoise_step(z, p_t, t, t - 1, sched);
    }

    if (tiled) return tiled_vae_decode(z, bundle, plan, plan.overlap * f, opts.adapter_on);
    return bundle.vae_decode(z, opts.adapter_on);
}

}  // namespace detail

template <typename T>
Tensor<T> bidirectional_sample(const Tensor<T>& lq_clip, const Tensor<T>& h_first,
                               const Tensor<T>& h_last, const ModelBundle<T>& bundle,
                               const NoiseSchedule<T>& sched, const SamplerOptions& opts) {
    return detail::sample_clip(lq_clip, h_first, h_last, bundle, sched, opts);
}

template <typename T>
Tensor<T> unidirectional_sample(const Tensor<T>& lq_clip, const Tensor<T>& h_first,
                                const ModelBundle<T>& bundle, const NoiseSchedule<T>& sched,
                                const SamplerOptions& opts) {
    SamplerOptions o = opts;
    o.bidirectional = false;
    return detail::sample_clip(lq_clip, h_first, h_first, bundle, sched, o);
}

}  // namespace tinyvsr
