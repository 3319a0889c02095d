#pragma once

// Miniature image-to-video denoiser with temporal self-attention as the only
// cross-frame operator, a weight-cloned video ControlNet with zero-initialized
// output projections, a small reference encoder, a VAE with a low-rank decoder
// adapter, and a patch discriminator. Parameters live in one named store so
// stage masks and checkpoints address them uniformly.

#include <cstdio>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tinyvsr/nn.hpp"

namespace tinyvsr {

struct ModelConfig {
    int frames = 14;            // nominal clip length k
    int latent_channels = 4;
    int base_width = 16;        // VAE / embedding conv width
    int num_heads = 2;
    int vae_factor = 4;         // spatial downscale f (power of two)
    int ref_embed_dim = 16;
    int adapter_rank = 4;
    int temb_dim = 32;
    std::vector<int> resolutions{16, 24};  // UNet channel width per level

    int levels() const { return static_cast<int>(resolutions.size()); }
    int down_steps() const {
        int f = vae_factor, n = 0;
        while (f > 1) {
            if (f % 2 != 0) throw std::invalid_argument("vae_factor must be a power of two");
            f /= 2;
            ++n;
        }
        return n;
    }
    void validate() const {
        if (frames < 2) throw std::invalid_argument("config: frames must be >= 2");
        if (resolutions.empty()) throw std::invalid_argument("config: resolutions empty");
        for (int w : resolutions)
            if (w < num_heads || w % num_heads != 0)
                throw std::invalid_argument("config: widths must be multiples of num_heads");
        (void)down_steps();
    }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"frames", c.frames},
         {"latent_channels", c.latent_channels},
         {"base_width", c.base_width},
         {"num_heads", c.num_heads},
         {"vae_factor", c.vae_factor},
         {"ref_embed_dim", c.ref_embed_dim},
         {"adapter_rank", c.adapter_rank},
         {"temb_dim", c.temb_dim},
         {"resolutions", c.resolutions}};
}
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.frames = j.value("frames", c.frames);
    c.latent_channels = j.value("latent_channels", c.latent_channels);
    c.base_width = j.value("base_width", c.base_width);
    c.num_heads = j.value("num_heads", c.num_heads);
    c.vae_factor = j.value("vae_factor", c.vae_factor);
    c.ref_embed_dim = j.value("ref_embed_dim", c.ref_embed_dim);
    c.adapter_rank = j.value("adapter_rank", c.adapter_rank);
    c.temb_dim = j.value("temb_dim", c.temb_dim);
    if (j.contains("resolutions")) c.resolutions = j.at("resolutions").get<std::vector<int>>();
}

// ---------------------------------------------------------------------------
// Encoder trunk shared (structurally) by the denoiser and the ControlNet.
// ---------------------------------------------------------------------------

template <typename T>
struct UnetEncoder {
    std::vector<ResBlock<T>> res;
    std::vector<TemporalBlock<T>> tattn;
    std::vector<CrossBlock<T>> xattn;
    std::vector<Conv2d<T>> down;  // down[i] maps level i -> i+1

    UnetEncoder() = default;
    UnetEncoder(ParamStore<T>& ps, const std::string& prefix, const ModelConfig& cfg, bool dual_vo,
                RngStream& rng) {
        int L = cfg.levels();
        for (int i = 0; i < L; ++i) {
            std::string p = prefix + ".enc" + std::to_string(i);
            int w = cfg.resolutions[i];
            res.emplace_back(ps, p + ".res", w, w, cfg.temb_dim, rng);
            tattn.emplace_back(ps, p + ".tattn", w, cfg.num_heads, dual_vo, rng);
            xattn.emplace_back(ps, p + ".xattn", w, cfg.ref_embed_dim, cfg.num_heads, rng);
            if (i + 1 < L)
                down.emplace_back(ps, prefix + ".down" + std::to_string(i), w,
                                  cfg.resolutions[i + 1], 3, 2, rng);
        }
    }

    // h: output of the input merge at level-0 width. Returns per-level features.
    std::vector<Var<T>> run(Var<T> h, const Var<T>& temb, const Var<T>& ref_embed, AttnCtx<T>& ctx,
                            DenoiserRole role) const {
        std::vector<Var<T>> skips;
        for (size_t i = 0; i < res.size(); ++i) {
            if (i > 0) h = down[i - 1](h);
            h = res[i](h, temb);
            h = tattn[i](h, ctx, role);
            h = xattn[i](h, ref_embed);
            skips.push_back(h);
        }
        return skips;
    }
};

// ---------------------------------------------------------------------------

template <typename T>
struct VideoDenoiser {
    ModelConfig cfg;
    Linear<T> temb_l1, temb_l2;
    Conv2d<T> in_conv;
    UnetEncoder<T> encoder;
    ResBlock<T> mid_res;
    TemporalBlock<T> mid_tattn;
    std::vector<ResBlock<T>> dec_res;         // indexed by level
    std::vector<TemporalBlock<T>> dec_tattn;
    std::vector<CrossBlock<T>> dec_xattn;
    std::vector<Conv2d<T>> up;                // up[i] maps level i+1 -> i
    ChannelNorm<T> out_norm;
    Conv2d<T> out_conv;

    VideoDenoiser() = default;
    VideoDenoiser(ParamStore<T>& ps, const ModelConfig& c, RngStream& rng)
        : cfg(c),
          temb_l1(ps, "unet.temb.l1", 16, c.temb_dim, rng),
          temb_l2(ps, "unet.temb.l2", c.temb_dim, c.temb_dim, rng),
          in_conv(ps, "unet.in_conv", 2 * c.latent_channels, c.resolutions[0], 3, 1, rng),
          encoder(ps, "unet", c, /*dual_vo=*/true, rng),
          mid_res(ps, "unet.mid.res", c.resolutions.back(), c.resolutions.back(), c.temb_dim, rng),
          mid_tattn(ps, "unet.mid.tattn", c.resolutions.back(), c.num_heads, true, rng),
          out_norm(ps, "unet.out.norm", c.resolutions[0]),
          out_conv(ps, "unet.out.conv", c.resolutions[0], c.latent_channels, 3, 1, rng) {
        int L = cfg.levels();
        for (int i = 0; i < L; ++i) {
            std::string p = "unet.dec" + std::to_string(i);
            int w = cfg.resolutions[i];
            dec_res.emplace_back(ps, p + ".res", 2 * w, w, cfg.temb_dim, rng);
            dec_tattn.emplace_back(ps, p + ".tattn", w, cfg.num_heads, true, rng);
            dec_xattn.emplace_back(ps, p + ".xattn", w, cfg.ref_embed_dim, cfg.num_heads, rng);
            if (i + 1 < L)
                up.emplace_back(ps, "unet.up" + std::to_string(i), cfg.resolutions[i + 1], w, 3, 1,
                                rng);
        }
    }

    Var<T> time_embed(T t_value) const {
        auto f = constant(timestep_features<T>(t_value, 16));
        return temb_l2(silu(temb_l1(f)));
    }

    // z_in: [k, 2*latent_channels, H, W] (noisy latent ++ repeated reference latent)
    Var<T> forward(const Var<T>& z_in, T t_value, const Var<T>& ref_embed,
                   const std::vector<Var<T>>* control_residuals, AttnCtx<T>& ctx,
                   DenoiserRole role) const {
        auto temb = time_embed(t_value);
        auto h = in_conv(z_in);
        auto skips = encoder.run(h, temb, ref_embed, ctx, role);
        if (control_residuals && control_residuals->size() != skips.size())
            throw std::invalid_argument("denoiser: control residual count mismatch");
        h = mid_res(skips.back(), temb);
        h = mid_tattn(h, ctx, role);
        for (int i = cfg.levels() - 1; i >= 0; --i) {
            auto s = skips[i];
            if (control_residuals) s = add(s, (*control_residuals)[i]);
            h = dec_res[i](concat_channels(h, s), temb);
            h = dec_tattn[i](h, ctx, role);
            h = dec_xattn[i](h, ref_embed);
            if (i > 0) h = up[i - 1](upsample_nearest2x(h));
        }
        return out_conv(silu(out_norm(h)));
    }
};

// ---------------------------------------------------------------------------

template <typename T>
struct VideoControlNet {
    ModelConfig cfg;
    Linear<T> temb_l1, temb_l2;
    Conv2d<T> in_conv;
    std::vector<Conv2d<T>> vemb;  // pixel-space video embedding, stride-2 chain to latent res
    UnetEncoder<T> encoder;
    std::vector<Conv2d<T>> zero_proj;  // zero-initialized 1x1 per level

    VideoControlNet() = default;
    VideoControlNet(ParamStore<T>& ps, const ModelConfig& c, const ParamStore<T>& donor,
                    RngStream& rng)
        : cfg(c),
          temb_l1(ps, "ctrl.temb.l1", 16, c.temb_dim, rng),
          temb_l2(ps, "ctrl.temb.l2", c.temb_dim, c.temb_dim, rng),
          in_conv(ps, "ctrl.in_conv", 2 * c.latent_channels, c.resolutions[0], 3, 1, rng),
          encoder(ps, "ctrl", c, /*dual_vo=*/false, rng) {
        int w = c.base_width;
        int steps = c.down_steps();
        int cin = 3;
        for (int s = 0; s < steps; ++s) {
            int cout = (s + 1 == steps) ? c.resolutions[0] : w;
            vemb.emplace_back(ps, "ctrl.vemb" + std::to_string(s), cin, cout, 3, 2, rng);
            cin = cout;
        }
        if (steps == 0) vemb.emplace_back(ps, "ctrl.vemb0", 3, c.resolutions[0], 3, 1, rng);
        for (int i = 0; i < c.levels(); ++i)
            zero_proj.emplace_back(ps, "ctrl.zero" + std::to_string(i), c.resolutions[i],
                                   c.resolutions[i], 1, 1, rng, /*zero_init=*/true);
        clone_from(ps, donor);
    }

    // Copy encoder / input / time-embedding weights from the denoiser at
    // construction, so the ControlNet starts as an exact structural clone.
    void clone_from(ParamStore<T>& ps, const ParamStore<T>& donor) {
        for (auto& [name, p] : ps.params) {
            if (name.rfind("ctrl.", 0) != 0) continue;
            std::string suffix = name.substr(5);
            if (suffix.rfind("vemb", 0) == 0 || suffix.rfind("zero", 0) == 0) continue;
            auto it = donor.params.find("unet." + suffix);
            if (it != donor.params.end()) p->value = it->second->value;
        }
    }

    Var<T> time_embed(T t_value) const {
        auto f = constant(timestep_features<T>(t_value, 16));
        return temb_l2(silu(temb_l1(f)));
    }

    // lq_clip: [k,3,Hp,Wp] pixels at target resolution; z_in as for the denoiser.
    std::vector<Var<T>> forward(const Var<T>& z_in, const Var<T>& lq_clip, T t_value,
                                const Var<T>& ref_embed, AttnCtx<T>& ctx) const {
        if (lq_clip->value.dim(0) != z_in->value.dim(0))
            throw std::invalid_argument("controlnet: frame count mismatch");
        auto temb = time_embed(t_value);
        auto v = lq_clip;
        for (size_t s = 0; s < vemb.size(); ++s) {
            v = vemb[s](v);
            if (s + 1 < vemb.size()) v = silu(v);
        }
        auto h = add(in_conv(z_in), v);
        auto skips = encoder.run(h, temb, ref_embed, ctx, DenoiserRole::Forward);
        std::vector<Var<T>> residuals;
        for (int i = 0; i < cfg.levels(); ++i) residuals.push_back(zero_proj[i](skips[i]));
        return residuals;
    }
};

// ---------------------------------------------------------------------------

template <typename T>
struct RefEncoder {
    Conv2d<T> c1, c2, c3;
    Linear<T> fc;

    RefEncoder() = default;
    RefEncoder(ParamStore<T>& ps, const ModelConfig& cfg, RngStream& rng)
        : c1(ps, "refenc.c1", 3, cfg.base_width, 3, 2, rng),
          c2(ps, "refenc.c2", cfg.base_width, 2 * cfg.base_width, 3, 2, rng),
          c3(ps, "refenc.c3", 2 * cfg.base_width, 2 * cfg.base_width, 3, 2, rng),
          fc(ps, "refenc.fc", 2 * cfg.base_width, cfg.ref_embed_dim, rng) {}

    // img: [1,3,Hp,Wp] -> [1, ref_embed_dim]
    Var<T> forward(const Var<T>& img) const {
        return fc(spatial_mean(silu(c3(silu(c2(silu(c1(img))))))));
    }
};

// ---------------------------------------------------------------------------

template <typename T>
struct Vae {
    ModelConfig cfg;
    std::vector<Conv2d<T>> enc_down;
    Conv2d<T> enc_out;
    LoraConv2d<T> dec_in;
    std::vector<LoraConv2d<T>> dec_up;
    LoraConv2d<T> dec_out;

    Vae() = default;
    Vae(ParamStore<T>& ps, const ModelConfig& c, RngStream& rng) : cfg(c) {
        int steps = c.down_steps();
        int w = c.base_width;
        int cin = 3;
        for (int s = 0; s < steps; ++s) {
            int cout = (s == 0) ? w : 2 * w;
            enc_down.emplace_back(ps, "vae.enc" + std::to_string(s), cin, cout, 3, 2, rng);
            cin = cout;
        }
        enc_out = Conv2d<T>(ps, "vae.enc_out", cin, c.latent_channels, 3, 1, rng);
        dec_in = LoraConv2d<T>(ps, "vae.dec_in", c.latent_channels, 2 * w, 3, c.adapter_rank, rng);
        int dcin = 2 * w;
        for (int s = 0; s < steps; ++s) {
            int dcout = w;
            dec_up.emplace_back(ps, "vae.dec_up" + std::to_string(s), dcin, dcout, 3,
                                c.adapter_rank, rng);
            dcin = dcout;
        }
        dec_out = LoraConv2d<T>(ps, "vae.dec_out", dcin, 3, 3, c.adapter_rank, rng);
    }

    // frames: [N,3,Hp,Wp] -> [N,latent_channels,Hp/f,Wp/f], bounded by tanh
    Var<T> encode(const Var<T>& frames) const {
        const auto& s = frames->value.shape();
        if (s[2] % cfg.vae_factor != 0 || s[3] % cfg.vae_factor != 0)
            throw std::invalid_argument("vae encode: dims not divisible by the spatial factor");
        auto h = frames;
        for (const auto& c : enc_down) h = silu(c(h));
        return tanh_op(enc_out(h));
    }

    Var<T> decode(const Var<T>& z, bool adapter_on) const {
        auto h = silu(dec_in(z, adapter_on));
        for (const auto& c : dec_up) h = silu(c(upsample_nearest2x(h), adapter_on));
        return sigmoid(dec_out(h, adapter_on));
    }
};

// ---------------------------------------------------------------------------

template <typename T>
struct Discriminator {
    Conv2d<T> c1, c2, c3;

    Discriminator() = default;
    Discriminator(ParamStore<T>& ps, const ModelConfig& cfg, RngStream& rng)
        : c1(ps, "disc.c1", 3, cfg.base_width, 3, 2, rng),
          c2(ps, "disc.c2", cfg.base_width, 2 * cfg.base_width, 3, 2, rng),
          c3(ps, "disc.c3", 2 * cfg.base_width, 1, 3, 1, rng) {}

    // [N,3,Hp,Wp] -> patch scores [N,1,h,w]
    Var<T> forward(const Var<T>& frames) const { return c3(silu(c2(silu(c1(frames))))); }
};

// ---------------------------------------------------------------------------
// Bundle + checkpoint container
// ---------------------------------------------------------------------------

template <typename T>
struct ModelBundle {
    ModelConfig cfg;
    uint64_t seed = 0;
    std::string stage = "init";  // provenance of the latest training stage
    ParamStore<T> store;
    VideoDenoiser<T> unet;
    VideoControlNet<T> ctrl;
    RefEncoder<T> refenc;
    Vae<T> vae;
    Discriminator<T> disc;

    ModelBundle(const ModelConfig& c, uint64_t seed_)
        : cfg((c.validate(), c)), seed(seed_) {
        RngStream rng(seed_, "model-init");
        unet = VideoDenoiser<T>(store, cfg, rng);
        ctrl = VideoControlNet<T>(store, cfg, store, rng);
        refenc = RefEncoder<T>(store, cfg, rng);
        vae = Vae<T>(store, cfg, rng);
        disc = Discriminator<T>(store, cfg, rng);
    }

    // Ordered temporal-attention site names for one full ControlNet+denoiser pass.
    std::vector<std::string> site_manifest() const {
        std::vector<std::string> names;
        int L = cfg.levels();
        for (int i = 0; i < L; ++i) names.push_back("ctrl.enc" + std::to_string(i) + ".tattn");
        for (int i = 0; i < L; ++i) names.push_back("unet.enc" + std::to_string(i) + ".tattn");
        names.push_back("unet.mid.tattn");
        for (int i = L - 1; i >= 0; --i) names.push_back("unet.dec" + std::to_string(i) + ".tattn");
        return names;
    }

    // --- value-level convenience wrappers (inference paths) ---

    Tensor<T> vae_encode(const Tensor<T>& frames) const {
        NoGradGuard ng;
        return vae.encode(constant(frames))->value;
    }
    Tensor<T> vae_decode(const Tensor<T>& z, bool adapter_on) const {
        NoGradGuard ng;
        return vae.decode(constant(z), adapter_on)->value;
    }
    // Single HQ frame [1,3,Hp,Wp] -> (embedding [1,ref_dim], latent [1,cz,H,W])
    std::pair<Tensor<T>, Tensor<T>> encode_reference(const Tensor<T>& image) const {
        NoGradGuard ng;
        auto emb = refenc.forward(constant(image))->value;
        auto lat = vae.encode(constant(image))->value;
        return {std::move(emb), std::move(lat)};
    }

    void save(const std::string& path) const;
    static ModelBundle load(const std::string& path);
};

// Checkpoint container: magic, manifest JSON, then name-sorted raw tensors.
// save -> load -> save reproduces identical bytes.
namespace ckpt {
constexpr char kMagic[8] = {'T', 'V', 'S', 'R', 'C', 'K', 'P', '1'};

template <typename U>
void write_pod(std::ostream& os, const U& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}
template <typename U>
U read_pod(std::istream& is) {
    U v;
    is.read(reinterpret_cast<char*>(&v), sizeof(U));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}
}  // namespace ckpt

template <typename T>
void ModelBundle<T>::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    os.write(ckpt::kMagic, 8);
    nlohmann::json manifest = {{"config", cfg},
                               {"seed", seed},
                               {"stage", stage},
                               {"scalar_bytes", static_cast<int>(sizeof(T))}};
    std::string ms = manifest.dump();
    ckpt::write_pod<uint64_t>(os, ms.size());
    os.write(ms.data(), static_cast<std::streamsize>(ms.size()));
    ckpt::write_pod<uint64_t>(os, store.params.size());
    for (const auto& [name, p] : store.params) {  // std::map: name-sorted
        ckpt::write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        ckpt::write_pod<uint32_t>(os, static_cast<uint32_t>(p->value.ndim()));
        for (int d = 0; d < p->value.ndim(); ++d) ckpt::write_pod<uint64_t>(os, p->value.dim(d));
        os.write(reinterpret_cast<const char*>(p->value.data()),
                 static_cast<std::streamsize>(p->value.size() * sizeof(T)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

template <typename T>
ModelBundle<T> ModelBundle<T>::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, ckpt::kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    auto mlen = ckpt::read_pod<uint64_t>(is);
    std::string ms(mlen, '\0');
    is.read(ms.data(), static_cast<std::streamsize>(mlen));
    auto manifest = nlohmann::json::parse(ms);
    if (manifest.value("scalar_bytes", 0) != static_cast<int>(sizeof(T)))
        throw std::runtime_error("checkpoint: scalar width mismatch");
    ModelConfig c = manifest.at("config").get<ModelConfig>();
    ModelBundle bundle(c, manifest.value("seed", uint64_t(0)));
    bundle.stage = manifest.value("stage", "init");
    auto count = ckpt::read_pod<uint64_t>(is);
    for (uint64_t i = 0; i < count; ++i) {
        auto nlen = ckpt::read_pod<uint32_t>(is);
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        auto nd = ckpt::read_pod<uint32_t>(is);
        std::vector<int> shape(nd);
        for (auto& d : shape) d = static_cast<int>(ckpt::read_pod<uint64_t>(is));
        auto it = bundle.store.params.find(name);
        if (it == bundle.store.params.end())
            throw std::runtime_error("checkpoint: unknown parameter " + name);
        if (it->second->value.shape() != shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        is.read(reinterpret_cast<char*>(it->second->value.data()),
                static_cast<std::streamsize>(it->second->value.size() * sizeof(T)));
    }
    if (!is) throw std::runtime_error("checkpoint: truncated tensor data in " + path);
    return bundle;
}

}  // namespace tinyvsr
