#pragma once

// Layer building blocks on top of the autodiff tape, with a named parameter
// registry so stage-wise trainability masks and checkpoints can address
// every tensor by name.

#include <map>

#include "tinyvsr/attention.hpp"
#include "tinyvsr/autodiff.hpp"

namespace tinyvsr {

template <typename T>
struct ParamStore {
    std::map<std::string, Var<T>> params;  // ordered: checkpoint layout is name-sorted

    Var<T> add(const std::string& name, Tensor<T> init) {
        auto v = make_param(std::move(init));
        if (!params.emplace(name, v).second)
            throw std::logic_error("duplicate parameter name: " + name);
        return v;
    }
    const Var<T>& at(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw std::out_of_range("no parameter named " + name);
        return it->second;
    }
    void zero_grads() {
        for (auto& [n, p] : params)
            if (!p->grad.empty()) p->grad.fill(T(0));
    }
};

template <typename T>
Tensor<T> he_init(std::vector<int> shape, int fan_in, RngStream& rng) {
    return randn<T>(std::move(shape), rng, std::sqrt(T(2) / static_cast<T>(fan_in)));
}

// ---------------------------------------------------------------------------

template <typename T>
struct Conv2d {
    Var<T> w, b;
    int stride = 1, pad = 1;

    Conv2d() = default;
    Conv2d(ParamStore<T>& ps, const std::string& prefix, int cin, int cout, int ksize, int stride_,
           RngStream& rng, bool zero_init = false)
        : stride(stride_), pad(ksize / 2) {
        Tensor<T> wt = zero_init ? Tensor<T>::zeros({cout, cin, ksize, ksize})
                                 : he_init<T>({cout, cin, ksize, ksize}, cin * ksize * ksize, rng);
        w = ps.add(prefix + ".w", std::move(wt));
        b = ps.add(prefix + ".b", Tensor<T>::zeros({cout}));
    }
    Var<T> operator()(const Var<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

// Conv with an optional low-rank additive adapter on the weight:
//   W_eff = W + B A, B zero-initialized so the adapter starts as a no-op.
template <typename T>
struct LoraConv2d {
    Var<T> w, b, la, lb;
    int rank = 0, cout = 0, cin = 0, ksize = 0;
    int stride = 1, pad = 1;

    LoraConv2d() = default;
    LoraConv2d(ParamStore<T>& ps, const std::string& prefix, int cin_, int cout_, int ksize_,
               int rank_, RngStream& rng)
        : rank(rank_), cout(cout_), cin(cin_), ksize(ksize_), pad(ksize_ / 2) {
        w = ps.add(prefix + ".w", he_init<T>({cout, cin, ksize, ksize}, cin * ksize * ksize, rng));
        b = ps.add(prefix + ".b", Tensor<T>::zeros({cout}));
        if (rank > 0) {
            la = ps.add(prefix + ".lora.a",
                        randn<T>({rank, cin * ksize * ksize}, rng, T(0.02)));
            lb = ps.add(prefix + ".lora.b", Tensor<T>::zeros({cout, rank}));
        }
    }
    Var<T> operator()(const Var<T>& x, bool adapter_on) const {
        if (adapter_on && rank > 0) {
            auto delta = reshape(matmul2d(lb, la), {cout, cin, ksize, ksize});
            return conv2d(x, add(w, delta), b, stride, pad);
        }
        return conv2d(x, w, b, stride, pad);
    }
};

template <typename T>
struct Linear {
    Var<T> w, b;
    Linear() = default;
    Linear(ParamStore<T>& ps, const std::string& prefix, int din, int dout, RngStream& rng)
        : w(ps.add(prefix + ".w", he_init<T>({dout, din}, din, rng))),
          b(ps.add(prefix + ".b", Tensor<T>::zeros({dout}))) {}
    Var<T> operator()(const Var<T>& x) const { return linear(x, w, b); }
};

template <typename T>
struct ChannelNorm {
    Var<T> g, b;
    ChannelNorm() = default;
    ChannelNorm(ParamStore<T>& ps, const std::string& prefix, int c)
        : g(ps.add(prefix + ".g", Tensor<T>::full({c}, T(1)))),
          b(ps.add(prefix + ".b", Tensor<T>::zeros({c}))) {}
    Var<T> operator()(const Var<T>& x) const { return channel_layernorm(x, g, b); }
};

// Per-frame residual conv block with a time-embedding channel bias.
template <typename T>
struct ResBlock {
    ChannelNorm<T> norm1, norm2;
    Conv2d<T> conv1, conv2;
    Linear<T> temb_proj;
    Conv2d<T> skip;
    bool has_skip = false;

    ResBlock() = default;
    ResBlock(ParamStore<T>& ps, const std::string& prefix, int cin, int cout, int temb_dim,
             RngStream& rng)
        : norm1(ps, prefix + ".norm1", cin),
          norm2(ps, prefix + ".norm2", cout),
          conv1(ps, prefix + ".conv1", cin, cout, 3, 1, rng),
          conv2(ps, prefix + ".conv2", cout, cout, 3, 1, rng),
          temb_proj(ps, prefix + ".temb", temb_dim, cout, rng) {
        if (cin != cout) {
            skip = Conv2d<T>(ps, prefix + ".skip", cin, cout, 1, 1, rng);
            has_skip = true;
        }
    }

    // temb: [1, temb_dim]
    Var<T> operator()(const Var<T>& x, const Var<T>& temb) const {
        auto h = conv1(silu(norm1(x)));
        auto bias = reshape(temb_proj(temb), {h->value.dim(1)});
        h = add_channel_bias(h, bias);
        h = conv2(silu(norm2(h)));
        return add(h, has_skip ? skip(x) : x);
    }
};

enum class DenoiserRole { Forward, Backward };

// Temporal self-attention block. When `dual_vo` is set the block carries a
// second value/output projection pair used in the backward sampling role;
// those start as exact copies of the forward pair.
template <typename T>
struct TemporalBlock {
    ChannelNorm<T> norm;
    Var<T> wq, wk, wv, wo;
    Var<T> wv_b, wo_b;
    int heads = 1;
    bool dual_vo = false;
    std::string site_name;

    TemporalBlock() = default;
    TemporalBlock(ParamStore<T>& ps, const std::string& prefix, int c, int heads_, bool dual,
                  RngStream& rng)
        : norm(ps, prefix + ".norm", c), heads(heads_), dual_vo(dual), site_name(prefix) {
        T s = std::sqrt(T(1) / static_cast<T>(c));
        wq = ps.add(prefix + ".wq", randn<T>({c, c}, rng, s));
        wk = ps.add(prefix + ".wk", randn<T>({c, c}, rng, s));
        wv = ps.add(prefix + ".wv", randn<T>({c, c}, rng, s));
        wo = ps.add(prefix + ".wo", randn<T>({c, c}, rng, s));
        if (dual) {
            wv_b = ps.add(prefix + ".wv_b", wv->value);
            wo_b = ps.add(prefix + ".wo_b", wo->value);
        }
    }

    Var<T> operator()(const Var<T>& x, AttnCtx<T>& ctx, DenoiserRole role) const {
        bool bwd = dual_vo && role == DenoiserRole::Backward;
        auto a = temporal_attention(norm(x), wq, wk, bwd ? wv_b : wv, bwd ? wo_b : wo, heads, ctx,
                                    site_name);
        return add(x, a);
    }
};

// Reference cross-attention: the conditioning vector is projected to a few
// tokens which every (frame, position) query attends over.
template <typename T>
struct CrossBlock {
    static constexpr int kTokens = 4;
    ChannelNorm<T> norm;
    Linear<T> tok_proj;
    Var<T> wq, wk, wv, wo;
    int heads = 1, channels = 0;

    CrossBlock() = default;
    CrossBlock(ParamStore<T>& ps, const std::string& prefix, int c, int ref_dim, int heads_,
               RngStream& rng)
        : norm(ps, prefix + ".norm", c),
          tok_proj(ps, prefix + ".tok", ref_dim, kTokens * c, rng),
          heads(heads_),
          channels(c) {
        T s = std::sqrt(T(1) / static_cast<T>(c));
        wq = ps.add(prefix + ".wq", randn<T>({c, c}, rng, s));
        wk = ps.add(prefix + ".wk", randn<T>({c, c}, rng, s));
        wv = ps.add(prefix + ".wv", randn<T>({c, c}, rng, s));
        wo = ps.add(prefix + ".wo", randn<T>({c, c}, rng, s));
    }

    // ref_embed: [1, ref_dim]
    Var<T> operator()(const Var<T>& x, const Var<T>& ref_embed) const {
        auto tokens = reshape(tok_proj(ref_embed), {kTokens, channels});
        return add(x, cross_attention(norm(x), tokens, wq, wk, wv, wo, heads));
    }
};

// Sinusoidal features of a scalar timestep value in [0,1].
template <typename T>
Tensor<T> timestep_features(T t_value, int dim) {
    Tensor<T> f({1, dim});
    for (int i = 0; i < dim / 2; ++i) {
        T freq = std::pow(T(2), static_cast<T>(i)) * static_cast<T>(M_PI);
        f.at(0, 2 * i) = std::sin(freq * t_value);
        f.at(0, 2 * i + 1) = std::cos(freq * t_value);
    }
    return f;
}

}  // namespace tinyvsr
