#pragma once

// Fused temporal self-attention and reference cross-attention, with a
// capture/inject hook on every temporal site. Temporal attention mixes the
// frame axis at each spatial location and is the model's only cross-frame
// operator; the captured row-stochastic k-by-k maps are what the backward
// sampling pass rotates and injects.

#include <limits>

#include "tinyvsr/autodiff.hpp"

namespace tinyvsr {

enum class AttnMode { Plain, Capture, Inject };

// One denoiser (or ControlNet) pass worth of temporal attention maps,
// sites in execution order. Matrices are stored [position][head][k][k].
template <typename T>
struct AttentionRecord {
    struct Site {
        std::string name;
        int positions = 0;
        int heads = 0;
        int k = 0;
        std::vector<T> a;  // positions*heads*k*k

        int64_t mat_offset(int p, int h) const {
            return (static_cast<int64_t>(p) * heads + h) * k * k;
        }
    };
    std::vector<Site> sites;
};

template <typename T>
struct AttnCtx {
    AttnMode mode = AttnMode::Plain;
    AttentionRecord<T>* record = nullptr;
    size_t cursor = 0;  // next site to consume in Inject mode

    static AttnCtx plain() { return {}; }
    static AttnCtx capture(AttentionRecord<T>& rec) { return {AttnMode::Capture, &rec, 0}; }
    static AttnCtx inject(AttentionRecord<T>& rec) { return {AttnMode::Inject, &rec, 0}; }
};

template <typename T>
void validate_record(const AttentionRecord<T>& rec, T row_tol = T(1e-5)) {
    for (const auto& site : rec.sites) {
        for (int p = 0; p < site.positions; ++p)
            for (int h = 0; h < site.heads; ++h) {
                const T* m = site.a.data() + site.mat_offset(p, h);
                for (int i = 0; i < site.k; ++i) {
                    T row = T(0);
                    for (int j = 0; j < site.k; ++j) {
                        if (m[i * site.k + j] < T(0))
                            throw std::runtime_error("attention record: negative entry at site " + site.name);
                        row += m[i * site.k + j];
                    }
                    if (std::abs(row - T(1)) > row_tol)
                        throw std::runtime_error("attention record: row not stochastic at site " + site.name);
                }
            }
    }
}

// Temporal self-attention over [k,C,H,W]: at each spatial location the k
// frame vectors attend to each other. Weight matrices are [C,C]; the C axis
// is split into `heads` groups. Returns the attention output (no residual).
//
// Capture mode appends this site's softmax maps to ctx.record; inject mode
// consumes the next site from ctx.record and uses its maps verbatim (the
// query/key path is skipped entirely, value/output projections still apply).
template <typename T>
Var<T> temporal_attention(const Var<T>& x, const Var<T>& wq, const Var<T>& wk,
                          const Var<T>& wv, const Var<T>& wo, int heads,
                          AttnCtx<T>& ctx, const std::string& site_name) {
    const auto& xs = x->value.shape();
    if (xs.size() != 4) throw std::invalid_argument("temporal_attention: need [k,C,H,W]");
    int k = xs[0], C = xs[1], H = xs[2], W = xs[3];
    if (C % heads != 0) throw std::invalid_argument("temporal_attention: C % heads != 0");
    int Dh = C / heads;
    int P = H * W;
    if (k > 64) throw std::invalid_argument("temporal_attention: k > 64 unsupported");
    T inv_sqrt = T(1) / std::sqrt(static_cast<T>(Dh));

    const bool injecting = (ctx.mode == AttnMode::Inject);
    typename AttentionRecord<T>::Site* inj_site = nullptr;
    if (injecting) {
        if (!ctx.record || ctx.cursor >= ctx.record->sites.size())
            throw std::runtime_error("attention injection: record exhausted at site " + site_name);
        inj_site = &ctx.record->sites[ctx.cursor++];
        if (inj_site->name != site_name || inj_site->k != k || inj_site->positions != P ||
            inj_site->heads != heads)
            throw std::runtime_error("attention injection: site mismatch, expected " + site_name +
                                     ", record has " + inj_site->name);
    }

    // Gather X per position: X[p][f][c]
    auto gather = [&](const Tensor<T>& src, int p, int f, int c) -> T {
        return src.at(f, c, p / W, p % W);
    };

    // Projections. Q/K skipped when injecting.
    auto proj = std::make_shared<Tensor<T>>(Tensor<T>({P, 3, k, C}));  // [p][{q,k,v}][f][c]
    auto attn = std::make_shared<Tensor<T>>(Tensor<T>({P, heads, k, k}));
    Tensor<T> y(xs);
    Tensor<T> mixed({P, k, C});  // pre-Wo head-concatenated outputs, saved for backward

    for (int p = 0; p < P; ++p) {
        for (int f = 0; f < k; ++f)
            for (int c = 0; c < C; ++c) {
                T q = T(0), kk = T(0), vv = T(0);
                for (int c2 = 0; c2 < C; ++c2) {
                    T xv = gather(x->value, p, f, c2);
                    if (!injecting) {
                        q += wq->value.at(c, c2) * xv;
                        kk += wk->value.at(c, c2) * xv;
                    }
                    vv += wv->value.at(c, c2) * xv;
                }
                proj->at(p, 0, f, c) = q;
                proj->at(p, 1, f, c) = kk;
                proj->at(p, 2, f, c) = vv;
            }
        for (int h = 0; h < heads; ++h) {
            T* A = attn->data() + attn->idx4(p, h, 0, 0);
            if (injecting) {
                const T* src = inj_site->a.data() + inj_site->mat_offset(p, h);
                std::copy(src, src + k * k, A);
            } else {
                for (int i = 0; i < k; ++i) {
                    T mx = -std::numeric_limits<T>::infinity();
                    T s[64];
                    for (int j = 0; j < k; ++j) {
                        T dot = T(0);
                        for (int d = 0; d < Dh; ++d)
                            dot += proj->at(p, 0, i, h * Dh + d) * proj->at(p, 1, j, h * Dh + d);
                        s[j] = dot * inv_sqrt;
                        mx = std::max(mx, s[j]);
                    }
                    T denom = T(0);
                    for (int j = 0; j < k; ++j) {
                        s[j] = std::exp(s[j] - mx);
                        denom += s[j];
                    }
                    for (int j = 0; j < k; ++j) A[i * k + j] = s[j] / denom;
                }
            }
            // O_h = A V_h
            for (int i = 0; i < k; ++i)
                for (int d = 0; d < Dh; ++d) {
                    T acc = T(0);
                    for (int j = 0; j < k; ++j) acc += A[i * k + j] * proj->at(p, 2, j, h * Dh + d);
                    mixed[(static_cast<int64_t>(p) * k + i) * C + h * Dh + d] = acc;
                }
        }
        // Y = Wo O
        for (int f = 0; f < k; ++f)
            for (int c = 0; c < C; ++c) {
                T acc = T(0);
                for (int c2 = 0; c2 < C; ++c2)
                    acc += wo->value.at(c, c2) * mixed[(static_cast<int64_t>(p) * k + f) * C + c2];
                y.at(f, c, p / W, p % W) = acc;
            }
    }

    if (ctx.mode == AttnMode::Capture) {
        typename AttentionRecord<T>::Site site;
        site.name = site_name;
        site.positions = P;
        site.heads = heads;
        site.k = k;
        site.a.assign(attn->data(), attn->data() + attn->size());
        ctx.record->sites.push_back(std::move(site));
    }

    auto out = detail::make_node<T>(std::move(y), {x, wq, wk, wv, wo});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        auto mix = std::make_shared<Tensor<T>>(std::move(mixed));
        out->backward_fn = [x, wq, wk, wv, wo, o, proj, attn, mix, k, C, H, W, P, Dh, heads,
                            inv_sqrt, injecting]() {
            if (x->requires_grad) x->ensure_grad();
            if (wq->requires_grad) wq->ensure_grad();
            if (wk->requires_grad) wk->ensure_grad();
            if (wv->requires_grad) wv->ensure_grad();
            if (wo->requires_grad) wo->ensure_grad();
            std::vector<T> dO(static_cast<size_t>(k) * C);
            std::vector<T> dV(static_cast<size_t>(k) * C, T(0));
            std::vector<T> dQ(static_cast<size_t>(k) * C, T(0));
            std::vector<T> dK(static_cast<size_t>(k) * C, T(0));
            std::vector<T> dA(static_cast<size_t>(k) * k);
            for (int p = 0; p < P; ++p) {
                // dY -> dO, dWo
                for (int f = 0; f < k; ++f)
                    for (int c2 = 0; c2 < C; ++c2) {
                        T acc = T(0);
                        for (int c = 0; c < C; ++c)
                            acc += o->grad.at(f, c, p / W, p % W) * wo->value.at(c, c2);
                        dO[static_cast<size_t>(f) * C + c2] = acc;
                    }
                if (wo->requires_grad) {
                    for (int c = 0; c < C; ++c)
                        for (int c2 = 0; c2 < C; ++c2) {
                            T acc = T(0);
                            for (int f = 0; f < k; ++f)
                                acc += o->grad.at(f, c, p / W, p % W) *
                                       (*mix)[(static_cast<int64_t>(p) * k + f) * C + c2];
                            wo->grad.at(c, c2) += acc;
                        }
                }
                std::fill(dV.begin(), dV.end(), T(0));
                std::fill(dQ.begin(), dQ.end(), T(0));
                std::fill(dK.begin(), dK.end(), T(0));
                for (int h = 0; h < heads; ++h) {
                    const T* A = attn->data() + attn->idx4(p, h, 0, 0);
                    // dV_h = A^T dO_h
                    for (int j = 0; j < k; ++j)
                        for (int d = 0; d < Dh; ++d) {
                            T acc = T(0);
                            for (int i = 0; i < k; ++i)
                                acc += A[i * k + j] * dO[static_cast<size_t>(i) * C + h * Dh + d];
                            dV[static_cast<size_t>(j) * C + h * Dh + d] = acc;
                        }
                    if (!injecting) {
                        // dA = dO_h V_h^T ; dS via softmax jacobian; dQ,dK
                        for (int i = 0; i < k; ++i)
                            for (int j = 0; j < k; ++j) {
                                T acc = T(0);
                                for (int d = 0; d < Dh; ++d)
                                    acc += dO[static_cast<size_t>(i) * C + h * Dh + d] *
                                           proj->at(p, 2, j, h * Dh + d);
                                dA[static_cast<size_t>(i) * k + j] = acc;
                            }
                        for (int i = 0; i < k; ++i) {
                            T dot = T(0);
                            for (int j = 0; j < k; ++j)
                                dot += dA[static_cast<size_t>(i) * k + j] * A[i * k + j];
                            for (int j = 0; j < k; ++j) {
                                T dS = A[i * k + j] * (dA[static_cast<size_t>(i) * k + j] - dot) * inv_sqrt;
                                for (int d = 0; d < Dh; ++d) {
                                    dQ[static_cast<size_t>(i) * C + h * Dh + d] += dS * proj->at(p, 1, j, h * Dh + d);
                                    dK[static_cast<size_t>(j) * C + h * Dh + d] += dS * proj->at(p, 0, i, h * Dh + d);
                                }
                            }
                        }
                    }
                }
                // Back through the projections into x and the weights.
                for (int f = 0; f < k; ++f)
                    for (int c = 0; c < C; ++c) {
                        T gq = dQ[static_cast<size_t>(f) * C + c];
                        T gk = dK[static_cast<size_t>(f) * C + c];
                        T gv = dV[static_cast<size_t>(f) * C + c];
                        for (int c2 = 0; c2 < C; ++c2) {
                            T xv = x->value.at(f, c2, p / W, p % W);
                            if (!injecting) {
                                if (wq->requires_grad) wq->grad.at(c, c2) += gq * xv;
                                if (wk->requires_grad) wk->grad.at(c, c2) += gk * xv;
                            }
                            if (wv->requires_grad) wv->grad.at(c, c2) += gv * xv;
                            if (x->requires_grad) {
                                T gx = gv * wv->value.at(c, c2);
                                if (!injecting)
                                    gx += gq * wq->value.at(c, c2) + gk * wk->value.at(c, c2);
                                x->grad.at(f, c2, p / W, p % W) += gx;
                            }
                        }
                    }
            }
        };
    }
    return out;
}

// Cross-attention from each (frame, position) query onto a small set of
// reference tokens [M,C]. Purely per-frame; no cross-frame mixing.
template <typename T>
Var<T> cross_attention(const Var<T>& x, const Var<T>& tokens, const Var<T>& wq, const Var<T>& wk,
                       const Var<T>& wv, const Var<T>& wo, int heads) {
    const auto& xs = x->value.shape();
    const auto& ts = tokens->value.shape();
    if (xs.size() != 4 || ts.size() != 2 || ts[1] != xs[1])
        throw std::invalid_argument("cross_attention: bad shapes");
    int k = xs[0], C = xs[1], H = xs[2], W = xs[3];
    int M = ts[0];
    if (C % heads != 0) throw std::invalid_argument("cross_attention: C % heads != 0");
    int Dh = C / heads;
    int P = H * W;
    if (M > 64) throw std::invalid_argument("cross_attention: more than 64 tokens unsupported");
    int NQ = k * P;
    T inv_sqrt = T(1) / std::sqrt(static_cast<T>(Dh));

    // Token projections, computed once: K,V [M,C]
    auto kproj = std::make_shared<Tensor<T>>(Tensor<T>({M, C}));
    auto vproj = std::make_shared<Tensor<T>>(Tensor<T>({M, C}));
    for (int m = 0; m < M; ++m)
        for (int c = 0; c < C; ++c) {
            T kk = T(0), vv = T(0);
            for (int c2 = 0; c2 < C; ++c2) {
                kk += wk->value.at(c, c2) * tokens->value.at(m, c2);
                vv += wv->value.at(c, c2) * tokens->value.at(m, c2);
            }
            kproj->at(m, c) = kk;
            vproj->at(m, c) = vv;
        }

    auto qproj = std::make_shared<Tensor<T>>(Tensor<T>({NQ, C}));
    auto attn = std::make_shared<Tensor<T>>(Tensor<T>({NQ, heads * M}));
    auto mix = std::make_shared<Tensor<T>>(Tensor<T>({NQ, C}));
    Tensor<T> y(xs);

    for (int f = 0; f < k; ++f)
        for (int p = 0; p < P; ++p) {
            int qi = f * P + p;
            for (int c = 0; c < C; ++c) {
                T q = T(0);
                for (int c2 = 0; c2 < C; ++c2)
                    q += wq->value.at(c, c2) * x->value.at(f, c2, p / W, p % W);
                qproj->at(qi, c) = q;
            }
            for (int h = 0; h < heads; ++h) {
                T s[64];
                T mx = -std::numeric_limits<T>::infinity();
                for (int m = 0; m < M; ++m) {
                    T dot = T(0);
                    for (int d = 0; d < Dh; ++d)
                        dot += qproj->at(qi, h * Dh + d) * kproj->at(m, h * Dh + d);
                    s[m] = dot * inv_sqrt;
                    mx = std::max(mx, s[m]);
                }
                T denom = T(0);
                for (int m = 0; m < M; ++m) {
                    s[m] = std::exp(s[m] - mx);
                    denom += s[m];
                }
                for (int m = 0; m < M; ++m) attn->at(qi, h * M + m) = s[m] / denom;
                for (int d = 0; d < Dh; ++d) {
                    T acc = T(0);
                    for (int m = 0; m < M; ++m)
                        acc += attn->at(qi, h * M + m) * vproj->at(m, h * Dh + d);
                    mix->at(qi, h * Dh + d) = acc;
                }
            }
            for (int c = 0; c < C; ++c) {
                T acc = T(0);
                for (int c2 = 0; c2 < C; ++c2) acc += wo->value.at(c, c2) * mix->at(qi, c2);
                y.at(f, c, p / W, p % W) = acc;
            }
        }

    auto out = detail::make_node<T>(std::move(y), {x, tokens, wq, wk, wv, wo});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [x, tokens, wq, wk, wv, wo, o, kproj, vproj, qproj, attn, mix, k, C, H,
                            W, P, M, Dh, heads, inv_sqrt]() {
            if (x->requires_grad) x->ensure_grad();
            if (tokens->requires_grad) tokens->ensure_grad();
            for (auto& wvar : {wq, wk, wv, wo})
                if (wvar->requires_grad) wvar->ensure_grad();
            Tensor<T> dK({M, C});
            Tensor<T> dV({M, C});
            std::vector<T> dO(C), dQ(C), dAm(static_cast<size_t>(M));
            for (int f = 0; f < k; ++f)
                for (int p = 0; p < P; ++p) {
                    int qi = f * P + p;
                    for (int c2 = 0; c2 < C; ++c2) {
                        T acc = T(0);
                        for (int c = 0; c < C; ++c)
                            acc += o->grad.at(f, c, p / W, p % W) * wo->value.at(c, c2);
                        dO[c2] = acc;
                    }
                    if (wo->requires_grad)
                        for (int c = 0; c < C; ++c) {
                            T gy = o->grad.at(f, c, p / W, p % W);
                            for (int c2 = 0; c2 < C; ++c2) wo->grad.at(c, c2) += gy * mix->at(qi, c2);
                        }
                    std::fill(dQ.begin(), dQ.end(), T(0));
                    for (int h = 0; h < heads; ++h) {
                        for (int m = 0; m < M; ++m) {
                            T acc = T(0);
                            for (int d = 0; d < Dh; ++d) acc += dO[h * Dh + d] * vproj->at(m, h * Dh + d);
                            dAm[m] = acc;
                            // dV
                            T a = attn->at(qi, h * M + m);
                            for (int d = 0; d < Dh; ++d) dV.at(m, h * Dh + d) += a * dO[h * Dh + d];
                        }
                        T dot = T(0);
                        for (int m = 0; m < M; ++m) dot += dAm[m] * attn->at(qi, h * M + m);
                        for (int m = 0; m < M; ++m) {
                            T dS = attn->at(qi, h * M + m) * (dAm[m] - dot) * inv_sqrt;
                            for (int d = 0; d < Dh; ++d) {
                                dQ[h * Dh + d] += dS * kproj->at(m, h * Dh + d);
                                dK.at(m, h * Dh + d) += dS * qproj->at(qi, h * Dh + d);
                            }
                        }
                    }
                    for (int c = 0; c < C; ++c) {
                        T gq = dQ[c];
                        for (int c2 = 0; c2 < C; ++c2) {
                            T xv = x->value.at(f, c2, p / W, p % W);
                            if (wq->requires_grad) wq->grad.at(c, c2) += gq * xv;
                            if (x->requires_grad)
                                x->grad.at(f, c2, p / W, p % W) += gq * wq->value.at(c, c2);
                        }
                    }
                }
            // token-side projections
            for (int m = 0; m < M; ++m)
                for (int c = 0; c < C; ++c) {
                    T gk = dK.at(m, c), gv = dV.at(m, c);
                    for (int c2 = 0; c2 < C; ++c2) {
                        T tv = tokens->value.at(m, c2);
                        if (wk->requires_grad) wk->grad.at(c, c2) += gk * tv;
                        if (wv->requires_grad) wv->grad.at(c, c2) += gv * tv;
                        if (tokens->requires_grad)
                            tokens->grad.at(m, c2) += gk * wk->value.at(c, c2) + gv * wv->value.at(c, c2);
                    }
                }
        };
    }
    return out;
}

}  // namespace tinyvsr
