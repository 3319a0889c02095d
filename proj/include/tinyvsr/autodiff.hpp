#pragma once

// Minimal reverse-mode autodiff tape over Tensor<T>. Ops are free functions
// returning shared graph nodes; each op closes over its parents and writes
// parent gradients in its backward lambda. The attention ops are fused
// (projection + softmax + value mixing in one node) so their per-site maps
// can be captured or replaced wholesale.

#include <cassert>
#include <functional>
#include <memory>
#include <unordered_set>

#include "tinyvsr/tensor.hpp"

namespace tinyvsr {

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated lazily
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad = Tensor<T>::zeros(value.shape());
    }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

inline thread_local bool g_grad_enabled = true;

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
    ~NoGradGuard() { g_grad_enabled = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
};

template <typename T>
Var<T> constant(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    return n;
}

template <typename T>
Var<T> make_param(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = true;
    return n;
}

namespace detail {

template <typename T>
bool track(const std::initializer_list<Var<T>>& parents) {
    if (!g_grad_enabled) return false;
    for (const auto& p : parents)
        if (p && p->requires_grad) return true;
    return false;
}

template <typename T>
Var<T> make_node(Tensor<T> value, std::initializer_list<Var<T>> parents) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    if (track<T>(parents)) {
        n->requires_grad = true;
        for (const auto& p : parents)
            if (p) n->parents.push_back(p);
    }
    return n;
}

}  // namespace detail

// Run reverse accumulation from `loss` (any shape; seed gradient is all-ones).
template <typename T>
void backward(const Var<T>& loss) {
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    // iterative post-order DFS
    std::vector<std::pair<Node<T>*, size_t>> stack{{loss.get(), 0}};
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->ensure_grad();
    loss->grad.fill(T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn();
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor<T> v = a->value;
    for (int64_t i = 0; i < v.size(); ++i) v[i] += b->value[i];
    auto out = detail::make_node<T>(std::move(v), {a, b});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [a, b, o]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int64_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int64_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i];
            }
        };
    }
    return out;
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a->value, b->value, "sub");
    Tensor<T> v = a->value;
    for (int64_t i = 0; i < v.size(); ++i) v[i] -= b->value[i];
    auto out = detail::make_node<T>(std::move(v), {a, b});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [a, b, o]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int64_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int64_t i = 0; i < o->grad.size(); ++i) b->grad[i] -= o->grad[i];
            }
        };
    }
    return out;
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a->value, b->value, "mul");
    Tensor<T> v = a->value;
    for (int64_t i = 0; i < v.size(); ++i) v[i] *= b->value[i];
    auto out = detail::make_node<T>(std::move(v), {a, b});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [a, b, o]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int64_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] * b->value[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int64_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i] * a->value[i];
            }
        };
    }
    return out;
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
    Tensor<T> v = a->value;
    for (int64_t i = 0; i < v.size(); ++i) v[i] *= s;
    auto out = detail::make_node<T>(std::move(v), {a});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [a, s, o]() {
            a->ensure_grad();
            for (int64_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] * s;
        };
    }
    return out;
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
    Tensor<T> v = a->value;
    for (int64_t i = 0; i < v.size(); ++i) v[i] += s;
    auto out = detail::make_node<T>(std::move(v), {a});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (int64_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
        };
    }
    return out;
}

template <typename T>
Var<T> silu(const Var<T>& a) {
    Tensor<T> v = a->value;
    for (int64_t i = 0; i < v.size(); ++i) {
        T x = v[i];
        v[i] = x / (T(1) + std::exp(-x));
    }
    auto out = detail::make_node<T>(std::move(v), {a});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (int64_t i = 0; i < o->grad.size(); ++i) {
                T x = a->value[i];
                T s = T(1) / (T(1) + std::exp(-x));
                a->grad[i] += o->grad[i] * (s + x * s * (T(1) - s));
            }
        };
    }
    return out;
}

template <typename T>
Var<T> relu(const Var<T>& a) {
    Tensor<T> v = a->value;
    for (int64_t i = 0; i < v.size(); ++i) v[i] = std::max(v[i], T(0));
    auto out = detail::make_node<T>(std::move(v), {a});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (int64_t i = 0; i < o->grad.size(); ++i)
                if (a->value[i] > T(0)) a->grad[i] += o->grad[i];
        };
    }
    return out;
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
    Tensor<T> v = a->value;
    for (int64_t i = 0; i < v.size(); ++i) v[i] = T(1) / (T(1) + std::exp(-v[i]));
    auto out = detail::make_node<T>(std::move(v), {a});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (int64_t i = 0; i < o->grad.size(); ++i) {
                T y = o->value[i];
                a->grad[i] += o->grad[i] * y * (T(1) - y);
            }
        };
    }
    return out;
}

template <typename T>
Var<T> tanh_op(const Var<T>& a) {
    Tensor<T> v = a->value;
    for (int64_t i = 0; i < v.size(); ++i) v[i] = std::tanh(v[i]);
    auto out = detail::make_node<T>(std::move(v), {a});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (int64_t i = 0; i < o->grad.size(); ++i) {
                T y = o->value[i];
                a->grad[i] += o->grad[i] * (T(1) - y * y);
            }
        };
    }
    return out;
}

template <typename T>
Var<T> reshape(const Var<T>& a, std::vector<int> shape) {
    Tensor<T> v = a->value.reshaped(std::move(shape));
    auto out = detail::make_node<T>(std::move(v), {a});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (int64_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions / losses
// ---------------------------------------------------------------------------

template <typename T>
Var<T> mean_all(const Var<T>& a) {
    T m = T(0);
    for (int64_t i = 0; i < a->value.size(); ++i) m += a->value[i];
    int64_t n = a->value.size();
    m /= static_cast<T>(n);
    auto out = detail::make_node<T>(Tensor<T>::full({1}, m), {a});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [a, o, n]() {
            a->ensure_grad();
            T g = o->grad[0] / static_cast<T>(n);
            for (int64_t i = 0; i < a->value.size(); ++i) a->grad[i] += g;
        };
    }
    return out;
}

// mean((a - b)^2), fused
template <typename T>
Var<T> mse_loss(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a->value, b->value, "mse_loss");
    T m = T(0);
    int64_t n = a->value.size();
    for (int64_t i = 0; i < n; ++i) {
        T d = a->value[i] - b->value[i];
        m += d * d;
    }
    m /= static_cast<T>(n);
    auto out = detail::make_node<T>(Tensor<T>::full({1}, m), {a, b});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [a, b, o, n]() {
            T g = o->grad[0] * T(2) / static_cast<T>(n);
            if (a->requires_grad) {
                a->ensure_grad();
                for (int64_t i = 0; i < n; ++i) a->grad[i] += g * (a->value[i] - b->value[i]);
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int64_t i = 0; i < n; ++i) b->grad[i] -= g * (a->value[i] - b->value[i]);
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

// y[n,o] = sum_i x[n,i] * w[o,i] + b[o]; w: [Dout, Din], b optional
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1])
        throw std::invalid_argument("linear: bad shapes");
    int N = xs[0], Din = xs[1], Dout = ws[0];
    Tensor<T> v({N, Dout});
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < Dout; ++o) {
            T acc = b ? b->value[o] : T(0);
            for (int i = 0; i < Din; ++i) acc += x->value.at(n, i) * w->value.at(o, i);
            v.at(n, o) = acc;
        }
    auto out = detail::make_node<T>(std::move(v), {x, w, b});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [x, w, b, o, N, Din, Dout]() {
            if (x->requires_grad) {
                x->ensure_grad();
                for (int n = 0; n < N; ++n)
                    for (int i = 0; i < Din; ++i) {
                        T acc = T(0);
                        for (int d = 0; d < Dout; ++d) acc += o->grad.at(n, d) * w->value.at(d, i);
                        x->grad.at(n, i) += acc;
                    }
            }
            if (w->requires_grad) {
                w->ensure_grad();
                for (int d = 0; d < Dout; ++d)
                    for (int i = 0; i < Din; ++i) {
                        T acc = T(0);
                        for (int n = 0; n < N; ++n) acc += o->grad.at(n, d) * x->value.at(n, i);
                        w->grad.at(d, i) += acc;
                    }
            }
            if (b && b->requires_grad) {
                b->ensure_grad();
                for (int d = 0; d < Dout; ++d) {
                    T acc = T(0);
                    for (int n = 0; n < N; ++n) acc += o->grad.at(n, d);
                    b->grad[d] += acc;
                }
            }
        };
    }
    return out;
}

// y = a @ b; a: [m,p], b: [p,n]
template <typename T>
Var<T> matmul2d(const Var<T>& a, const Var<T>& b) {
    const auto& as = a->value.shape();
    const auto& bs = b->value.shape();
    if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
        throw std::invalid_argument("matmul2d: bad shapes");
    int m = as[0], p = as[1], n = bs[1];
    Tensor<T> v({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            T acc = T(0);
            for (int q = 0; q < p; ++q) acc += a->value.at(i, q) * b->value.at(q, j);
            v.at(i, j) = acc;
        }
    auto out = detail::make_node<T>(std::move(v), {a, b});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [a, b, o, m, p, n]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int i = 0; i < m; ++i)
                    for (int q = 0; q < p; ++q) {
                        T acc = T(0);
                        for (int j = 0; j < n; ++j) acc += o->grad.at(i, j) * b->value.at(q, j);
                        a->grad.at(i, q) += acc;
                    }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int q = 0; q < p; ++q)
                    for (int j = 0; j < n; ++j) {
                        T acc = T(0);
                        for (int i = 0; i < m; ++i) acc += a->value.at(i, q) * o->grad.at(i, j);
                        b->grad.at(q, j) += acc;
                    }
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Spatial ops on [N,C,H,W]
// ---------------------------------------------------------------------------

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1])
        throw std::invalid_argument("conv2d: bad shapes");
    int N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
    int Cout = ws[0], kh = ws[2], kw = ws[3];
    int Ho = (H + 2 * pad - kh) / stride + 1;
    int Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: output collapsed");
    Tensor<T> v({N, Cout, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Cout; ++co)
            for (int ho = 0; ho < Ho; ++ho)
                for (int wo = 0; wo < Wo; ++wo) {
                    T acc = b ? b->value[co] : T(0);
                    for (int ci = 0; ci < Cin; ++ci)
                        for (int r = 0; r < kh; ++r) {
                            int hi = ho * stride - pad + r;
                            if (hi < 0 || hi >= H) continue;
                            for (int c = 0; c < kw; ++c) {
                                int wi = wo * stride - pad + c;
                                if (wi < 0 || wi >= W) continue;
                                acc += x->value.at(n, ci, hi, wi) * w->value.at(co, ci, r, c);
                            }
                        }
                    v.at(n, co, ho, wo) = acc;
                }
    auto out = detail::make_node<T>(std::move(v), {x, w, b});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [x, w, b, o, N, Cin, H, W, Cout, kh, kw, Ho, Wo, stride, pad]() {
            if (x->requires_grad) x->ensure_grad();
            if (w->requires_grad) w->ensure_grad();
            if (b && b->requires_grad) b->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int co = 0; co < Cout; ++co)
                    for (int ho = 0; ho < Ho; ++ho)
                        for (int wo = 0; wo < Wo; ++wo) {
                            T g = o->grad.at(n, co, ho, wo);
                            if (g == T(0)) continue;
                            if (b && b->requires_grad) b->grad[co] += g;
                            for (int ci = 0; ci < Cin; ++ci)
                                for (int r = 0; r < kh; ++r) {
                                    int hi = ho * stride - pad + r;
                                    if (hi < 0 || hi >= H) continue;
                                    for (int c = 0; c < kw; ++c) {
                                        int wi = wo * stride - pad + c;
                                        if (wi < 0 || wi >= W) continue;
                                        if (w->requires_grad)
                                            w->grad.at(co, ci, r, c) += g * x->value.at(n, ci, hi, wi);
                                        if (x->requires_grad)
                                            x->grad.at(n, ci, hi, wi) += g * w->value.at(co, ci, r, c);
                                    }
                                }
                        }
        };
    }
    return out;
}

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x) {
    const auto& xs = x->value.shape();
    if (xs.size() != 4) throw std::invalid_argument("upsample: need 4-d input");
    int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    Tensor<T> v({N, C, H * 2, W * 2});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    T val = x->value.at(n, c, h, w);
                    v.at(n, c, 2 * h, 2 * w) = val;
                    v.at(n, c, 2 * h, 2 * w + 1) = val;
                    v.at(n, c, 2 * h + 1, 2 * w) = val;
                    v.at(n, c, 2 * h + 1, 2 * w + 1) = val;
                }
    auto out = detail::make_node<T>(std::move(v), {x});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [x, o, N, C, H, W]() {
            x->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c)
                    for (int h = 0; h < H; ++h)
                        for (int w = 0; w < W; ++w)
                            x->grad.at(n, c, h, w) += o->grad.at(n, c, 2 * h, 2 * w) +
                                                      o->grad.at(n, c, 2 * h, 2 * w + 1) +
                                                      o->grad.at(n, c, 2 * h + 1, 2 * w) +
                                                      o->grad.at(n, c, 2 * h + 1, 2 * w + 1);
        };
    }
    return out;
}

// Per-position layer norm over the channel axis of [N,C,H,W].
template <typename T>
Var<T> channel_layernorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
    const auto& xs = x->value.shape();
    if (xs.size() != 4 || gamma->value.size() != xs[1])
        throw std::invalid_argument("channel_layernorm: bad shapes");
    int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    Tensor<T> v(xs);
    Tensor<T> xhat(xs);
    Tensor<T> invstd({N, 1, H, W});
    for (int n = 0; n < N; ++n)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                T mu = T(0);
                for (int c = 0; c < C; ++c) mu += x->value.at(n, c, h, w);
                mu /= static_cast<T>(C);
                T var = T(0);
                for (int c = 0; c < C; ++c) {
                    T d = x->value.at(n, c, h, w) - mu;
                    var += d * d;
                }
                var /= static_cast<T>(C);
                T inv = T(1) / std::sqrt(var + eps);
                invstd.at(n, 0, h, w) = inv;
                for (int c = 0; c < C; ++c) {
                    T xh = (x->value.at(n, c, h, w) - mu) * inv;
                    xhat.at(n, c, h, w) = xh;
                    v.at(n, c, h, w) = gamma->value[c] * xh + beta->value[c];
                }
            }
    auto out = detail::make_node<T>(std::move(v), {x, gamma, beta});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        auto xh = std::make_shared<Tensor<T>>(std::move(xhat));
        auto inv = std::make_shared<Tensor<T>>(std::move(invstd));
        out->backward_fn = [x, gamma, beta, o, xh, inv, N, C, H, W]() {
            if (x->requires_grad) x->ensure_grad();
            if (gamma->requires_grad) gamma->ensure_grad();
            if (beta->requires_grad) beta->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) {
                        T m1 = T(0), m2 = T(0);
                        for (int c = 0; c < C; ++c) {
                            T dy = o->grad.at(n, c, h, w);
                            T dxh = dy * gamma->value[c];
                            m1 += dxh;
                            m2 += dxh * xh->at(n, c, h, w);
                            if (gamma->requires_grad) gamma->grad[c] += dy * xh->at(n, c, h, w);
                            if (beta->requires_grad) beta->grad[c] += dy;
                        }
                        m1 /= static_cast<T>(C);
                        m2 /= static_cast<T>(C);
                        if (x->requires_grad) {
                            T iv = inv->at(n, 0, h, w);
                            for (int c = 0; c < C; ++c) {
                                T dxh = o->grad.at(n, c, h, w) * gamma->value[c];
                                x->grad.at(n, c, h, w) += iv * (dxh - m1 - xh->at(n, c, h, w) * m2);
                            }
                        }
                    }
        };
    }
    return out;
}

// bias [C] broadcast over [N,C,H,W]
template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& bias) {
    const auto& xs = x->value.shape();
    if (xs.size() != 4 || bias->value.size() != xs[1])
        throw std::invalid_argument("add_channel_bias: bad shapes");
    int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    Tensor<T> v = x->value;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) v.at(n, c, h, w) += bias->value[c];
    auto out = detail::make_node<T>(std::move(v), {x, bias});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [x, bias, o, N, C, H, W]() {
            if (x->requires_grad) {
                x->ensure_grad();
                for (int64_t i = 0; i < o->grad.size(); ++i) x->grad[i] += o->grad[i];
            }
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (int n = 0; n < N; ++n)
                    for (int c = 0; c < C; ++c)
                        for (int h = 0; h < H; ++h)
                            for (int w = 0; w < W; ++w) bias->grad[c] += o->grad.at(n, c, h, w);
            }
        };
    }
    return out;
}

// [N,C,H,W] -> [N,C] mean over the spatial axes
template <typename T>
Var<T> spatial_mean(const Var<T>& x) {
    const auto& xs = x->value.shape();
    if (xs.size() != 4) throw std::invalid_argument("spatial_mean: need 4-d input");
    int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    T inv = T(1) / static_cast<T>(H * W);
    Tensor<T> v({N, C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            T acc = T(0);
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) acc += x->value.at(n, c, h, w);
            v.at(n, c) = acc * inv;
        }
    auto out = detail::make_node<T>(std::move(v), {x});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [x, o, N, C, H, W, inv]() {
            x->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    T g = o->grad.at(n, c) * inv;
                    for (int h = 0; h < H; ++h)
                        for (int w = 0; w < W; ++w) x->grad.at(n, c, h, w) += g;
                }
        };
    }
    return out;
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
    const auto& as = a->value.shape();
    const auto& bs = b->value.shape();
    if (as.size() != 4 || bs.size() != 4 || as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3])
        throw std::invalid_argument("concat_channels: bad shapes");
    int N = as[0], Ca = as[1], Cb = bs[1], H = as[2], W = as[3];
    Tensor<T> v({N, Ca + Cb, H, W});
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < Ca; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) v.at(n, c, h, w) = a->value.at(n, c, h, w);
        for (int c = 0; c < Cb; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) v.at(n, Ca + c, h, w) = b->value.at(n, c, h, w);
    }
    auto out = detail::make_node<T>(std::move(v), {a, b});
    if (out->requires_grad) {
        Node<T>* o = out.get();
        out->backward_fn = [a, b, o, N, Ca, Cb, H, W]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int n = 0; n < N; ++n)
                    for (int c = 0; c < Ca; ++c)
                        for (int h = 0; h < H; ++h)
                            for (int w = 0; w < W; ++w) a->grad.at(n, c, h, w) += o->grad.at(n, c, h, w);
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int n = 0; n < N; ++n)
                    for (int c = 0; c < Cb; ++c)
                        for (int h = 0; h < H; ++h)
                            for (int w = 0; w < W; ++w) b->grad.at(n, c, h, w) += o->grad.at(n, Ca + c, h, w);
            }
        };
    }
    return out;
}

}  // namespace tinyvsr
