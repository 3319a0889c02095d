#pragma once

// Value-level helpers for video tensors [k,C,H,W]: frame reversal, bicubic
// resampling, channel concatenation, frame slicing.

#include "tinyvsr/tensor.hpp"

namespace tinyvsr {

// Flip the frame (dim 0) order; all other axes untouched.
template <typename T>
Tensor<T> reverse_frames(const Tensor<T>& x) {
    if (x.ndim() < 1 || x.dim(0) < 1) throw std::invalid_argument("reverse_frames: empty input");
    Tensor<T> out(x.shape());
    int k = x.dim(0);
    int64_t stride = x.size() / k;
    for (int f = 0; f < k; ++f)
        std::copy(x.data() + f * stride, x.data() + (f + 1) * stride,
                  out.data() + (k - 1 - f) * stride);
    return out;
}

template <typename T>
Tensor<T> slice_frame(const Tensor<T>& x, int f) {
    int k = x.dim(0);
    if (f < 0 || f >= k) throw std::out_of_range("slice_frame: index out of range");
    std::vector<int> shape = x.shape();
    shape[0] = 1;
    Tensor<T> out(shape);
    int64_t stride = x.size() / k;
    std::copy(x.data() + f * stride, x.data() + (f + 1) * stride, out.data());
    return out;
}

template <typename T>
Tensor<T> repeat_frame(const Tensor<T>& single, int k) {
    if (single.dim(0) != 1) throw std::invalid_argument("repeat_frame: need a single frame");
    std::vector<int> shape = single.shape();
    shape[0] = k;
    Tensor<T> out(shape);
    for (int f = 0; f < k; ++f)
        std::copy(single.data(), single.data() + single.size(), out.data() + f * single.size());
    return out;
}

template <typename T>
Tensor<T> concat_channels_value(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 4 || b.ndim() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
        a.dim(3) != b.dim(3))
        throw std::invalid_argument("concat_channels_value: shape mismatch");
    int k = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
    Tensor<T> out({k, Ca + Cb, H, W});
    for (int f = 0; f < k; ++f) {
        for (int c = 0; c < Ca; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) out.at(f, c, h, w) = a.at(f, c, h, w);
        for (int c = 0; c < Cb; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) out.at(f, Ca + c, h, w) = b.at(f, c, h, w);
    }
    return out;
}

// Crop [N,C,H,W] to a spatial window.
template <typename T>
Tensor<T> crop_spatial(const Tensor<T>& x, int top, int left, int h, int w) {
    if (top < 0 || left < 0 || top + h > x.dim(2) || left + w > x.dim(3))
        throw std::out_of_range("crop_spatial: window outside tensor");
    Tensor<T> out({x.dim(0), x.dim(1), h, w});
    for (int n = 0; n < x.dim(0); ++n)
        for (int c = 0; c < x.dim(1); ++c)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) out.at(n, c, i, j) = x.at(n, c, top + i, left + j);
    return out;
}

namespace detail {
// Catmull-Rom kernel
template <typename T>
T cubic_weight(T d) {
    d = std::abs(d);
    if (d < T(1)) return (T(1.5) * d - T(2.5)) * d * d + T(1);
    if (d < T(2)) return ((T(-0.5) * d + T(2.5)) * d - T(4)) * d + T(2);
    return T(0);
}
}  // namespace detail

// Bicubic resize of [N,C,H,W] to (out_h, out_w), borders clamped.
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& x, int out_h, int out_w) {
    if (x.ndim() != 4) throw std::invalid_argument("bicubic_resize: need 4-d input");
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<T> out({N, C, out_h, out_w});
    T sy = static_cast<T>(H) / static_cast<T>(out_h);
    T sx = static_cast<T>(W) / static_cast<T>(out_w);
    for (int oh = 0; oh < out_h; ++oh) {
        T fy = (static_cast<T>(oh) + T(0.5)) * sy - T(0.5);
        int y0 = static_cast<int>(std::floor(fy));
        for (int ow = 0; ow < out_w; ++ow) {
            T fx = (static_cast<T>(ow) + T(0.5)) * sx - T(0.5);
            int x0 = static_cast<int>(std::floor(fx));
            T wy[4], wx[4];
            for (int i = 0; i < 4; ++i) {
                wy[i] = detail::cubic_weight(fy - static_cast<T>(y0 - 1 + i));
                wx[i] = detail::cubic_weight(fx - static_cast<T>(x0 - 1 + i));
            }
            for (int n = 0; n < N; ++n)
                for (int c = 0; c < C; ++c) {
                    T acc = T(0), wsum = T(0);
                    for (int i = 0; i < 4; ++i)
                        for (int j = 0; j < 4; ++j) {
                            int yy = std::clamp(y0 - 1 + i, 0, H - 1);
                            int xx = std::clamp(x0 - 1 + j, 0, W - 1);
                            T w = wy[i] * wx[j];
                            acc += w * x.at(n, c, yy, xx);
                            wsum += w;
                        }
                    out.at(n, c, oh, ow) = acc / wsum;
                }
        }
    }
    return out;
}

}  // namespace tinyvsr
