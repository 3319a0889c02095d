#pragma once

// Spatially tiled prediction and decoding. Latent predictions from
// overlapping tiles are combined by an unweighted per-cell mean; decoded
// pixel blocks are combined with linear feather ramps normalized to a
// partition of unity. Tiles are always reduced in plan order so the result
// does not depend on evaluation scheduling.

#include "tinyvsr/frames.hpp"
#include "tinyvsr/model.hpp"

namespace tinyvsr {

struct TileRect {
    int top = 0, left = 0, h = 0, w = 0;
};

struct TilePlan {
    int domain_h = 0, domain_w = 0;
    int tile_h = 0, tile_w = 0;
    int overlap = 0;
    std::vector<TileRect> rects;  // row-major scan order
};

namespace detail {
// Grid positions with stride tile-overlap; the last tile is clamped so it
// ends exactly at the domain boundary.
inline std::vector<int> tile_positions(int dim, int tile, int overlap) {
    std::vector<int> pos;
    int stride = tile - overlap;
    int p = 0;
    while (true) {
        if (p + tile >= dim) {
            pos.push_back(dim - tile);
            break;
        }
        pos.push_back(p);
        p += stride;
    }
    return pos;
}
}  // namespace detail

inline TilePlan plan_tiles(int h, int w, int tile_h, int tile_w, int overlap) {
    if (tile_h < 1 || tile_w < 1 || tile_h > h || tile_w > w)
        throw std::out_of_range("plan_tiles: tile must fit inside the domain");
    if (overlap < 0 || overlap >= tile_h || overlap >= tile_w)
        throw std::out_of_range("plan_tiles: overlap must be in [0, tile)");
    TilePlan plan{h, w, tile_h, tile_w, overlap, {}};
    auto rows = detail::tile_positions(h, tile_h, overlap);
    auto cols = detail::tile_positions(w, tile_w, overlap);
    for (int r : rows)
        for (int c : cols) plan.rects.push_back({r, c, tile_h, tile_w});
    return plan;
}

// Combine per-tile predictions into the full domain; every cell gets the
// arithmetic mean of all tile values covering it. `shape` is the full
// [N,C,H,W] output shape; the closure maps a rect to a tensor of the rect's
// spatial size.
template <typename T, typename F>
Tensor<T> tiled_prediction(const std::vector<int>& shape, F&& predict_tile, const TilePlan& plan) {
    if (shape.size() != 4 || shape[2] != plan.domain_h || shape[3] != plan.domain_w)
        throw std::invalid_argument("tiled_prediction: shape does not match the plan domain");
    Tensor<T> sum = Tensor<T>::zeros(shape);
    std::vector<int> count(static_cast<size_t>(plan.domain_h) * plan.domain_w, 0);
    for (const TileRect& r : plan.rects) {
        Tensor<T> p = predict_tile(r);
        if (p.ndim() != 4 || p.dim(0) != shape[0] || p.dim(1) != shape[1] || p.dim(2) != r.h ||
            p.dim(3) != r.w)
            throw std::invalid_argument("tiled_prediction: closure returned a wrong shape");
        for (int n = 0; n < shape[0]; ++n)
            for (int c = 0; c < shape[1]; ++c)
                for (int i = 0; i < r.h; ++i)
                    for (int j = 0; j < r.w; ++j)
                        sum.at(n, c, r.top + i, r.left + j) += p.at(n, c, i, j);
        for (int i = 0; i < r.h; ++i)
            for (int j = 0; j < r.w; ++j)
                count[static_cast<size_t>(r.top + i) * plan.domain_w + r.left + j] += 1;
    }
    for (int n = 0; n < shape[0]; ++n)
        for (int c = 0; c < shape[1]; ++c)
            for (int i = 0; i < plan.domain_h; ++i)
                for (int j = 0; j < plan.domain_w; ++j) {
                    int cov = count[static_cast<size_t>(i) * plan.domain_w + j];
                    if (cov == 0) throw std::logic_error("tiled_prediction: uncovered cell");
                    sum.at(n, c, i, j) /= static_cast<T>(cov);
                }
    return sum;
}

namespace detail {
// Feather weight along one axis of a tile. Ramps only at edges that are
// interior to the domain, so a full-domain tile weighs 1 everywhere.
template <typename T>
T axis_weight(int i, int extent, int lo, int domain, int feather) {
    T w = T(1);
    if (lo > 0 && i < feather) w = std::min(w, static_cast<T>(i + 1) / static_cast<T>(feather + 1));
    int from_end = extent - 1 - i;
    if (lo + extent < domain && from_end < feather)
        w = std::min(w, static_cast<T>(from_end + 1) / static_cast<T>(feather + 1));
    return w;
}
}  // namespace detail

// Decode each latent tile independently and blend the pixel blocks with
// linear ramps of width `feather` (pixels) inside overlaps. Weights are
// normalized per pixel, so they always form a partition of unity. Each crop
// is expanded by a few latent units of context (clamped to the domain) and
// the extra pixels are discarded after decoding, so the zero padding at crop
// borders never leaks into the blended output.
template <typename T>
Tensor<T> tiled_vae_decode(const Tensor<T>& z0, const ModelBundle<T>& bundle,
                           const TilePlan& latent_plan, int feather, bool adapter_on) {
    if (z0.dim(2) != latent_plan.domain_h || z0.dim(3) != latent_plan.domain_w)
        throw std::invalid_argument("tiled_vae_decode: latent does not match the plan domain");
    if (feather < 0) throw std::out_of_range("tiled_vae_decode: feather must be >= 0");
    constexpr int kContext = 4;  // exceeds the decoder receptive field in latent units
    int f = bundle.cfg.vae_factor;
    int Hp = latent_plan.domain_h * f, Wp = latent_plan.domain_w * f;
    int k = z0.dim(0);
    Tensor<T> acc = Tensor<T>::zeros({k, 3, Hp, Wp});
    std::vector<T> wsum(static_cast<size_t>(Hp) * Wp, T(0));
    for (const TileRect& r : latent_plan.rects) {
        int ctop = std::max(0, r.top - kContext);
        int cleft = std::max(0, r.left - kContext);
        int cbot = std::min(latent_plan.domain_h, r.top + r.h + kContext);
        int cright = std::min(latent_plan.domain_w, r.left + r.w + kContext);
        auto crop = crop_spatial(z0, ctop, cleft, cbot - ctop, cright - cleft);
        auto px = bundle.vae_decode(crop, adapter_on);
        // pixel offsets of the kept block inside the decoded context block
        int ioff = (r.top - ctop) * f, joff = (r.left - cleft) * f;
        int top = r.top * f, left = r.left * f, th = r.h * f, tw = r.w * f;
        for (int i = 0; i < th; ++i) {
            T wy = detail::axis_weight<T>(i, th, top, Hp, feather);
            for (int j = 0; j < tw; ++j) {
                T wgt = wy * detail::axis_weight<T>(j, tw, left, Wp, feather);
                wsum[static_cast<size_t>(top + i) * Wp + left + j] += wgt;
                for (int n = 0; n < k; ++n)
                    for (int c = 0; c < 3; ++c)
                        acc.at(n, c, top + i, left + j) += wgt * px.at(n, c, ioff + i, joff + j);
            }
        }
    }
    for (int i = 0; i < Hp; ++i)
        for (int j = 0; j < Wp; ++j) {
            T wgt = wsum[static_cast<size_t>(i) * Wp + j];
            if (wgt <= T(0)) throw std::logic_error("tiled_vae_decode: uncovered pixel");
            for (int n = 0; n < k; ++n)
                for (int c = 0; c < 3; ++c) acc.at(n, c, i, j) /= wgt;
        }
    return acc;
}

}  // namespace tinyvsr
