#pragma once

// Long videos are split into fixed-length clips that share exactly one frame
// with each neighbour. Both neighbours receive the identical enhanced copy of
// the shared boundary frame, which is what keeps the seams consistent. The
// tail is padded by repeating the final frame so every clip has full length;
// padding is trimmed from the output.

#include <map>

#include "tinyvsr/enhancer.hpp"
#include "tinyvsr/sampling.hpp"

namespace tinyvsr {

struct ClipRange {
    int start = 0, end = 0;  // 1-based, inclusive
};

struct ClipPlan {
    int n = 0;          // original frame count
    int k = 0;          // clip length
    int pad_count = 0;  // frames appended by repetition before planning
    std::vector<ClipRange> clips;
};

inline ClipPlan plan_clips(int n, int k) {
    if (n < 2 || k < 2) throw std::out_of_range("plan_clips: need n >= 2 and k >= 2");
    ClipPlan plan;
    plan.n = n;
    plan.k = k;
    int stride = k - 1;
    plan.pad_count = (stride - (n - 1) % stride) % stride;
    int total = n + plan.pad_count;
    for (int start = 1; start + k - 1 <= total; start += stride)
        plan.clips.push_back({start, start + k - 1});
    return plan;
}

// Enhance every distinct clip boundary exactly once; adjacent clips then pull
// the same tensor out of the returned map.
template <typename T>
std::map<int, Tensor<T>> enhance_keyframes(const Tensor<T>& video, const ClipPlan& plan,
                                           ReferenceEnhancer<T>& enhancer) {
    if (video.dim(0) < plan.n + plan.pad_count)
        throw std::invalid_argument("enhance_keyframes: video shorter than the padded plan");
    std::map<int, Tensor<T>> keyframes;
    for (size_t i = 0; i < plan.clips.size(); ++i) {
        for (int boundary : {plan.clips[i].start, plan.clips[i].end}) {
            if (keyframes.count(boundary)) continue;
            try {
                keyframes.emplace(boundary,
                                  enhancer.enhance(slice_frame(video, boundary - 1), boundary - 1));
            } catch (const std::exception& e) {
                throw std::runtime_error("keyframe enhancement failed at clip " +
                                         std::to_string(i) + ", frame " + std::to_string(boundary) +
                                         ": " + e.what());
            }
        }
    }
    return keyframes;
}

namespace detail {
template <typename T>
Tensor<T> pad_by_repetition(const Tensor<T>& video, int pad_count) {
    if (pad_count == 0) return video;
    int n = video.dim(0);
    std::vector<int> shape = video.shape();
    shape[0] = n + pad_count;
    Tensor<T> out(shape);
    int64_t per = video.size() / n;
    std::copy(video.data(), video.data() + video.size(), out.data());
    auto last = video.data() + static_cast<int64_t>(n - 1) * per;
    for (int f = n; f < n + pad_count; ++f) std::copy(last, last + per, out.data() + f * per);
    return out;
}
}  // namespace detail

// Full long-video path: pad, enhance keyframes, sample each clip between its
// two keyframes, stitch keeping the earlier clip's copy of each shared frame,
// trim the padding. Output frame count equals the input's.
template <typename T>
Tensor<T> run_long_vsr(const Tensor<T>& video, ReferenceEnhancer<T>& enhancer,
                       const ModelBundle<T>& bundle, const NoiseSchedule<T>& sched,
                       const SamplerOptions& opts, int clip_len = 0) {
    int n = video.dim(0);
    int k = clip_len > 0 ? clip_len : bundle.cfg.frames;
    if (n < 2) throw std::out_of_range("run_long_vsr: need at least 2 frames");
    if (n <= k) {
        // single clip, no scheduling needed
        auto h1 = enhancer.enhance(slice_frame(video, 0), 0);
        auto hk = enhancer.enhance(slice_frame(video, n - 1), n - 1);
        return bidirectional_sample(video, h1, hk, bundle, sched, opts);
    }
    auto plan = plan_clips(n, k);
    auto padded = detail::pad_by_repetition(video, plan.pad_count);
    auto keyframes = enhance_keyframes(padded, plan, enhancer);

    int scale = enhancer.target_scale();
    int Hp = video.dim(2) * scale, Wp = video.dim(3) * scale;
    Tensor<T> out({n, 3, Hp, Wp});
    int64_t per = static_cast<int64_t>(3) * Hp * Wp;
    for (size_t i = 0; i < plan.clips.size(); ++i) {
        const auto& clip = plan.clips[i];
        Tensor<T> lq({k, 3, video.dim(2), video.dim(3)});
        int64_t lq_per = lq.size() / k;
        std::copy(padded.data() + static_cast<int64_t>(clip.start - 1) * lq_per,
                  padded.data() + static_cast<int64_t>(clip.end) * lq_per, lq.data());
        Tensor<T> hq;
        try {
            hq = bidirectional_sample(lq, keyframes.at(clip.start), keyframes.at(clip.end), bundle,
                                      sched, opts);
        } catch (const std::exception& e) {
            throw std::runtime_error("sampling failed on clip " + std::to_string(i) + " [" +
                                     std::to_string(clip.start) + "," + std::to_string(clip.end) +
                                     "]: " + e.what());
        }
        // drop the shared first frame of every clip after the first; keep the
        // earlier clip's copy
        int from = (i == 0) ? 0 : 1;
        for (int f = from; f < k; ++f) {
            int global = clip.start - 1 + f;  // 0-based index in the padded video
            if (global >= n) break;           // trimmed padding
            std::copy(hq.data() + static_cast<int64_t>(f) * per,
                      hq.data() + static_cast<int64_t>(f + 1) * per,
                      out.data() + static_cast<int64_t>(global) * per);
        }
    }
    return out;
}

}  // namespace tinyvsr
