#pragma once

// Reference metrics: frame-averaged PSNR with a 100 dB cap, Gaussian-window
// SSIM, and the flow-warping error E_warp (reported times 1e3). Flow fields
// are inputs, not estimated; convention: frame_{t+1}(x) == frame_t(x - flow_t(x)).

#include <nlohmann/json.hpp>

#include "tinyvsr/tensor.hpp"

namespace tinyvsr {

constexpr double kPsnrCap = 100.0;

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
    check_same_shape(a, b, "psnr");
    if (a.ndim() != 4) throw std::invalid_argument("psnr: need [k,C,H,W] clips");
    int k = a.dim(0);
    int64_t per = a.size() / k;
    double sum_db = 0;
    for (int f = 0; f < k; ++f) {
        double mse = 0;
        for (int64_t i = f * per; i < (f + 1) * per; ++i) {
            double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            mse += d * d;
        }
        mse /= static_cast<double>(per);
        double db = mse <= 0 ? kPsnrCap : 10.0 * std::log10(peak * peak / mse);
        sum_db += std::min(db, kPsnrCap);
    }
    return sum_db / k;
}

namespace detail {
inline std::vector<double> gaussian_window(int size, double sigma = 1.5) {
    std::vector<double> w(size);
    double sum = 0;
    int c = size / 2;
    for (int i = 0; i < size; ++i) {
        w[i] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
}
}  // namespace detail

// Mean local SSIM over frames and channels, Gaussian window, standard
// constants, evaluated where the window fits entirely inside the frame.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, int window = 7, double peak = 1.0) {
    check_same_shape(a, b, "ssim");
    if (a.ndim() != 4) throw std::invalid_argument("ssim: need [k,C,H,W] clips");
    if (window % 2 == 0 || window < 3) throw std::invalid_argument("ssim: window must be odd >= 3");
    int k = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    if (H < window || W < window) throw std::invalid_argument("ssim: frame smaller than window");
    auto g = detail::gaussian_window(window);
    double c1 = (0.01 * peak) * (0.01 * peak);
    double c2 = (0.03 * peak) * (0.03 * peak);
    int r = window / 2;
    double total = 0;
    int64_t count = 0;
    for (int f = 0; f < k; ++f)
        for (int c = 0; c < C; ++c)
            for (int y = r; y < H - r; ++y)
                for (int x = r; x < W - r; ++x) {
                    double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
                    for (int i = -r; i <= r; ++i)
                        for (int j = -r; j <= r; ++j) {
                            double w = g[i + r] * g[j + r];
                            double va = a.at(f, c, y + i, x + j);
                            double vb = b.at(f, c, y + i, x + j);
                            mu_a += w * va;
                            mu_b += w * vb;
                            aa += w * va * va;
                            bb += w * vb * vb;
                            ab += w * va * vb;
                        }
                    double var_a = aa - mu_a * mu_a;
                    double var_b = bb - mu_b * mu_b;
                    double cov = ab - mu_a * mu_b;
                    total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                             ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                    ++count;
                }
    return total / static_cast<double>(count);
}

// E_warp: for each consecutive pair, warp frame t by flow t with bilinear
// sampling and compare against frame t+1; samples falling outside the frame
// are excluded. Result is the mean squared difference times 1e3.
template <typename T>
double flow_warp_error(const Tensor<T>& video, const std::vector<Tensor<T>>& flows) {
    if (video.ndim() != 4) throw std::invalid_argument("flow_warp_error: need [k,C,H,W]");
    int k = video.dim(0), C = video.dim(1), H = video.dim(2), W = video.dim(3);
    if (static_cast<int>(flows.size()) != k - 1)
        throw std::invalid_argument("flow_warp_error: need exactly frames-1 flow fields");
    double total = 0;
    int64_t count = 0;
    for (int t = 0; t + 1 < k; ++t) {
        const auto& fl = flows[t];
        if (fl.ndim() != 4 || fl.dim(0) != 1 || fl.dim(1) != 2 || fl.dim(2) != H || fl.dim(3) != W)
            throw std::invalid_argument("flow_warp_error: flow field shape mismatch");
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double sx = x - static_cast<double>(fl.at(0, 0, y, x));
                double sy = y - static_cast<double>(fl.at(0, 1, y, x));
                if (sx < 0 || sy < 0 || sx > W - 1 || sy > H - 1) continue;
                int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
                int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
                double fx = sx - x0, fy = sy - y0;
                for (int c = 0; c < C; ++c) {
                    double v00 = video.at(t, c, y0, x0), v01 = video.at(t, c, y0, x1);
                    double v10 = video.at(t, c, y1, x0), v11 = video.at(t, c, y1, x1);
                    double warped = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                    fy * ((1 - fx) * v10 + fx * v11);
                    double d = static_cast<double>(video.at(t + 1, c, y, x)) - warped;
                    total += d * d;
                    ++count;
                }
            }
    }
    if (count == 0) throw std::invalid_argument("flow_warp_error: every sample out of bounds");
    return total / static_cast<double>(count) * 1e3;
}

struct VideoMetrics {
    std::string id;
    double psnr = 0;
    double ssim = 0;
    double e_warp = -1;  // negative when no flow was supplied
};

struct MetricReport {
    std::vector<VideoMetrics> videos;
    std::string config_hash;

    double mean_psnr() const { return mean([](const VideoMetrics& v) { return v.psnr; }); }
    double mean_ssim() const { return mean([](const VideoMetrics& v) { return v.ssim; }); }
    double mean_e_warp() const {
        double s = 0;
        int n = 0;
        for (const auto& v : videos)
            if (v.e_warp >= 0) {
                s += v.e_warp;
                ++n;
            }
        return n ? s / n : -1;
    }

  private:
    template <typename F>
    double mean(F&& f) const {
        if (videos.empty()) return 0;
        double s = 0;
        for (const auto& v : videos) s += f(v);
        return s / static_cast<double>(videos.size());
    }
};

inline void to_json(nlohmann::json& j, const VideoMetrics& v) {
    j = {{"id", v.id}, {"psnr", v.psnr}, {"ssim", v.ssim}};
    if (v.e_warp >= 0) j["e_warp"] = v.e_warp;
}

inline void to_json(nlohmann::json& j, const MetricReport& r) {
    j = {{"videos", r.videos},
         {"aggregate",
          {{"psnr", r.mean_psnr()}, {"ssim", r.mean_ssim()}, {"e_warp", r.mean_e_warp()}}}};
    if (!r.config_hash.empty()) j["config_hash"] = r.config_hash;
}

}  // namespace tinyvsr
