#pragma once

// Pluggable reference-frame super-resolution. The sampler only ever sees the
// interface, so the enhanced keyframes can come from a plain bicubic resize,
// the ground truth (oracle experiments), a small trainable residual net, or
// an arbitrary external program exchanging PNG files.

#include <cstdlib>

#include "tinyvsr/autodiff.hpp"
#include "tinyvsr/frames.hpp"
#include "tinyvsr/image_io.hpp"
#include "tinyvsr/nn.hpp"
#include "tinyvsr/optim.hpp"

namespace tinyvsr {

template <typename T>
class ReferenceEnhancer {
  public:
    virtual ~ReferenceEnhancer() = default;
    virtual std::string name() const = 0;
    virtual int target_scale() const = 0;
    // frame: [1,3,h,w]; frame_index identifies the frame inside its video
    // (0-based), used by implementations with per-frame side information.
    virtual Tensor<T> enhance(const Tensor<T>& frame, int frame_index) = 0;
};

template <typename T>
class IdentityUpscaler : public ReferenceEnhancer<T> {
  public:
    explicit IdentityUpscaler(int scale) : scale_(scale) {
        if (scale < 1) throw std::invalid_argument("identity upscaler: scale must be >= 1");
    }
    std::string name() const override { return "identity"; }
    int target_scale() const override { return scale_; }
    Tensor<T> enhance(const Tensor<T>& frame, int) override {
        return bicubic_resize(frame, frame.dim(2) * scale_, frame.dim(3) * scale_);
    }

  private:
    int scale_;
};

// Returns stored ground-truth frames; the ideal-reference upper bound.
template <typename T>
class OracleEnhancer : public ReferenceEnhancer<T> {
  public:
    OracleEnhancer(Tensor<T> gt_frames, int scale) : gt_(std::move(gt_frames)), scale_(scale) {}
    std::string name() const override { return "oracle"; }
    int target_scale() const override { return scale_; }
    Tensor<T> enhance(const Tensor<T>&, int frame_index) override {
        return slice_frame(gt_, frame_index);
    }

  private:
    Tensor<T> gt_;
    int scale_;
};

// Bicubic upscale plus a learned residual from a small conv stack.
template <typename T>
class TinySRNet : public ReferenceEnhancer<T> {
  public:
    TinySRNet(int scale, int width, uint64_t seed) : scale_(scale) {
        RngStream rng(seed, "srnet-init");
        c1_ = Conv2d<T>(params_, "srnet.c1", 3, width, 3, 1, rng);
        c2_ = Conv2d<T>(params_, "srnet.c2", width, width, 3, 1, rng);
        // zero-initialized output so the untrained net equals plain bicubic
        c3_ = Conv2d<T>(params_, "srnet.c3", width, 3, 3, 1, rng, /*zero_init=*/true);
    }
    std::string name() const override { return "net"; }
    int target_scale() const override { return scale_; }

    Var<T> forward(const Var<T>& upsampled) const {
        return add(upsampled, c3_(silu(c2_(silu(c1_(upsampled))))));
    }

    Tensor<T> enhance(const Tensor<T>& frame, int) override {
        NoGradGuard ng;
        auto up = constant(bicubic_resize(frame, frame.dim(2) * scale_, frame.dim(3) * scale_));
        return forward(up)->value;
    }

    // Supervised fit on (LQ frame, HQ frame) pairs; returns the loss curve.
    std::vector<T> fit(const std::vector<std::pair<Tensor<T>, Tensor<T>>>& pairs, int iterations,
                       T lr) {
        AdamW<T> opt;
        opt.lr = lr;
        std::vector<T> losses;
        for (int it = 0; it < iterations; ++it) {
            const auto& [lq, hq] = pairs[it % pairs.size()];
            params_.zero_grads();
            auto up = constant(bicubic_resize(lq, hq.dim(2), hq.dim(3)));
            auto loss = mse_loss(forward(up), constant(hq));
            backward(loss);
            opt.step(params_.params);
            losses.push_back(loss->value[0]);
        }
        return losses;
    }

    ParamStore<T>& params() { return params_; }

  private:
    int scale_;
    ParamStore<T> params_;
    Conv2d<T> c1_, c2_, c3_;
};

// Subprocess adapter: writes the frame to a PNG, runs `command <in> <out>`,
// reads the result. The command must exit 0 and produce a PNG at the target
// resolution.
template <typename T>
class ExternalEnhancer : public ReferenceEnhancer<T> {
  public:
    ExternalEnhancer(std::string command, int scale, std::string workdir = "")
        : command_(std::move(command)), scale_(scale), workdir_(std::move(workdir)) {
        if (workdir_.empty())
            workdir_ = (std::filesystem::temp_directory_path() / "tinyvsr-ext").string();
        std::filesystem::create_directories(workdir_);
    }
    std::string name() const override { return "external:" + command_; }
    int target_scale() const override { return scale_; }

    Tensor<T> enhance(const Tensor<T>& frame, int frame_index) override {
        std::string in = workdir_ + "/in_" + std::to_string(frame_index) + ".png";
        std::string out = workdir_ + "/out_" + std::to_string(frame_index) + ".png";
        write_png(in, frame);
        std::string cmd = command_ + " " + in + " " + out;
        int rc = std::system(cmd.c_str());
        if (rc != 0)
            throw std::runtime_error("external enhancer '" + command_ + "' exited with status " +
                                     std::to_string(rc));
        auto result = read_png<T>(out);
        if (result.dim(2) != frame.dim(2) * scale_ || result.dim(3) != frame.dim(3) * scale_)
            throw std::runtime_error("external enhancer '" + command_ +
                                     "' returned a frame of the wrong size");
        return result;
    }

  private:
    std::string command_;
    int scale_;
    std::string workdir_;
};

}  // namespace tinyvsr
