#pragma once

// Cosine noise schedule with v-prediction algebra and deterministic
// (DDIM-style, zero stochasticity) stepping, plus the SDEdit partial-noise
// start used to shorten the trajectory on upsampled low-quality input.
//
//   alpha_t = cos(pi*t / 2T), sigma_t = sin(pi*t / 2T), alpha_T clamped to 0
//   z_t = alpha_t z0 + sigma_t eps
//   v   = alpha_t eps - sigma_t z0
//   z0  = alpha_t z_t - sigma_t v,  eps = sigma_t z_t + alpha_t v

#include "tinyvsr/tensor.hpp"

namespace tinyvsr {

template <typename T>
struct NoiseSchedule {
    int num_steps = 0;                    // T
    std::vector<T> alpha;                 // size T+1
    std::vector<T> sigma;                 // size T+1
    std::vector<T> timestep_embed_values; // size T+1, fed to the time embedding

    static NoiseSchedule cosine(int steps) {
        if (steps < 1) throw std::out_of_range("schedule: steps must be >= 1");
        NoiseSchedule s;
        s.num_steps = steps;
        s.alpha.resize(steps + 1);
        s.sigma.resize(steps + 1);
        s.timestep_embed_values.resize(steps + 1);
        for (int t = 0; t <= steps; ++t) {
            T phase = static_cast<T>(M_PI) * static_cast<T>(t) / (T(2) * static_cast<T>(steps));
            s.alpha[t] = std::cos(phase);
            s.sigma[t] = std::sin(phase);
            s.timestep_embed_values[t] = static_cast<T>(t) / static_cast<T>(steps);
        }
        s.alpha[0] = T(1);
        s.sigma[0] = T(0);
        s.alpha[steps] = T(0);
        s.sigma[steps] = T(1);
        return s;
    }

    void check_step(int t) const {
        if (t < 0 || t > num_steps) throw std::out_of_range("schedule: step index out of range");
    }
};

struct SdeditConfig {
    double strength = 0.6;  // fraction of the schedule replaced by noising the input
    int total_steps = 30;

    // round-half-up, so 30 * 0.6 -> 18
    int remaining_steps() const {
        if (strength <= 0.0 || strength > 1.0)
            throw std::out_of_range("sdedit: strength must be in (0,1]");
        int r = static_cast<int>(std::floor(strength * total_steps + 0.5));
        return std::clamp(r, 1, total_steps);
    }
};

template <typename T>
Tensor<T> add_noise(const Tensor<T>& z0, const Tensor<T>& eps, int t, const NoiseSchedule<T>& sched) {
    check_same_shape(z0, eps, "add_noise");
    sched.check_step(t);
    Tensor<T> out(z0.shape());
    T a = sched.alpha[t], s = sched.sigma[t];
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + s * eps[i];
    return out;
}

template <typename T>
Tensor<T> v_target(const Tensor<T>& z0, const Tensor<T>& eps, int t, const NoiseSchedule<T>& sched) {
    check_same_shape(z0, eps, "v_target");
    sched.check_step(t);
    Tensor<T> out(z0.shape());
    T a = sched.alpha[t], s = sched.sigma[t];
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a * eps[i] - s * z0[i];
    return out;
}

// Recover (z0_hat, eps_hat) from z_t and a v prediction.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> recover_from_v(const Tensor<T>& z_t, const Tensor<T>& v, int t,
                                               const NoiseSchedule<T>& sched) {
    check_same_shape(z_t, v, "recover_from_v");
    sched.check_step(t);
    Tensor<T> z0(z_t.shape()), eps(z_t.shape());
    T a = sched.alpha[t], s = sched.sigma[t];
    for (int64_t i = 0; i < z_t.size(); ++i) {
        z0[i] = a * z_t[i] - s * v[i];
        eps[i] = s * z_t[i] + a * v[i];
    }
    return {std::move(z0), std::move(eps)};
}

template <typename T>
Tensor<T> denoise_step(const Tensor<T>& z_t, const Tensor<T>& v_pred, int t, int t_next,
                       const NoiseSchedule<T>& sched) {
    check_same_shape(z_t, v_pred, "denoise_step");
    sched.check_step(t);
    sched.check_step(t_next);
    if (t_next >= t) throw std::out_of_range("denoise_step: t_next must be < t");
    auto [z0, eps] = recover_from_v(z_t, v_pred, t, sched);
    Tensor<T> out(z_t.shape());
    T a = sched.alpha[t_next], s = sched.sigma[t_next];
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + s * eps[i];
    return out;
}

// Noise the low-quality latent to the SDEdit start point. Returns the noised
// latent and the start step index; exactly `remaining_steps()` denoising
// iterations remain when stepping t, t-1, ..., 1.
template <typename T>
std::pair<Tensor<T>, int> sdedit_start(const Tensor<T>& lq_latent, const SdeditConfig& cfg,
                                       const NoiseSchedule<T>& sched, RngStream& rng) {
    if (cfg.total_steps != sched.num_steps)
        throw std::invalid_argument("sdedit_start: config/schedule step mismatch");
    int t_start = cfg.remaining_steps();
    Tensor<T> eps = randn<T>(lq_latent.shape(), rng);
    return {add_noise(lq_latent, eps, t_start, sched), t_start};
}

}  // namespace tinyvsr
