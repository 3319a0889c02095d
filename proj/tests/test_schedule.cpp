#include <catch2/catch_amalgamated.hpp>

#include "tinyvsr/schedule.hpp"

using namespace tinyvsr;

TEST_CASE("cosine schedule invariants") {
    for (int steps : {1, 5, 30, 100}) {
        auto s = NoiseSchedule<double>::cosine(steps);
        REQUIRE(static_cast<int>(s.alpha.size()) == steps + 1);
        CHECK(s.alpha[0] == 1.0);
        CHECK(s.sigma[0] == 0.0);
        CHECK(s.alpha[steps] == 0.0);
        for (int t = 0; t <= steps; ++t)
            CHECK(std::abs(s.alpha[t] * s.alpha[t] + s.sigma[t] * s.sigma[t] - 1.0) < 1e-9);
        for (int t = 1; t <= steps; ++t) {
            CHECK(s.alpha[t] < s.alpha[t - 1]);
            CHECK(s.sigma[t] > s.sigma[t - 1]);
        }
    }
}

TEST_CASE("add_noise boundaries") {
    auto s = NoiseSchedule<float>::cosine(8);
    RngStream rng(1);
    auto z0 = randn<float>({2, 4, 4, 1}, rng);
    auto eps = randn<float>({2, 4, 4, 1}, rng);

    auto at0 = add_noise(z0, eps, 0, s);
    for (int64_t i = 0; i < z0.size(); ++i) CHECK(at0[i] == z0[i]);

    auto atT = add_noise(z0, eps, 8, s);
    float mx = 0;
    for (int64_t i = 0; i < z0.size(); ++i) mx = std::max(mx, std::abs(atT[i] - eps[i]));
    CHECK(mx <= 1e-6f);
}

TEST_CASE("add_noise at alpha = cos(pi/4)") {
    // T=2, t=1: phase = pi/4 exactly
    auto s = NoiseSchedule<double>::cosine(2);
    Tensor<double> z0({2, 4, 4, 1});
    z0.fill(1.0);
    Tensor<double> eps({2, 4, 4, 1});
    auto out = add_noise(z0, eps, 1, s);
    for (int64_t i = 0; i < out.size(); ++i) CHECK(std::abs(out[i] - std::sqrt(2.0) / 2.0) < 1e-9);
}

TEST_CASE("add_noise error paths") {
    auto s = NoiseSchedule<float>::cosine(4);
    Tensor<float> a({2, 2}), b({2, 3});
    CHECK_THROWS_AS(add_noise(a, b, 1, s), std::invalid_argument);
    Tensor<float> c({2, 2});
    CHECK_THROWS_AS(add_noise(a, c, 5, s), std::out_of_range);
    CHECK_THROWS_AS(add_noise(a, c, -1, s), std::out_of_range);
}

TEST_CASE("v_target identities") {
    auto s = NoiseSchedule<double>::cosine(10);
    RngStream rng(2);
    auto z0 = randn<double>({3, 2, 4, 4}, rng);
    auto eps = randn<double>({3, 2, 4, 4}, rng);

    auto v0 = v_target(z0, eps, 0, s);
    for (int64_t i = 0; i < v0.size(); ++i) CHECK(v0[i] == eps[i]);

    // z0 == eps: v = (alpha - sigma) z0
    auto veq = v_target(z0, z0, 4, s);
    for (int64_t i = 0; i < veq.size(); ++i)
        CHECK(std::abs(veq[i] - (s.alpha[4] - s.sigma[4]) * z0[i]) < 1e-12);
}

TEST_CASE("round-trip recovery identity") {
    auto s = NoiseSchedule<float>::cosine(12);
    RngStream rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto z0 = randn<float>({2, 3, 4, 4}, rng);
        auto eps = randn<float>({2, 3, 4, 4}, rng);
        int t = rng.uniform_int(0, 12);
        auto zt = add_noise(z0, eps, t, s);
        auto v = v_target(z0, eps, t, s);
        auto [z0h, epsh] = recover_from_v(zt, v, t, s);
        for (int64_t i = 0; i < z0.size(); ++i) {
            CHECK(std::abs(z0h[i] - z0[i]) < 1e-6f);
            CHECK(std::abs(epsh[i] - eps[i]) < 1e-6f);
        }
    }
}

TEST_CASE("denoise_step with oracle v is exact over any step subsequence") {
    auto s = NoiseSchedule<float>::cosine(16);
    RngStream rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        auto z0 = randn<float>({2, 2, 4, 4}, rng);
        auto eps = randn<float>({2, 2, 4, 4}, rng);
        // random strictly decreasing subsequence from 16 down to 0
        std::vector<int> steps{16};
        int t = 16;
        while (t > 0) {
            t -= rng.uniform_int(1, 4);
            t = std::max(t, 0);
            steps.push_back(t);
        }
        auto z = add_noise(z0, eps, 16, s);
        for (size_t i = 0; i + 1 < steps.size(); ++i) {
            auto v = v_target(z0, eps, steps[i], s);
            z = denoise_step(z, v, steps[i], steps[i + 1], s);
        }
        float mx = 0;
        for (int64_t i = 0; i < z.size(); ++i) mx = std::max(mx, std::abs(z[i] - z0[i]));
        CHECK(mx <= 1e-5f);
    }
}

TEST_CASE("denoise_step hand value at alpha = sigma = sqrt(2)/2") {
    // T=2, t=1: alpha = sigma = sqrt(2)/2; zero v_pred
    auto s = NoiseSchedule<double>::cosine(2);
    RngStream rng(5);
    auto zt = randn<double>({1, 1, 2, 2}, rng);
    Tensor<double> v(zt.shape());
    auto out = denoise_step(zt, v, 1, 0, s);
    double r = std::sqrt(2.0) / 2.0;
    for (int64_t i = 0; i < zt.size(); ++i) {
        double expect = s.alpha[0] * (r * zt[i]) + s.sigma[0] * (r * zt[i]);
        CHECK(std::abs(out[i] - expect) < 1e-12);
    }
}

TEST_CASE("denoise_step rejects non-decreasing steps") {
    auto s = NoiseSchedule<float>::cosine(4);
    Tensor<float> z({1, 1, 2, 2}), v({1, 1, 2, 2});
    CHECK_THROWS_AS(denoise_step(z, v, 2, 2, s), std::out_of_range);
    CHECK_THROWS_AS(denoise_step(z, v, 2, 3, s), std::out_of_range);
}

TEST_CASE("sdedit start counts") {
    auto s30 = NoiseSchedule<float>::cosine(30);
    RngStream rng(6);
    Tensor<float> lq({1, 2, 4, 4});

    SdeditConfig cfg{0.6, 30};
    auto [z, t_start] = sdedit_start(lq, cfg, s30, rng);
    CHECK(t_start == 18);  // 30 steps at strength 0.6

    SdeditConfig full{1.0, 30};
    auto [z2, t2] = sdedit_start(lq, full, s30, rng);
    CHECK(t2 == 30);

    auto s10 = NoiseSchedule<float>::cosine(10);
    SdeditConfig half{0.5, 10};
    auto [z3, t3] = sdedit_start(lq, half, s10, rng);
    CHECK(t3 == 5);

    SdeditConfig bad{1.5, 30};
    CHECK_THROWS_AS(sdedit_start(lq, bad, s30, rng), std::out_of_range);
    SdeditConfig bad2{0.0, 30};
    CHECK_THROWS_AS(sdedit_start(lq, bad2, s30, rng), std::out_of_range);
}
