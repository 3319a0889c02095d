#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tinyvsr/enhancer.hpp"

using namespace tinyvsr;
using T = float;

static T mse(const Tensor<T>& a, const Tensor<T>& b) {
    REQUIRE(a.shape() == b.shape());
    double s = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return static_cast<T>(s / a.size());
}

// smooth sinusoid texture so bicubic downsampling is nearly invertible
static Tensor<T> smooth_frame(int h, int w, uint64_t seed) {
    RngStream rng(seed, "smooth");
    Tensor<T> f({1, 3, h, w});
    for (int c = 0; c < 3; ++c) {
        T fx = rng.uniform<T>(T(0.3), T(1.2)), fy = rng.uniform<T>(T(0.3), T(1.2));
        T ph = rng.uniform<T>(T(0), T(6.28));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                f.at(0, c, y, x) =
                    T(0.5) + T(0.4) * std::sin(fx * x * T(0.3) + fy * y * T(0.3) + ph);
    }
    return f;
}

static Tensor<T> box_downsample2(const Tensor<T>& x) {
    int H = x.dim(2) / 2, W = x.dim(3) / 2;
    Tensor<T> out({1, 3, H, W});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx)
                out.at(0, c, y, xx) =
                    (x.at(0, c, 2 * y, 2 * xx) + x.at(0, c, 2 * y + 1, 2 * xx) +
                     x.at(0, c, 2 * y, 2 * xx + 1) + x.at(0, c, 2 * y + 1, 2 * xx + 1)) /
                    T(4);
    return out;
}

TEST_CASE("identity upscaler is bicubic resize") {
    IdentityUpscaler<T> up(2);
    CHECK(up.name() == "identity");
    CHECK(up.target_scale() == 2);
    Tensor<T> c = Tensor<T>::full({1, 3, 8, 8}, T(0.37));
    auto out = up.enhance(c, 0);
    REQUIRE(out.shape() == std::vector<int>({1, 3, 16, 16}));
    for (int64_t i = 0; i < out.size(); ++i) REQUIRE(std::abs(out[i] - T(0.37)) <= T(1e-6));
    CHECK_THROWS_AS(IdentityUpscaler<T>(0), std::invalid_argument);
}

TEST_CASE("oracle enhancer returns the stored ground truth") {
    RngStream rng(7, "oracle");
    Tensor<T> gt = randn<T>({3, 3, 16, 16}, rng);
    OracleEnhancer<T> oracle(gt, 2);
    Tensor<T> dummy({1, 3, 8, 8});
    for (int f = 0; f < 3; ++f) {
        auto out = oracle.enhance(dummy, f);
        REQUIRE(out.shape() == std::vector<int>({1, 3, 16, 16}));
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x) REQUIRE(out.at(0, c, y, x) == gt.at(f, c, y, x));
    }
}

TEST_CASE("tiny residual net starts at bicubic and learns to beat it") {
    TinySRNet<T> net(2, 8, 2024);

    Tensor<T> probe = smooth_frame(12, 12, 99);
    auto up0 = net.enhance(probe, 0);
    auto bic0 = bicubic_resize(probe, 24, 24);
    // zero-initialized residual head: untrained output equals bicubic
    for (int64_t i = 0; i < up0.size(); ++i) REQUIRE(up0[i] == bic0[i]);

    std::vector<std::pair<Tensor<T>, Tensor<T>>> pairs;
    for (int i = 0; i < 8; ++i) {
        auto hq = smooth_frame(24, 24, 100 + i);
        pairs.emplace_back(box_downsample2(hq), hq);
    }
    auto losses = net.fit(pairs, 240, T(2e-3));
    REQUIRE(losses.back() < losses.front());

    // held-out comparison against plain bicubic
    double net_mse = 0, bic_mse = 0;
    for (int i = 0; i < 4; ++i) {
        auto hq = smooth_frame(24, 24, 500 + i);
        auto lq = box_downsample2(hq);
        net_mse += mse(net.enhance(lq, 0), hq);
        bic_mse += mse(bicubic_resize(lq, 24, 24), hq);
    }
    T psnr_net = T(10) * std::log10(T(4) / static_cast<T>(net_mse));
    T psnr_bic = T(10) * std::log10(T(4) / static_cast<T>(bic_mse));
    REQUIRE(psnr_net > psnr_bic);
}

TEST_CASE("external enhancer exchanges PNG files with a subprocess") {
    auto work = (std::filesystem::temp_directory_path() / "tinyvsr-test-ext").string();
    std::filesystem::remove_all(work);

    SECTION("a copy command acts as a scale-1 enhancer") {
        ExternalEnhancer<T> ext("cp", 1, work);
        CHECK(ext.name() == "external:cp");
        RngStream rng(8, "ext");
        Tensor<T> frame({1, 3, 8, 8});
        for (int64_t i = 0; i < frame.size(); ++i)
            frame[i] = static_cast<T>(rng.uniform_int(0, 255)) / T(255);
        auto out = ext.enhance(frame, 0);
        REQUIRE(out.shape() == frame.shape());
        for (int64_t i = 0; i < frame.size(); ++i)
            REQUIRE(std::abs(out[i] - frame[i]) <= T(1e-6));
    }
    SECTION("nonzero exit status surfaces the command") {
        ExternalEnhancer<T> bad("false", 1, work);
        CHECK_THROWS_WITH(bad.enhance(Tensor<T>::zeros({1, 3, 4, 4}), 0),
                          Catch::Matchers::ContainsSubstring("false"));
    }
    SECTION("wrong output size is rejected") {
        ExternalEnhancer<T> wrong("cp", 2, work);  // claims scale 2, copies at scale 1
        CHECK_THROWS_WITH(wrong.enhance(Tensor<T>::zeros({1, 3, 4, 4}), 1),
                          Catch::Matchers::ContainsSubstring("wrong size"));
    }
}
