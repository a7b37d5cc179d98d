#include <doctest.h>

#include "bgg/codec.hpp"
#include "bgg/schedule.hpp"

using namespace bgg;

TEST_CASE("space-to-depth codec shapes and exact inversion") {
    Rng rng(5);
    Image img(32, 32, 3);
    for (auto& v : img.v) v = static_cast<float>(rng.uniform());

    TensorF z = encode_latent(img, 2);
    CHECK(z.shape == Shape{16, 16, 12});

    Image back = decode_latent(z, 2);
    CHECK(back.h == 32);
    CHECK(back.v == img.v);  // bit-exact round trip

    // encode(decode(z)) == z on valid latents
    TensorF z2 = encode_latent(back, 2);
    CHECK(z2.v == z.v);

    // constant image stays constant in latent space
    Image flat(32, 32, 3, 0.5f);
    TensorF zf = encode_latent(flat, 2);
    for (auto v : zf.v) CHECK(v == 0.5f);

    // all-zero latent decodes to all-zero image
    Image zero = decode_latent(TensorF(Shape{16, 16, 12}), 2);
    for (auto v : zero.v) CHECK(v == 0.f);

    CHECK_THROWS_AS(encode_latent(Image(30, 30, 3), 4), Error);
}

TEST_CASE("noise schedule invariants") {
    NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    CHECK(s.T == 1000);
    CHECK(s.betas.front() == doctest::Approx(1e-4));
    CHECK(s.betas.back() == doctest::Approx(0.02));
    for (int t = 1; t < s.T; ++t) {
        CHECK(s.betas[size_t(t)] >= s.betas[size_t(t - 1)]);
        CHECK(s.alphas_cumprod[size_t(t)] < s.alphas_cumprod[size_t(t - 1)]);
    }
    // cumulative product definition
    double acc = 1.0;
    for (int t = 0; t < s.T; ++t) {
        acc *= 1.0 - double(s.betas[size_t(t)]);
        CHECK(s.alphas_cumprod[size_t(t)] == doctest::Approx(acc).epsilon(1e-5));
    }
    CHECK_THROWS_AS(NoiseSchedule::from_betas({0.5f, 0.2f}), Error);   // decreasing betas
    CHECK_THROWS_AS(NoiseSchedule::from_betas({0.0f, 0.2f}), Error);   // beta out of (0,1)
}

TEST_CASE("forward_noise closed form") {
    NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    Rng rng(7);
    TensorF z0 = TensorF::randn({4, 4, 3}, rng);

    SUBCASE("t=0 with tiny beta stays close to z0") {
        TensorF eps = TensorF::randn({4, 4, 3}, rng);
        TensorF zt = forward_noise(z0, 0, eps, s);
        // sqrt(1 - 1e-4) ~ 0.99995; noise contribution is 0.01 * eps
        CHECK(max_abs_diff(zt, z0) < 0.06f);
    }

    SUBCASE("zero eps gives sqrt(acum)*z0 exactly") {
        TensorF eps(Shape{4, 4, 3});
        TensorF zt = forward_noise(z0, 500, eps, s);
        float a = s.sqrt_ac[500];
        for (int64_t i = 0; i < z0.numel(); ++i) CHECK(zt[i] == a * z0[i]);
    }

    SUBCASE("hand arithmetic: acum=0.36 maps unit noise to 0.8") {
        // single-step schedule with beta=0.64 has alphas_cumprod = {0.36}
        NoiseSchedule s1 = NoiseSchedule::from_betas({0.64f});
        TensorF zeros(Shape{2, 2, 3});
        TensorF ones(Shape{2, 2, 3}, 1.f);
        TensorF zt = forward_noise(zeros, 0, ones, s1);
        for (auto v : zt.v) CHECK(v == doctest::Approx(0.8f).epsilon(1e-6));
    }

    SUBCASE("timestep range checked") {
        TensorF eps(Shape{4, 4, 3});
        CHECK_THROWS_AS(forward_noise(z0, 1000, eps, s), Error);
        CHECK_THROWS_AS(forward_noise(z0, -1, eps, s), Error);
    }
}

TEST_CASE("forward_noise empirical moments at fixed t") {
    NoiseSchedule s = NoiseSchedule::linear(1000, 1e-4, 0.02);
    int t = 400;
    Rng rng(11);
    TensorF z0(Shape{1}, std::vector<float>{0.7f});
    const int n = 10000;
    double sum = 0, sumsq = 0;
    for (int i = 0; i < n; ++i) {
        TensorF eps(Shape{1}, std::vector<float>{static_cast<float>(rng.normal())});
        float v = forward_noise(z0, t, eps, s)[0];
        sum += v;
        sumsq += double(v) * v;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    double expect_mean = double(s.sqrt_ac[size_t(t)]) * 0.7;
    double expect_var = 1.0 - double(s.alphas_cumprod[size_t(t)]);
    double sigma = std::sqrt(expect_var);
    CHECK(std::abs(mean - expect_mean) <= 3.0 * sigma / std::sqrt(double(n)));
    CHECK(std::abs(var - expect_var) / expect_var <= 0.05);
}

TEST_CASE("mask downsampling") {
    Mask m(4, 4, 1);
    SUBCASE("identity resolution") {
        Mask d = downsample_mask(m, 4);
        CHECK(d.v == m.v);
    }
    SUBCASE("all ones pools to all ones") {
        Mask d = downsample_mask(m, 2);
        CHECK(d.count_ones() == 4);
    }
    SUBCASE("three of four pixels pool to 1; exact tie rounds to 1") {
        Mask q(2, 2);
        q.at(0, 0) = q.at(0, 1) = q.at(1, 0) = 1;  // 0.75 -> 1
        CHECK(downsample_mask(q, 1).at(0, 0) == 1);
        Mask h2(2, 2);
        h2.at(0, 0) = h2.at(0, 1) = 1;  // exactly 0.5 -> 1
        CHECK(downsample_mask(h2, 1).at(0, 0) == 1);
        Mask one(2, 2);
        one.at(0, 0) = 1;  // 0.25 -> 0
        CHECK(downsample_mask(one, 1).at(0, 0) == 0);
    }
    SUBCASE("non-divisible target rejected") {
        CHECK_THROWS_AS(downsample_mask(m, 3), Error);
    }
}
