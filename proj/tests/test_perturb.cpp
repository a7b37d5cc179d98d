#include <doctest.h>

#include "bgg/perturb.hpp"

using namespace bgg;

namespace {

Mask random_mask(int size, uint64_t seed, double density = 0.15) {
    Rng rng(seed);
    Mask m(size, size);
    for (auto& v : m.v) v = rng.uniform() < density ? 1 : 0;
    return m;
}

Image random_image(int size, uint64_t seed) {
    Rng rng(seed);
    Image img(size, size, 3);
    for (auto& v : img.v) v = static_cast<float>(rng.uniform());
    return img;
}

// Brute-force oracle: 1 iff some mask pixel lies within Chebyshev distance r.
bool within_chebyshev(const Mask& m, int y, int x, int r) {
    for (int yy = std::max(0, y - r); yy <= std::min(m.h - 1, y + r); ++yy)
        for (int xx = std::max(0, x - r); xx <= std::min(m.w - 1, x + r); ++xx)
            if (m.at(yy, xx)) return true;
    return false;
}

}  // namespace

TEST_CASE("dilation basics") {
    SUBCASE("radius 0 is identity") {
        Mask m = random_mask(16, 3);
        CHECK(dilate_mask(m, 0).v == m.v);
    }
    SUBCASE("single center pixel becomes a 3x3 block") {
        Mask m(7, 7);
        m.at(3, 3) = 1;
        Mask d = dilate_mask(m, 1);
        CHECK(d.count_ones() == 9);
        for (int y = 2; y <= 4; ++y)
            for (int x = 2; x <= 4; ++x) CHECK(d.at(y, x) == 1);
    }
    SUBCASE("random mask matches the brute-force Chebyshev oracle") {
        Mask m = random_mask(24, 17, 0.08);
        for (int r : {1, 2, 3}) {
            Mask d = dilate_mask(m, r);
            for (int y = 0; y < m.h; ++y)
                for (int x = 0; x < m.w; ++x) {
                    CAPTURE(r);
                    CHECK(d.at(y, x) == (within_chebyshev(m, y, x, r) ? 1 : 0));
                }
        }
    }
    SUBCASE("dilation is extensive and monotone in radius") {
        Mask m = random_mask(20, 23, 0.1);
        Mask prev = m;
        for (int r = 1; r <= 3; ++r) {
            Mask d = dilate_mask(m, r);
            for (int i = 0; i < m.h * m.w; ++i) CHECK(prev.v[size_t(i)] <= d.v[size_t(i)]);
            prev = d;
        }
    }
}

TEST_CASE("margin fill") {
    SUBCASE("empty margin leaves the image unchanged") {
        Image img = random_image(16, 1);
        Mask m = random_mask(16, 2, 0.2);
        Image out = fill_margin(img, m, m);
        CHECK(out.v == img.v);
    }
    SUBCASE("constant background fills the margin with that constant") {
        Image img(16, 16, 3);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                img.at(y, x, 0) = 0.25f;
                img.at(y, x, 1) = 0.5f;
                img.at(y, x, 2) = 0.75f;
            }
        Mask m(16, 16);
        for (int y = 6; y <= 9; ++y)
            for (int x = 6; x <= 9; ++x) m.at(y, x) = 1;
        // product pixels get a different color; fill must come from background
        for (int y = 6; y <= 9; ++y)
            for (int x = 6; x <= 9; ++x) img.at(y, x, 0) = img.at(y, x, 1) = img.at(y, x, 2) = 0.f;
        Mask aug = dilate_mask(m, 2);
        Image out = fill_margin(img, m, aug);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                if (aug.at(y, x) && !m.at(y, x)) {
                    CHECK(out.at(y, x, 0) == doctest::Approx(0.25f));
                    CHECK(out.at(y, x, 1) == doctest::Approx(0.5f));
                    CHECK(out.at(y, x, 2) == doctest::Approx(0.75f));
                }
    }
    SUBCASE("pixels outside the margin are bit-identical") {
        Image img = random_image(24, 5);
        Mask m(24, 24);
        for (int y = 8; y < 14; ++y)
            for (int x = 9; x < 15; ++x) m.at(y, x) = 1;
        Mask aug = dilate_mask(m, 2);
        Image out = fill_margin(img, m, aug);
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x) {
                bool margin = aug.at(y, x) && !m.at(y, x);
                if (!margin)
                    for (int c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == img.at(y, x, c));
            }
    }
    SUBCASE("all-ones dilated mask is degenerate") {
        Image img = random_image(8, 6);
        Mask m(8, 8, 1);
        Mask part(8, 8, 1);
        part.at(0, 0) = 0;  // mask ⊂ mask_aug holds; background empty
        CHECK_THROWS_AS(fill_margin(img, part, m), Error);
    }
    SUBCASE("mask_aug must contain mask") {
        Image img = random_image(8, 7);
        Mask m(8, 8);
        m.at(2, 2) = 1;
        Mask aug(8, 8);  // does not contain m
        CHECK_THROWS_AS(fill_margin(img, m, aug), Error);
    }
}

TEST_CASE("mixup is exact linear interpolation") {
    Image a = random_image(16, 11);
    Image b = random_image(16, 12);
    SUBCASE("endpoints") {
        CHECK(mixup(a, b, 1.f).v == a.v);
        CHECK(mixup(a, b, 0.f).v == b.v);
    }
    SUBCASE("constant case 0.8*0.5 + 0.2*1.0 = 0.6") {
        Image ca(4, 4, 3, 0.5f), cb(4, 4, 3, 1.0f);
        Image out = mixup(ca, cb, 0.8f);
        for (auto v : out.v) CHECK(v == doctest::Approx(0.6f).epsilon(1e-6));
    }
    SUBCASE("exactness on random inputs") {
        Image out = mixup(a, b, 0.37f);
        float worst = 0;
        for (size_t i = 0; i < a.v.size(); ++i)
            worst = std::max(worst, std::abs(out.v[i] - (0.37f * a.v[i] + 0.63f * b.v[i])));
        CHECK(worst <= 1e-6f);
    }
    SUBCASE("shape and range errors") {
        CHECK_THROWS_AS(mixup(a, random_image(8, 1), 0.5f), Error);
        CHECK_THROWS_AS(mixup(a, b, 1.5f), Error);
    }
}

TEST_CASE("perturb_background pipeline") {
    AdRecord rec;
    rec.record_id = "r";
    rec.category_id = 0;
    rec.image = random_image(32, 21);
    rec.mask = Mask(32, 32);
    for (int y = 10; y < 20; ++y)
        for (int x = 12; x < 22; ++x) rec.mask.at(y, x) = 1;
    Image other = random_image(32, 22);

    SUBCASE("all stages disabled reduces to background masking") {
        PerturbParams p;
        p.enable_dilation = p.enable_fill = p.enable_mixup = false;
        Rng rng(1);
        PerturbResult r = perturb_background(rec, other, p, rng);
        Image expect = apply_mask(rec.image, rec.mask, 0);
        CHECK(r.pg_input.v == expect.v);
        CHECK(r.sigma_used == 1.f);
        CHECK(r.mask_aug.v == rec.mask.v);
    }

    SUBCASE("output is exactly zero on the dilated product region") {
        PerturbParams p;
        Rng rng(2);
        PerturbResult r = perturb_background(rec, other, p, rng);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                if (r.mask_aug.at(y, x))
                    for (int c = 0; c < 3; ++c) CHECK(r.pg_input.at(y, x, c) == 0.f);
    }

    SUBCASE("same rng seed replays identically") {
        PerturbParams p;
        Rng r1(33), r2(33);
        PerturbResult a = perturb_background(rec, other, p, r1);
        PerturbResult b = perturb_background(rec, other, p, r2);
        CHECK(a.sigma_used == b.sigma_used);
        CHECK(a.pg_input.v == b.pg_input.v);
    }

    SUBCASE("source record is never mutated") {
        PerturbParams p;
        Rng rng(3);
        Image img_copy = rec.image;
        Mask mask_copy = rec.mask;
        (void)perturb_background(rec, other, p, rng);
        CHECK(rec.image.v == img_copy.v);
        CHECK(rec.mask.v == mask_copy.v);
    }
}

TEST_CASE("sigma distribution matches U(0.75, 0.95)") {
    PerturbParams p;
    Rng rng(123);
    const int n = 10000;
    double sum = 0;
    double lo = 1, hi = 0;
    for (int i = 0; i < n; ++i) {
        double s = rng.uniform(p.sigma_lo, p.sigma_hi);
        sum += s;
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    CHECK(lo >= 0.75);
    CHECK(hi <= 0.95);
    CHECK(std::abs(sum / n - 0.85) <= 0.01);
}
