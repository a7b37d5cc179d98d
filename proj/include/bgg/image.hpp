#pragma once
// Float RGB image in [0,1] and binary product mask, plus the compositing
// helpers used across dataset synthesis, perturbation and inference.

#include <cstdint>
#include <vector>

#include "bgg/error.hpp"
#include "bgg/tensor.hpp"

namespace bgg {

struct Image {
    int h = 0, w = 0, c = 0;
    std::vector<float> v;  // row-major HWC

    Image() = default;
    Image(int h_, int w_, int c_, float fill = 0.f) : h(h_), w(w_), c(c_), v(size_t(h_) * w_ * c_, fill) {}

    float& at(int y, int x, int ch) { return v[(size_t(y) * w + x) * c + ch]; }
    float at(int y, int x, int ch) const { return v[(size_t(y) * w + x) * c + ch]; }
    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }
};

struct Mask {
    int h = 0, w = 0;
    std::vector<uint8_t> v;  // strictly {0,1}

    Mask() = default;
    Mask(int h_, int w_, uint8_t fill = 0) : h(h_), w(w_), v(size_t(h_) * w_, fill) {}

    uint8_t& at(int y, int x) { return v[size_t(y) * w + x]; }
    uint8_t at(int y, int x) const { return v[size_t(y) * w + x]; }
    int64_t count_ones() const {
        int64_t n = 0;
        for (uint8_t b : v) n += b;
        return n;
    }
    bool same_shape(const Image& img) const { return h == img.h && w == img.w; }
};

inline void check_pair(const Image& img, const Mask& m, const char* where) {
    require(m.same_shape(img), ErrorKind::shape, std::string(where) + ": image/mask dimensions differ");
}

// image * mask (keeps pixels where mask==keep, zeroes the rest)
inline Image apply_mask(const Image& img, const Mask& m, uint8_t keep = 1) {
    check_pair(img, m, "apply_mask");
    Image out = img;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            if (m.at(y, x) != keep)
                for (int ch = 0; ch < img.c; ++ch) out.at(y, x, ch) = 0.f;
    return out;
}

// a*M + b*(1-M), bit-exact copies from the sources
inline Image composite(const Image& a, const Image& b, const Mask& m) {
    require(a.same_shape(b), ErrorKind::shape, "composite: image shapes differ");
    check_pair(a, m, "composite");
    Image out = b;
    for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x)
            if (m.at(y, x))
                for (int ch = 0; ch < a.c; ++ch) out.at(y, x, ch) = a.at(y, x, ch);
    return out;
}

inline Image clamp01(Image img) {
    for (auto& x : img.v) x = x < 0.f ? 0.f : (x > 1.f ? 1.f : x);
    return img;
}

inline TensorF image_to_tensor(const Image& img) {
    return TensorF(Shape{img.h, img.w, img.c}, std::vector<float>(img.v));
}

inline Image tensor_to_image(const TensorF& t) {
    require(t.rank() == 3, ErrorKind::shape, "tensor_to_image: rank must be 3");
    Image img(t.dim(0), t.dim(1), t.dim(2));
    img.v = t.v;
    return img;
}

// HSV (h in [0,1)) to RGB in [0,1]
inline void hsv_to_rgb(float h, float s, float vv, float& r, float& g, float& b) {
    h = h - std::floor(h);
    float i = std::floor(h * 6.f);
    float f = h * 6.f - i;
    float p = vv * (1.f - s);
    float q = vv * (1.f - f * s);
    float t = vv * (1.f - (1.f - f) * s);
    switch (static_cast<int>(i) % 6) {
        case 0: r = vv; g = t; b = p; break;
        case 1: r = q; g = vv; b = p; break;
        case 2: r = p; g = vv; b = t; break;
        case 3: r = p; g = q; b = vv; break;
        case 4: r = t; g = p; b = vv; break;
        default: r = vv; g = p; b = q; break;
    }
}

// Mean RGB of the mask==0 region converted to hue in [0,1); returns false if
// the background is empty or grey (undefined hue).
bool mean_background_hue(const Image& img, const Mask& m, float& hue_out);

// Area-average pooling followed by a 0.5 threshold; exact ties round to 1
// (product-preserving). target must divide both mask dimensions.
Mask downsample_mask(const Mask& m, int target_resolution);

}  // namespace bgg
