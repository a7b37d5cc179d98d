#include "bgg/perturb.hpp"

#include <algorithm>

namespace bgg {

Mask dilate_mask(const Mask& m, int radius) {
    require(radius >= 0, ErrorKind::argument, "dilate_mask: radius must be >= 0");
    if (radius == 0) return m;
    Mask out(m.h, m.w);
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
            if (!m.at(y, x)) continue;
            int y0 = std::max(0, y - radius), y1 = std::min(m.h - 1, y + radius);
            int x0 = std::max(0, x - radius), x1 = std::min(m.w - 1, x + radius);
            for (int yy = y0; yy <= y1; ++yy)
                for (int xx = x0; xx <= x1; ++xx) out.at(yy, xx) = 1;
        }
    return out;
}

Image fill_margin(const Image& img, const Mask& mask, const Mask& mask_aug) {
    check_pair(img, mask, "fill_margin");
    check_pair(img, mask_aug, "fill_margin");
    for (int i = 0; i < mask.h * mask.w; ++i)
        require(mask.v[size_t(i)] <= mask_aug.v[size_t(i)], ErrorKind::argument,
                "fill_margin: mask_aug must contain mask");

    // margin = mask_aug - mask; sources = background (mask_aug == 0)
    std::vector<uint8_t> valid(size_t(img.h) * img.w, 0);
    int64_t n_margin = 0, n_valid = 0;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            if (!mask_aug.at(y, x)) {
                valid[size_t(y) * img.w + x] = 1;
                ++n_valid;
            } else if (!mask.at(y, x)) {
                ++n_margin;
            }
        }
    if (n_margin == 0) return img;
    require(n_valid > 0, ErrorKind::degenerate, "fill_margin: dilated mask covers the whole image");

    Image out = img;
    // Synchronous rounds: a margin pixel becomes the average of its already
    // valid 4-neighbors; each round advances the frontier by one pixel of
    // Manhattan distance. Deterministic by construction.
    std::vector<uint8_t> next_valid = valid;
    bool progress = true;
    while (n_margin > 0 && progress) {
        progress = false;
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) {
                if (valid[size_t(y) * img.w + x] || !mask_aug.at(y, x) || mask.at(y, x)) continue;
                float acc[3] = {0, 0, 0};
                int cnt = 0;
                const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    int yy = y + dy[k], xx = x + dx[k];
                    if (yy < 0 || yy >= img.h || xx < 0 || xx >= img.w) continue;
                    if (!valid[size_t(yy) * img.w + xx]) continue;
                    for (int c = 0; c < img.c; ++c) acc[c] += out.at(yy, xx, c);
                    ++cnt;
                }
                if (cnt > 0) {
                    for (int c = 0; c < img.c; ++c) out.at(y, x, c) = acc[c] / cnt;
                    next_valid[size_t(y) * img.w + x] = 1;
                    --n_margin;
                    progress = true;
                }
            }
        valid = next_valid;
    }
    if (n_margin > 0) {
        // Margin pixels fully enclosed by the product region: use the global
        // background mean.
        float mean[3] = {0, 0, 0};
        int64_t cnt = 0;
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                if (!mask_aug.at(y, x)) {
                    for (int c = 0; c < img.c; ++c) mean[c] += img.at(y, x, c);
                    ++cnt;
                }
        for (int c = 0; c < img.c; ++c) mean[c] /= static_cast<float>(cnt);
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                if (mask_aug.at(y, x) && !mask.at(y, x) && !valid[size_t(y) * img.w + x])
                    for (int c = 0; c < img.c; ++c) out.at(y, x, c) = mean[c];
    }
    return out;
}

Image mixup(const Image& img, const Image& other, float sigma) {
    require(img.same_shape(other), ErrorKind::shape, "mixup: image shapes differ");
    require(sigma >= 0.f && sigma <= 1.f, ErrorKind::argument, "mixup: sigma must lie in [0,1]");
    Image out(img.h, img.w, img.c);
    for (size_t i = 0; i < img.v.size(); ++i) out.v[i] = sigma * img.v[i] + (1.f - sigma) * other.v[i];
    return out;
}

PerturbResult perturb_background(const AdRecord& record, const Image& other, const PerturbParams& params,
                                 Rng& rng) {
    params.validate();
    check_pair(record.image, record.mask, "perturb_background");

    PerturbResult res;
    res.mask_aug = params.enable_dilation ? dilate_mask(record.mask, params.dilation_radius) : record.mask;
    Image img = params.enable_fill ? fill_margin(record.image, record.mask, res.mask_aug) : record.image;
    if (params.enable_mixup) {
        res.sigma_used = static_cast<float>(rng.uniform(params.sigma_lo, params.sigma_hi));
        img = mixup(img, other, res.sigma_used);
    } else {
        res.sigma_used = 1.f;
    }
    res.pg_input = apply_mask(img, res.mask_aug, /*keep=*/0);
    return res;
}

}  // namespace bgg
