#include "bgg/image.hpp"

#include <algorithm>
#include <cmath>

namespace bgg {

bool mean_background_hue(const Image& img, const Mask& m, float& hue_out) {
    check_pair(img, m, "mean_background_hue");
    double r = 0, g = 0, b = 0;
    int64_t n = 0;
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            if (!m.at(y, x)) {
                r += img.at(y, x, 0);
                g += img.at(y, x, 1);
                b += img.at(y, x, 2);
                ++n;
            }
    if (n == 0) return false;
    r /= double(n);
    g /= double(n);
    b /= double(n);
    double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    double d = mx - mn;
    if (d < 1e-9) return false;
    double h;
    if (mx == r)
        h = std::fmod((g - b) / d, 6.0);
    else if (mx == g)
        h = (b - r) / d + 2.0;
    else
        h = (r - g) / d + 4.0;
    h /= 6.0;
    if (h < 0) h += 1.0;
    hue_out = static_cast<float>(h);
    return true;
}

Mask downsample_mask(const Mask& m, int target_resolution) {
    require(target_resolution >= 1, ErrorKind::argument, "downsample_mask: target must be >= 1");
    require(m.h % target_resolution == 0 && m.w % target_resolution == 0, ErrorKind::argument,
            "downsample_mask: target " + std::to_string(target_resolution) + " does not divide mask size");
    int by = m.h / target_resolution, bx = m.w / target_resolution;
    int block = by * bx;
    Mask out(target_resolution, target_resolution);
    for (int y = 0; y < target_resolution; ++y)
        for (int x = 0; x < target_resolution; ++x) {
            int ones = 0;
            for (int dy = 0; dy < by; ++dy)
                for (int dx = 0; dx < bx; ++dx) ones += m.at(y * by + dy, x * bx + dx);
            out.at(y, x) = (2 * ones >= block) ? 1 : 0;
        }
    return out;
}

}  // namespace bgg
