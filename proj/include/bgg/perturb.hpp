#pragma once
// Background perturbation pipeline for self-supervised branch training:
// mask dilation, margin fill, mixup with another corpus image, and the final
// background-only composition fed to the personality-wise branch. Every stage
// is a pure function and can be disabled independently.

#include "bgg/dataset.hpp"
#include "bgg/image.hpp"
#include "bgg/rng.hpp"

namespace bgg {

struct PerturbParams {
    int dilation_radius = 2;  // pixels at 32px resolution
    float sigma_lo = 0.75f;
    float sigma_hi = 0.95f;
    bool enable_dilation = true;
    bool enable_fill = true;
    bool enable_mixup = true;

    void validate() const {
        require(dilation_radius >= 0, ErrorKind::config, "dilation_radius must be >= 0");
        require(0.f <= sigma_lo && sigma_lo <= sigma_hi && sigma_hi <= 1.f, ErrorKind::config,
                "sigma range must satisfy 0 <= lo <= hi <= 1");
    }
};

// Morphological dilation with a square structuring element of side 2r+1.
Mask dilate_mask(const Mask& m, int radius);

// Replaces pixels in (mask_aug - mask) by iterative nearest-valid-neighbor
// fill from the background region (mask_aug == 0); everything else unchanged.
Image fill_margin(const Image& img, const Mask& mask, const Mask& mask_aug);

// sigma * img + (1 - sigma) * other, per pixel.
Image mixup(const Image& img, const Image& other, float sigma);

struct PerturbResult {
    Image pg_input;  // perturbed image with the dilated product region zeroed
    Mask mask_aug;
    float sigma_used = 1.f;  // 1 when mixup disabled
};

PerturbResult perturb_background(const AdRecord& record, const Image& other, const PerturbParams& params,
                                 Rng& rng);

}  // namespace bgg
