#pragma once
// DDPM noise schedule: betas and cumulative alpha products under a fixed
// number of train steps, plus the closed-form forward noising.

#include <vector>

#include "bgg/rng.hpp"
#include "bgg/tensor.hpp"

namespace bgg {

struct NoiseSchedule {
    int T = 0;
    std::vector<float> betas;
    std::vector<float> alphas_cumprod;
    std::vector<float> sqrt_ac;
    std::vector<float> sqrt_one_minus_ac;

    static NoiseSchedule linear(int T = 1000, double beta_start = 1e-4, double beta_end = 0.02);
    static NoiseSchedule from_betas(std::vector<float> betas);

    void validate() const;
};

// sqrt(acum[t]) * z0 + sqrt(1 - acum[t]) * eps
TensorF forward_noise(const TensorF& z0, int t, const TensorF& eps, const NoiseSchedule& sched);

TensorF gaussian_like(const Shape& shape, Rng& rng);

}  // namespace bgg
