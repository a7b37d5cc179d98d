#include "bgg/schedule.hpp"

#include <cmath>

#include "bgg/error.hpp"

namespace bgg {

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
    require(T >= 1, ErrorKind::config, "schedule: T must be >= 1");
    std::vector<float> betas(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
        double frac = T == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(T - 1);
        betas[size_t(t)] = static_cast<float>(beta_start + (beta_end - beta_start) * frac);
    }
    return from_betas(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<float> betas) {
    NoiseSchedule s;
    s.T = static_cast<int>(betas.size());
    s.betas = std::move(betas);
    s.alphas_cumprod.resize(s.betas.size());
    s.sqrt_ac.resize(s.betas.size());
    s.sqrt_one_minus_ac.resize(s.betas.size());
    double acc = 1.0;
    for (size_t t = 0; t < s.betas.size(); ++t) {
        acc *= 1.0 - static_cast<double>(s.betas[t]);
        s.alphas_cumprod[t] = static_cast<float>(acc);
        s.sqrt_ac[t] = static_cast<float>(std::sqrt(acc));
        s.sqrt_one_minus_ac[t] = static_cast<float>(std::sqrt(1.0 - acc));
    }
    s.validate();
    return s;
}

void NoiseSchedule::validate() const {
    require(T >= 1 && static_cast<int>(betas.size()) == T, ErrorKind::config, "schedule: empty");
    float prev_beta = 0.f;
    float prev_ac = 1.f;
    for (int t = 0; t < T; ++t) {
        float b = betas[size_t(t)];
        require(b > 0.f && b < 1.f, ErrorKind::config, "schedule: betas must lie in (0,1)");
        require(b >= prev_beta, ErrorKind::config, "schedule: betas must be non-decreasing");
        float ac = alphas_cumprod[size_t(t)];
        require(ac > 0.f && ac < 1.f, ErrorKind::config, "schedule: alphas_cumprod must lie in (0,1)");
        require(ac < prev_ac, ErrorKind::config, "schedule: alphas_cumprod must be strictly decreasing");
        prev_beta = b;
        prev_ac = ac;
    }
}

TensorF forward_noise(const TensorF& z0, int t, const TensorF& eps, const NoiseSchedule& sched) {
    require(t >= 0 && t < sched.T, ErrorKind::argument, "forward_noise: timestep out of range");
    require(z0.same_shape(eps), ErrorKind::shape, "forward_noise: z0/eps shape mismatch");
    float a = sched.sqrt_ac[size_t(t)];
    float b = sched.sqrt_one_minus_ac[size_t(t)];
    TensorF out(z0.shape);
    for (int64_t i = 0; i < z0.numel(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

TensorF gaussian_like(const Shape& shape, Rng& rng) {
    TensorF out(shape);
    for (auto& x : out.v) x = static_cast<float>(rng.normal());
    return out;
}

}  // namespace bgg
