#pragma once
// Deterministic DDIM-style sampling with optional noisy-reference latent
// initialization and two product-preservation modes. The reverse loop is
// factored over an epsilon callback so tests can drive it with an oracle.

#include <functional>
#include <json.hpp>
#include <optional>

#include "bgg/model.hpp"

namespace bgg {

enum class PreserveMode { final_composite, per_step_blend };

std::string preserve_mode_name(PreserveMode m);
PreserveMode preserve_mode_from_name(const std::string& s);

struct SampleRequest {
    Image product_image;
    Mask product_mask;
    int category_id = 0;
    std::optional<Image> reference_image;
    std::optional<Mask> reference_mask;  // zeroes the reference's own product for the branch input
    bool use_pg = false;                 // requires reference_image and a pg-capable checkpoint
    bool reference_init = true;          // z_T from the noised reference when one is given
    int steps = 50;
    uint64_t seed = 0;
    PreserveMode mode = PreserveMode::final_composite;
};

// Pure-noise latent, or the closed-form q(z_{T-1} | reference) sample.
TensorF init_latent(const Model<float>& model, const Image* reference, Rng& rng);

// Evenly spaced descending timesteps from T-1 to 0 (steps entries).
std::vector<int> ddim_timesteps(int T, int steps);

struct DdimOptions {
    // Clamp each step's z0 prediction to [lo, hi]. The latent codec maps
    // pixels one-to-one, so [0,1] is the exact valid range; without the clamp
    // high-t prediction error is amplified by sqrt(acum[0]/acum[T-1]) through
    // the ladder.
    bool clamp_z0 = false;
    float z0_lo = 0.f;
    float z0_hi = 1.f;
};

// Deterministic (eta = 0) reverse loop. `post_step(z, t_next)` runs after
// each intermediate update, enabling per-step latent blending.
TensorF ddim_reverse(const NoiseSchedule& sched, TensorF z, const std::vector<int>& timesteps,
                     const std::function<TensorF(const TensorF&, int)>& eps_fn,
                     const std::function<void(TensorF&, int)>& post_step = {},
                     const DdimOptions& options = {});

Image generate(Model<float>& model, const SampleRequest& req, nlohmann::json* provenance = nullptr);

struct BatchGenItem {
    bool ok = false;
    Image image;
    std::string error;
    nlohmann::json provenance;
};

// Requests are independently seeded, so results are order-independent; one
// malformed request never poisons the rest.
std::vector<BatchGenItem> batch_generate(Model<float>& model, const std::vector<SampleRequest>& requests);

}  // namespace bgg
