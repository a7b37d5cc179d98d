#include "bgg/sample.hpp"

#include <cmath>

namespace bgg {

using nlohmann::json;

std::string preserve_mode_name(PreserveMode m) {
    return m == PreserveMode::final_composite ? "final_composite" : "per_step_blend";
}

PreserveMode preserve_mode_from_name(const std::string& s) {
    if (s == "final_composite") return PreserveMode::final_composite;
    if (s == "per_step_blend") return PreserveMode::per_step_blend;
    fail(ErrorKind::argument, "unknown preserve mode: " + s);
}

TensorF init_latent(const Model<float>& model, const Image* reference, Rng& rng) {
    const int hs = model.latent_size(), cz = model.latent_channels();
    Shape shape{hs, hs, cz};
    TensorF eps = gaussian_like(shape, rng);
    if (reference == nullptr) return eps;
    TensorF z0 = encode_latent(*reference, model.config().denoiser.codec_factor);
    return forward_noise(z0, model.schedule().T - 1, eps, model.schedule());
}

std::vector<int> ddim_timesteps(int T, int steps) {
    require(steps >= 1 && steps <= T, ErrorKind::argument, "steps must lie in [1, T]");
    std::vector<int> out;
    if (steps == 1) {
        out.push_back(T - 1);
        return out;
    }
    for (int i = 0; i < steps; ++i) {
        long long t = static_cast<long long>(steps - 1 - i) * (T - 1) / (steps - 1);
        out.push_back(static_cast<int>(t));
    }
    return out;
}

TensorF ddim_reverse(const NoiseSchedule& sched, TensorF z, const std::vector<int>& timesteps,
                     const std::function<TensorF(const TensorF&, int)>& eps_fn,
                     const std::function<void(TensorF&, int)>& post_step, const DdimOptions& options) {
    require(!timesteps.empty(), ErrorKind::argument, "ddim_reverse: no timesteps");
    for (size_t i = 0; i < timesteps.size(); ++i) {
        int t = timesteps[i];
        TensorF eps = eps_fn(z, t);
        require(eps.same_shape(z), ErrorKind::shape, "eps prediction shape mismatch");
        float a = sched.sqrt_ac[size_t(t)];
        float s = sched.sqrt_one_minus_ac[size_t(t)];
        TensorF z0(z.shape);
        for (int64_t k = 0; k < z.numel(); ++k) z0[k] = (z[k] - s * eps[k]) / a;
        if (options.clamp_z0)
            for (auto& v : z0.v) v = v < options.z0_lo ? options.z0_lo : (v > options.z0_hi ? options.z0_hi : v);
        if (i + 1 < timesteps.size()) {
            int tn = timesteps[i + 1];
            float an = sched.sqrt_ac[size_t(tn)];
            float sn = sched.sqrt_one_minus_ac[size_t(tn)];
            for (int64_t k = 0; k < z.numel(); ++k) z[k] = an * z0[k] + sn * eps[k];
            if (post_step) post_step(z, tn);
        } else {
            z = std::move(z0);
        }
    }
    return z;
}

Image generate(Model<float>& model, const SampleRequest& req, json* provenance) {
    const auto& mc = model.config();
    check_pair(req.product_image, req.product_mask, "generate");
    require(req.product_image.h == mc.denoiser.image_size && req.product_image.w == mc.denoiser.image_size,
            ErrorKind::shape, "product image size does not match the checkpoint");
    require(req.category_id >= 0 && req.category_id < static_cast<int>(mc.categories.size()),
            ErrorKind::lookup, "unknown category id " + std::to_string(req.category_id));
    require(req.steps >= 1 && req.steps <= model.schedule().T, ErrorKind::argument,
            "steps must lie in [1, T]");
    if (req.use_pg) {
        require(mc.has_pg, ErrorKind::config,
                "personality branch requested but the checkpoint has no PG branch");
        require(req.reference_image.has_value(), ErrorKind::config,
                "personality branch requested without a reference image");
    }
    if (req.reference_image) {
        require(req.reference_image->h == mc.denoiser.image_size &&
                    req.reference_image->w == mc.denoiser.image_size,
                ErrorKind::shape, "reference image size does not match the checkpoint");
        if (req.reference_mask)
            check_pair(*req.reference_image, *req.reference_mask, "generate(reference)");
    }

    const int f = mc.denoiser.codec_factor;
    Rng rng(req.seed);
    Rng init_rng = rng.fork("init");
    Rng blend_rng = rng.fork("blend");

    const Image* init_ref =
        (req.reference_image && req.reference_init) ? &*req.reference_image : nullptr;
    TensorF z = init_latent(model, init_ref, init_rng);

    TensorF cg_hint;
    std::vector<const Mask*> masks{&req.product_mask};
    if (mc.has_cg) cg_hint = encode_latent(apply_mask(req.product_image, req.product_mask, 1), f);

    TensorF pg_hint;
    if (req.use_pg) {
        Image ref_bg = req.reference_mask ? apply_mask(*req.reference_image, *req.reference_mask, 0)
                                          : *req.reference_image;
        pg_hint = encode_latent(ref_bg, f);
    }

    std::vector<int> cats{req.category_id};
    const int hs = model.latent_size(), cz = model.latent_channels();

    auto eps_fn = [&](const TensorF& zt, int t) -> TensorF {
        GraphF g(false);
        TensorF zb(Shape{1, hs, hs, cz});
        std::copy_n(zt.data(), zt.numel(), zb.data());
        auto zv = g.input(zb);
        std::vector<int> ts{t};
        auto pv = model.build_prompts(g, cats);
        std::vector<GraphF::Var> cg_res, pg_res;
        std::vector<GraphF::Var>* cg_ptr = nullptr;
        std::vector<GraphF::Var>* pg_ptr = nullptr;
        if (mc.has_cg) {
            TensorF hb(Shape{1, hs, hs, cz});
            std::copy_n(cg_hint.data(), cg_hint.numel(), hb.data());
            AttnMasks<float> am = model.build_attn_masks(masks);
            cg_res = model.build_cg(g, g.input(hb), zv, ts, pv, &am);
            cg_ptr = &cg_res;
        }
        if (req.use_pg) {
            TensorF hb(Shape{1, hs, hs, cz});
            std::copy_n(pg_hint.data(), pg_hint.numel(), hb.data());
            pg_res = model.build_pg(g, g.input(hb), zv, ts);
            pg_ptr = &pg_res;
        }
        auto out = model.build_predict(g, zv, ts, pv, cg_ptr, pg_ptr);
        TensorF eps = g.val(out);
        eps.shape = zt.shape;
        return eps;
    };

    std::function<void(TensorF&, int)> post_step;
    TensorF z_product;
    Mask latent_mask;
    if (req.mode == PreserveMode::per_step_blend) {
        z_product = encode_latent(req.product_image, f);
        latent_mask = downsample_mask(req.product_mask, model.latent_size());
        post_step = [&](TensorF& zt, int t_next) {
            TensorF eb = gaussian_like(zt.shape, blend_rng);
            TensorF z_known = forward_noise(z_product, t_next, eb, model.schedule());
            const int cl = model.latent_channels();
            for (int y = 0; y < latent_mask.h; ++y)
                for (int x = 0; x < latent_mask.w; ++x)
                    if (latent_mask.at(y, x))
                        for (int c = 0; c < cl; ++c) {
                            int64_t idx = (int64_t(y) * latent_mask.w + x) * cl + c;
                            zt[idx] = z_known[idx];
                        }
        };
    }

    std::vector<int> ts = ddim_timesteps(model.schedule().T, req.steps);
    DdimOptions opts;
    opts.clamp_z0 = true;  // latents are pixel values; [0,1] is the exact range
    TensorF z0 = ddim_reverse(model.schedule(), std::move(z), ts, eps_fn, post_step, opts);
    Image gen = clamp01(decode_latent(z0, f));
    Image out = composite(req.product_image, gen, req.product_mask);

    if (provenance) {
        char seed_hex[32];
        std::snprintf(seed_hex, sizeof seed_hex, "%016llx", static_cast<unsigned long long>(req.seed));
        *provenance = {{"seed", seed_hex},
                       {"steps", req.steps},
                       {"mode", preserve_mode_name(req.mode)},
                       {"category_id", req.category_id},
                       {"use_pg", req.use_pg},
                       {"reference_init", req.reference_init && req.reference_image.has_value()},
                       {"has_reference", req.reference_image.has_value()}};
    }
    return out;
}

std::vector<BatchGenItem> batch_generate(Model<float>& model, const std::vector<SampleRequest>& requests) {
    std::vector<BatchGenItem> out(requests.size());
    for (size_t i = 0; i < requests.size(); ++i) {
        try {
            out[i].image = generate(model, requests[i], &out[i].provenance);
            out[i].ok = true;
        } catch (const std::exception& e) {
            out[i].ok = false;
            out[i].error = e.what();
        }
    }
    return out;
}

}  // namespace bgg
