#pragma once
// Full conditioned denoiser: backbone UNet, optional category-wise and
// personality-wise branches, prompt encoder, schedule and codec settings.
// Tensor-level entry points evaluate a fresh no-grad graph; the graph-level
// builder is shared with the trainer.

#include <optional>
#include <string>
#include <vector>

#include "bgg/codec.hpp"
#include "bgg/image.hpp"
#include "bgg/schedule.hpp"
#include "bgg/unet.hpp"

namespace bgg {

struct ScheduleConfig {
    int train_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

struct ModelConfig {
    DenoiserConfig denoiser;
    ScheduleConfig schedule;
    std::vector<std::string> categories;
    bool has_cg = false;
    bool has_pg = false;
    bool cg_masked_attention = true;  // false = unmasked-branch ablation
    bool shared_prompt = false;       // true = no-identifier ablation

    void validate() const {
        denoiser.validate();
        require(!categories.empty(), ErrorKind::config, "model requires at least one category");
        require(schedule.train_steps >= 1, ErrorKind::config, "schedule steps must be >= 1");
    }
};

template <typename T>
struct ControlResidualsT {
    std::vector<Tensor<T>> levels;  // encoder order, middle last
};

using ControlResiduals = ControlResidualsT<float>;

template <typename T>
class Model {
public:
    Model(ModelConfig cfg, uint64_t param_seed) : cfg_(std::move(cfg)), param_seed_(param_seed) {
        cfg_.validate();
        Rng root(param_seed);
        sched_ = NoiseSchedule::linear(cfg_.schedule.train_steps, cfg_.schedule.beta_start, cfg_.schedule.beta_end);
        prompts_ = PromptEncoder<T>(reg_, root.fork("prompts"), cfg_.denoiser.prompt_dim, cfg_.categories,
                                    cfg_.shared_prompt);
        backbone_ = UNet<T>(reg_, root.fork("backbone"), "backbone", cfg_.denoiser, CrossMode::plain);
        if (cfg_.has_cg)
            cg_.emplace(reg_, root.fork("cg"), "cg", cfg_.denoiser,
                        cfg_.cg_masked_attention ? CrossMode::masked : CrossMode::plain);
        if (cfg_.has_pg) pg_.emplace(reg_, root.fork("pg"), "pg", cfg_.denoiser, CrossMode::none);
    }

    const ModelConfig& config() const { return cfg_; }
    const NoiseSchedule& schedule() const { return sched_; }
    ParamRegistry<T>& params() { return reg_; }
    PromptEncoder<T>& prompts() { return prompts_; }
    const PromptEncoder<T>& prompts() const { return prompts_; }
    UNet<T>& backbone() { return backbone_; }
    bool has_cg() const { return cg_.has_value(); }
    bool has_pg() const { return pg_.has_value(); }
    ControlBranch<T>& cg() { return *cg_; }
    ControlBranch<T>& pg() { return *pg_; }
    uint64_t param_seed() const { return param_seed_; }

    int latent_size() const { return cfg_.denoiser.latent_size(); }
    int latent_channels() const { return cfg_.denoiser.latent_channels(); }

    // ---- graph-level builders (shared by trainer and tensor-level API) ------

    PromptVars<T> build_prompts(Graph<T>& g, const std::vector<int>& category_ids) const {
        PromptVars<T> pv;
        pv.fg = prompts_.build_fg(g, category_ids);
        pv.bg = prompts_.build_bg(g, category_ids);
        pv.all = g.concat(pv.fg, pv.bg, 1);
        return pv;
    }

    // Masks for every attention resolution of the branch encoders.
    AttnMasks<T> build_attn_masks(const std::vector<const Mask*>& masks) const {
        AttnMasks<T> out;
        int n = static_cast<int>(masks.size());
        std::vector<int> resolutions;
        for (int i = 0; i < cfg_.denoiser.levels(); ++i)
            if (cfg_.denoiser.attn_at(i)) resolutions.push_back(cfg_.denoiser.level_resolution(i));
        int mid_res = cfg_.denoiser.level_resolution(cfg_.denoiser.levels() - 1);
        if (std::find(resolutions.begin(), resolutions.end(), mid_res) == resolutions.end())
            resolutions.push_back(mid_res);
        for (int r : resolutions) {
            Tensor<T> m(Shape{n, r * r});
            for (int i = 0; i < n; ++i) {
                Mask d = downsample_mask(*masks[size_t(i)], r);
                for (int s = 0; s < r * r; ++s) m[int64_t(i) * r * r + s] = static_cast<T>(d.v[size_t(s)]);
            }
            out.by_resolution.emplace_back(r, std::move(m));
        }
        return out;
    }

    std::vector<typename Graph<T>::Var> build_cg(Graph<T>& g, typename Graph<T>::Var hint,
                                                 typename Graph<T>::Var z_t, const std::vector<int>& ts,
                                                 const PromptVars<T>& pv, const AttnMasks<T>* masks) const {
        require(cg_.has_value(), ErrorKind::config, "model has no category-wise branch");
        const AttnMasks<T>* use = cfg_.cg_masked_attention ? masks : nullptr;
        if (cfg_.cg_masked_attention)
            require(use != nullptr, ErrorKind::shape, "cg branch requires attention masks");
        return cg_->forward(g, hint, z_t, ts, pv, use);
    }

    std::vector<typename Graph<T>::Var> build_pg(Graph<T>& g, typename Graph<T>::Var hint,
                                                 typename Graph<T>::Var z_t, const std::vector<int>& ts) const {
        require(pg_.has_value(), ErrorKind::config, "model has no personality-wise branch");
        PromptVars<T> none;
        return pg_->forward(g, hint, z_t, ts, none, nullptr);
    }

    typename Graph<T>::Var build_predict(Graph<T>& g, typename Graph<T>::Var z_t, const std::vector<int>& ts,
                                         const PromptVars<T>& pv,
                                         const std::vector<typename Graph<T>::Var>* cg_res,
                                         const std::vector<typename Graph<T>::Var>* pg_res,
                                         DecoderTaps<T>* taps = nullptr) const {
        return backbone_.forward(g, z_t, ts, pv, cg_res, pg_res, taps);
    }

    // ---- tensor-level operations --------------------------------------------

    // Residuals from the category-wise branch for a batch.
    ControlResidualsT<T> cg_forward(const Tensor<T>& product_latent, const Tensor<T>& z_t,
                                    const std::vector<int>& ts, const std::vector<int>& category_ids,
                                    const std::vector<const Mask*>& masks) const {
        Graph<T> g(false);
        auto pv = build_prompts(g, category_ids);
        AttnMasks<T> am = build_attn_masks(masks);
        auto res = build_cg(g, g.input(product_latent), g.input(z_t), ts, pv, &am);
        return collect(g, res);
    }

    ControlResidualsT<T> pg_forward(const Tensor<T>& background_latent, const Tensor<T>& z_t,
                                    const std::vector<int>& ts) const {
        Graph<T> g(false);
        auto res = build_pg(g, g.input(background_latent), g.input(z_t), ts);
        return collect(g, res);
    }

    Tensor<T> predict_noise(const Tensor<T>& z_t, const std::vector<int>& ts,
                            const std::vector<int>& category_ids, const ControlResidualsT<T>* cg_res,
                            const ControlResidualsT<T>* pg_res, DecoderTaps<T>* taps = nullptr) const {
        Graph<T> g(false);
        auto pv = build_prompts(g, category_ids);
        std::vector<typename Graph<T>::Var> cg_vars, pg_vars;
        if (cg_res)
            for (const auto& t : cg_res->levels) cg_vars.push_back(g.input(t));
        if (pg_res)
            for (const auto& t : pg_res->levels) pg_vars.push_back(g.input(t));
        auto out = build_predict(g, g.input(z_t), ts, pv, cg_res ? &cg_vars : nullptr,
                                 pg_res ? &pg_vars : nullptr, taps);
        return g.val(out);
    }

private:
    ModelConfig cfg_;
    uint64_t param_seed_ = 0;
    ParamRegistry<T> reg_;
    NoiseSchedule sched_;
    PromptEncoder<T> prompts_;
    UNet<T> backbone_;
    std::optional<ControlBranch<T>> cg_;
    std::optional<ControlBranch<T>> pg_;

    static ControlResidualsT<T> collect(Graph<T>& g, const std::vector<typename Graph<T>::Var>& vars) {
        ControlResidualsT<T> out;
        for (auto v : vars) out.levels.push_back(g.val(v));
        return out;
    }
};

// The spec-level masked cross attention operation on one feature map:
//   out = x + CA(x, p_fg) * M + CA(x, p_bg) * (1 - M)
// x (S,C) with a length-S binary mask; layer provides the CA projections.
template <typename T>
Tensor<T> masked_cross_attention(const CrossAttention<T>& layer, const Tensor<T>& x, const Tensor<T>& p_fg,
                                 const Tensor<T>& p_bg, const Tensor<T>& mask) {
    require(x.rank() == 2, ErrorKind::shape, "masked_cross_attention: x must be (S,C)");
    require(mask.rank() == 1 && mask.dim(0) == x.dim(0), ErrorKind::shape,
            "masked_cross_attention: mask length must match spatial size");
    Graph<T> g(false);
    auto xv = g.reshape(g.input(x), {1, x.dim(0), x.dim(1)});
    auto term = masked_cross_attention_term(g, layer, xv, g.input(p_fg), g.input(p_bg), mask);
    auto out = g.add(xv, term);
    Tensor<T> res = g.val(out);
    res.shape = x.shape;
    return res;
}

}  // namespace bgg
