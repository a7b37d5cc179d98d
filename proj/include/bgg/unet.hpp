#pragma once
// Denoising UNet backbone and the control branches (category-wise and
// personality-wise). Branches replicate the backbone encoder + middle stack
// and emit per-level residuals through zero-initialized 1x1 projections, so a
// freshly initialized branch never changes the backbone prediction.

#include <optional>
#include <vector>

#include "bgg/nn.hpp"
#include "bgg/prompts.hpp"

namespace bgg {

struct DenoiserConfig {
    int image_size = 32;
    int codec_factor = 2;
    int base_channels = 32;
    std::vector<int> channel_mults = {1, 2, 4};
    std::vector<int> attention_resolutions = {8, 4};
    int prompt_dim = 64;
    int num_heads = 4;
    int gn_groups = 8;

    int latent_size() const { return image_size / codec_factor; }
    int latent_channels() const { return 3 * codec_factor * codec_factor; }
    int time_dim() const { return base_channels * 4; }
    int levels() const { return static_cast<int>(channel_mults.size()); }
    int level_channels(int i) const { return base_channels * channel_mults[size_t(i)]; }
    int level_resolution(int i) const { return latent_size() >> i; }
    bool attn_at(int level) const {
        int r = level_resolution(level);
        for (int a : attention_resolutions)
            if (a == r) return true;
        return false;
    }

    void validate() const {
        require(image_size >= 16 && (image_size & (image_size - 1)) == 0, ErrorKind::config,
                "image_size must be a power of two >= 16");
        require(codec_factor >= 1 && image_size % codec_factor == 0, ErrorKind::config, "bad codec factor");
        require(!channel_mults.empty(), ErrorKind::config, "channel_mults empty");
        require(base_channels > 0 && prompt_dim > 0 && num_heads > 0, ErrorKind::config, "dims must be positive");
        bool any_attn = false;
        for (int i = 0; i < levels(); ++i) {
            require(level_resolution(i) >= 1, ErrorKind::config, "too many levels for latent size");
            require(level_channels(i) % gn_groups == 0, ErrorKind::config,
                    "level channels must be divisible by gn_groups");
            require(level_channels(i) % num_heads == 0, ErrorKind::config,
                    "level channels must be divisible by num_heads");
            any_attn = any_attn || attn_at(i);
        }
        require(any_attn, ErrorKind::config, "attention must be present at >= 1 resolution");
    }
};

// Per-batch prompt context vars; `all` (fg||bg) feeds unmasked layers.
template <typename T>
struct PromptVars {
    typename Graph<T>::Var fg = -1;
    typename Graph<T>::Var bg = -1;
    typename Graph<T>::Var all = -1;
};

// Binary masks resampled to each attention resolution, one row per record.
// Shape per entry: (N, S) where S = r*r.
template <typename T>
struct AttnMasks {
    std::vector<std::pair<int, Tensor<T>>> by_resolution;  // (resolution, mask)

    const Tensor<T>& at(int resolution) const {
        for (auto& [r, m] : by_resolution)
            if (r == resolution) return m;
        fail(ErrorKind::shape, "no attention mask prepared for resolution " + std::to_string(resolution));
    }
};

enum class CrossMode { none, plain, masked };

// Eq.-style masked residual cross attention term builder:
//   out = ca(x, fg) * M + ca(x, bg) * (1 - M)
// evaluated per spatial location. Exposed standalone so the operation can be
// tested exactly as the network uses it.
template <typename T>
typename Graph<T>::Var masked_cross_attention_term(Graph<T>& g, const CrossAttention<T>& layer,
                                                   typename Graph<T>::Var x, typename Graph<T>::Var fg,
                                                   typename Graph<T>::Var bg, Tensor<T> mask) {
    auto ca_fg = layer.forward(g, x, fg);
    auto ca_bg = layer.forward(g, x, bg);
    return g.mask_lerp(ca_fg, ca_bg, std::move(mask));
}

template <typename T>
struct ResBlock {
    GroupNorm<T> n1;
    Conv2d<T> c1;
    Linear<T> temb_proj;
    GroupNorm<T> n2;
    Conv2d<T> c2;
    std::optional<Conv2d<T>> skip;

    ResBlock() = default;
    ResBlock(ParamRegistry<T>& reg, const Rng& root, const std::string& name, int cin, int cout, int time_dim,
             int groups)
        : n1(reg, name + ".n1", cin, groups),
          c1(reg, root, name + ".c1", 3, 3, cin, cout, 1, 1),
          temb_proj(reg, root, name + ".temb", time_dim, cout),
          n2(reg, name + ".n2", cout, groups),
          c2(reg, root, name + ".c2", 3, 3, cout, cout, 1, 1) {
        if (cin != cout) skip.emplace(reg, root, name + ".skip", 1, 1, cin, cout, 1, 0);
    }

    typename Graph<T>::Var forward(Graph<T>& g, typename Graph<T>::Var x, typename Graph<T>::Var temb) const {
        auto h = c1.forward(g, g.silu(n1.forward(g, x)));
        h = g.add_channel_bias_per_sample(h, temb_proj.forward(g, g.silu(temb)));
        h = c2.forward(g, g.silu(n2.forward(g, h)));
        return g.add(h, skip ? skip->forward(g, x) : x);
    }
};

template <typename T>
struct AttnBlock {
    GroupNorm<T> n_self;
    CrossAttention<T> self_attn;
    GroupNorm<T> n_cross;
    CrossAttention<T> cross_attn;
    CrossMode mode = CrossMode::plain;

    AttnBlock() = default;
    AttnBlock(ParamRegistry<T>& reg, const Rng& root, const std::string& name, int channels, int prompt_dim,
              int heads, int groups, CrossMode mode_)
        : n_self(reg, name + ".n_self", channels, groups),
          self_attn(reg, root, name + ".self", channels, channels, heads),
          mode(mode_) {
        if (mode != CrossMode::none) {
            n_cross = GroupNorm<T>(reg, name + ".n_cross", channels, groups);
            cross_attn = CrossAttention<T>(reg, root, name + ".cross", channels, prompt_dim, heads);
        }
    }

    // x (N,H,W,C); mask (N,S) used only in masked mode.
    typename Graph<T>::Var forward(Graph<T>& g, typename Graph<T>::Var x, const PromptVars<T>& prompts,
                                   const Tensor<T>* mask) const {
        const auto& xs = g.val(x).shape;
        int n = xs[0], hh = xs[1], ww = xs[2], c = xs[3];
        auto flat = g.reshape(x, {n, hh * ww, c});
        auto ns = n_self.forward(g, flat);
        auto h = g.add(flat, self_attn.forward(g, ns, ns));
        if (mode == CrossMode::plain) {
            auto hn = n_cross.forward(g, h);
            h = g.add(h, cross_attn.forward(g, hn, prompts.all));
        } else if (mode == CrossMode::masked) {
            require(mask != nullptr, ErrorKind::shape, "masked attention requires a mask");
            auto hn = n_cross.forward(g, h);
            h = g.add(h, masked_cross_attention_term(g, cross_attn, hn, prompts.fg, prompts.bg, *mask));
        }
        return g.reshape(h, {n, hh, ww, c});
    }
};

// Encoder + middle stack shared structurally by the backbone and branches.
template <typename T>
struct UNetEncoder {
    DenoiserConfig cfg;
    TimeEmbedding<T> temb;
    Conv2d<T> conv_in;
    struct Level {
        ResBlock<T> res;
        std::optional<AttnBlock<T>> attn;
        std::optional<Conv2d<T>> down;
    };
    std::vector<Level> levels;
    ResBlock<T> mid1;
    AttnBlock<T> mid_attn;
    ResBlock<T> mid2;

    UNetEncoder() = default;
    UNetEncoder(ParamRegistry<T>& reg, const Rng& root, const std::string& name, const DenoiserConfig& cfg_,
                CrossMode cross_mode)
        : cfg(cfg_),
          temb(reg, root, name + ".temb", cfg_.base_channels, cfg_.time_dim()),
          conv_in(reg, root, name + ".conv_in", 3, 3, cfg_.latent_channels(), cfg_.base_channels, 1, 1) {
        int l = cfg.levels();
        levels.resize(static_cast<size_t>(l));
        for (int i = 0; i < l; ++i) {
            int ch = cfg.level_channels(i);
            auto& lv = levels[size_t(i)];
            lv.res = ResBlock<T>(reg, root, name + ".enc" + std::to_string(i), ch, ch, cfg.time_dim(),
                                 cfg.gn_groups);
            if (cfg.attn_at(i))
                lv.attn.emplace(reg, root, name + ".enc" + std::to_string(i) + ".attn", ch, cfg.prompt_dim,
                                cfg.num_heads, cfg.gn_groups, cross_mode);
            if (i + 1 < l)
                lv.down.emplace(reg, root, name + ".down" + std::to_string(i), 3, 3, ch,
                                cfg.level_channels(i + 1), 2, 1);
        }
        int cm = cfg.level_channels(l - 1);
        mid1 = ResBlock<T>(reg, root, name + ".mid1", cm, cm, cfg.time_dim(), cfg.gn_groups);
        mid_attn = AttnBlock<T>(reg, root, name + ".mid_attn", cm, cfg.prompt_dim, cfg.num_heads, cfg.gn_groups,
                                cross_mode);
        mid2 = ResBlock<T>(reg, root, name + ".mid2", cm, cm, cfg.time_dim(), cfg.gn_groups);
    }

    struct Features {
        std::vector<typename Graph<T>::Var> skips;  // 2 per level, encoder order
        typename Graph<T>::Var mid = -1;
        typename Graph<T>::Var temb = -1;
    };

    Features forward(Graph<T>& g, typename Graph<T>::Var z, const std::vector<int>& ts,
                     const PromptVars<T>& prompts, const AttnMasks<T>* masks,
                     typename Graph<T>::Var hint_add = -1) const {
        Features f;
        f.temb = temb.forward(g, ts);
        auto x = conv_in.forward(g, z);
        if (hint_add >= 0) x = g.add(x, hint_add);
        f.skips.push_back(x);
        for (int i = 0; i < cfg.levels(); ++i) {
            const auto& lv = levels[size_t(i)];
            x = lv.res.forward(g, x, f.temb);
            if (lv.attn) x = lv.attn->forward(g, x, prompts, mask_for(g, x, masks));
            f.skips.push_back(x);
            if (lv.down) {
                x = lv.down->forward(g, x);
                f.skips.push_back(x);
            }
        }
        x = mid1.forward(g, x, f.temb);
        x = mid_attn.forward(g, x, prompts, mask_for(g, x, masks));
        x = mid2.forward(g, x, f.temb);
        f.mid = x;
        return f;
    }

private:
    const Tensor<T>* mask_for(Graph<T>& g, typename Graph<T>::Var x, const AttnMasks<T>* masks) const {
        if (masks == nullptr) return nullptr;
        return &masks->at(g.val(x).dim(1));
    }
};

// Captured decoder-level inputs (fused skips in consumption order, then the
// fused middle), for fusion-additivity instrumentation.
template <typename T>
struct DecoderTaps {
    std::vector<Tensor<T>> level_inputs;
};

template <typename T>
struct UNet {
    DenoiserConfig cfg;
    UNetEncoder<T> encoder;
    struct DecStage {
        ResBlock<T> res;
        std::optional<AttnBlock<T>> attn;
        std::optional<Conv2d<T>> up;  // applied after the stage (upsample + conv)
    };
    std::vector<DecStage> dec;  // bottom level first, two stages per level
    GroupNorm<T> out_norm;
    Conv2d<T> out_conv;

    UNet() = default;
    UNet(ParamRegistry<T>& reg, const Rng& root, const std::string& name, const DenoiserConfig& cfg_,
         CrossMode cross_mode)
        : cfg(cfg_), encoder(reg, root, name, cfg_, cross_mode) {
        int l = cfg.levels();
        for (int i = l - 1; i >= 0; --i) {
            int ch = cfg.level_channels(i);
            for (int s = 0; s < 2; ++s) {
                DecStage st;
                std::string sn = name + ".dec" + std::to_string(i) + "_" + std::to_string(s);
                st.res = ResBlock<T>(reg, root, sn, 2 * ch, ch, cfg.time_dim(), cfg.gn_groups);
                if (s == 0 && cfg.attn_at(i))
                    st.attn.emplace(reg, root, sn + ".attn", ch, cfg.prompt_dim, cfg.num_heads, cfg.gn_groups,
                                    cross_mode);
                if (s == 1 && i > 0)
                    st.up.emplace(reg, root, name + ".up" + std::to_string(i), 3, 3, ch,
                                  cfg.level_channels(i - 1), 1, 1);
                dec.push_back(std::move(st));
            }
        }
        out_norm = GroupNorm<T>(reg, name + ".out_norm", cfg.base_channels, cfg.gn_groups);
        out_conv = Conv2d<T>(reg, root, name + ".out_conv", 3, 3, cfg.base_channels, cfg.latent_channels(), 1, 1,
                             /*zero_init=*/true);
    }

    // Residual lists follow encoder order (skips then middle); each entry is
    // added to the corresponding decoder-level input.
    typename Graph<T>::Var forward(Graph<T>& g, typename Graph<T>::Var z_t, const std::vector<int>& ts,
                                   const PromptVars<T>& prompts,
                                   const std::vector<typename Graph<T>::Var>* cg_residuals,
                                   const std::vector<typename Graph<T>::Var>* pg_residuals,
                                   DecoderTaps<T>* taps = nullptr) const {
        auto feats = encoder.forward(g, z_t, ts, prompts, nullptr);
        size_t n_levels = feats.skips.size() + 1;
        if (cg_residuals)
            require(cg_residuals->size() == n_levels, ErrorKind::shape, "cg residual level count mismatch");
        if (pg_residuals)
            require(pg_residuals->size() == n_levels, ErrorKind::shape, "pg residual level count mismatch");

        auto fuse = [&](typename Graph<T>::Var x, size_t idx) {
            if (cg_residuals) {
                require(g.val((*cg_residuals)[idx]).shape == g.val(x).shape, ErrorKind::shape,
                        "cg residual shape mismatch at level " + std::to_string(idx));
                x = g.add(x, (*cg_residuals)[idx]);
            }
            if (pg_residuals) {
                require(g.val((*pg_residuals)[idx]).shape == g.val(x).shape, ErrorKind::shape,
                        "pg residual shape mismatch at level " + std::to_string(idx));
                x = g.add(x, (*pg_residuals)[idx]);
            }
            return x;
        };

        std::vector<typename Graph<T>::Var> skips;
        for (size_t i = 0; i < feats.skips.size(); ++i) skips.push_back(fuse(feats.skips[i], i));
        auto h = fuse(feats.mid, feats.skips.size());

        if (taps) {
            taps->level_inputs.clear();
            for (size_t i = skips.size(); i-- > 0;) taps->level_inputs.push_back(g.val(skips[i]));
            taps->level_inputs.push_back(g.val(h));
        }

        size_t top = skips.size();
        for (const auto& st : dec) {
            require(top > 0, ErrorKind::shape, "decoder consumed more skips than produced");
            auto skip = skips[--top];
            h = st.res.forward(g, g.concat(h, skip, 3), feats.temb);
            if (st.attn) h = st.attn->forward(g, h, prompts, nullptr);
            if (st.up) h = st.up->forward(g, g.upsample_nearest2x(h));
        }
        require(top == 0, ErrorKind::shape, "decoder left skips unconsumed");
        return out_conv.forward(g, g.silu(out_norm.forward(g, h)));
    }
};

// ControlNet-style conditioning branch: encoder + middle copy, a hint conv
// injecting the conditioning latent after conv_in, and zero-initialized 1x1
// projections producing one residual per backbone decoder level.
template <typename T>
struct ControlBranch {
    DenoiserConfig cfg;
    UNetEncoder<T> encoder;
    Conv2d<T> hint_conv;
    std::vector<Conv2d<T>> zero_convs;  // one per skip + one for middle

    ControlBranch() = default;
    ControlBranch(ParamRegistry<T>& reg, const Rng& root, const std::string& name, const DenoiserConfig& cfg_,
                  CrossMode cross_mode)
        : cfg(cfg_),
          encoder(reg, root, name, cfg_, cross_mode),
          hint_conv(reg, root, name + ".hint_conv", 3, 3, cfg_.latent_channels(), cfg_.base_channels, 1, 1) {
        int l = cfg.levels();
        std::vector<int> skip_ch;
        skip_ch.push_back(cfg.base_channels);
        for (int i = 0; i < l; ++i) {
            skip_ch.push_back(cfg.level_channels(i));
            if (i + 1 < l) skip_ch.push_back(cfg.level_channels(i + 1));
        }
        skip_ch.push_back(cfg.level_channels(l - 1));  // middle
        for (size_t i = 0; i < skip_ch.size(); ++i)
            zero_convs.emplace_back(reg, root, name + ".zero" + std::to_string(i), 1, 1, skip_ch[i], skip_ch[i],
                                    1, 0, /*zero_init=*/true);
    }

    std::vector<typename Graph<T>::Var> forward(Graph<T>& g, typename Graph<T>::Var hint_latent,
                                                typename Graph<T>::Var z_t, const std::vector<int>& ts,
                                                const PromptVars<T>& prompts, const AttnMasks<T>* masks) const {
        auto hint = hint_conv.forward(g, hint_latent);
        auto feats = encoder.forward(g, z_t, ts, prompts, masks, hint);
        std::vector<typename Graph<T>::Var> residuals;
        for (size_t i = 0; i < feats.skips.size(); ++i)
            residuals.push_back(zero_convs[i].forward(g, feats.skips[i]));
        residuals.push_back(zero_convs.back().forward(g, feats.mid));
        return residuals;
    }
};

}  // namespace bgg
