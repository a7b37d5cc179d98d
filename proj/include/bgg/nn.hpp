#pragma once
// Small trainable building blocks over the autodiff graph. Parameters are
// registered by hierarchical name; initialization derives from a stream forked
// per name, so values do not depend on registration order.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "bgg/graph.hpp"

namespace bgg {

template <typename T>
class ParamRegistry {
public:
    Param<T>& create(const std::string& name, Tensor<T> init) {
        require(!params_.count(name), ErrorKind::config, "duplicate parameter name: " + name);
        auto p = std::make_unique<Param<T>>(name, std::move(init));
        Param<T>* raw = p.get();
        params_.emplace(name, std::move(p));
        return *raw;
    }

    Param<T>* find(const std::string& name) {
        auto it = params_.find(name);
        return it == params_.end() ? nullptr : it->second.get();
    }

    // Sorted by name (std::map order): stable across runs.
    std::vector<Param<T>*> all() {
        std::vector<Param<T>*> out;
        out.reserve(params_.size());
        for (auto& [k, v] : params_) out.push_back(v.get());
        return out;
    }

    void zero_grads() {
        for (auto& [k, v] : params_) v->zero_grad();
    }

private:
    std::map<std::string, std::unique_ptr<Param<T>>> params_;
};

// Initializers -----------------------------------------------------------------

template <typename T>
Tensor<T> init_normal(Shape s, const Rng& root, const std::string& name, T stddev) {
    Rng r = root.fork(name);
    return Tensor<T>::randn(std::move(s), r, stddev);
}

template <typename T>
Tensor<T> init_he(Shape s, const Rng& root, const std::string& name, int fan_in) {
    return init_normal<T>(std::move(s), root, name, std::sqrt(T(2) / static_cast<T>(fan_in)));
}

// Modules ------------------------------------------------------------------------

template <typename T>
struct Linear {
    Param<T>* w = nullptr;
    Param<T>* b = nullptr;

    Linear() = default;
    Linear(ParamRegistry<T>& reg, const Rng& root, const std::string& name, int in, int out, bool zero_init = false) {
        Tensor<T> wi = zero_init ? Tensor<T>::zeros({in, out})
                                 : init_normal<T>({in, out}, root, name + ".w", std::sqrt(T(1) / static_cast<T>(in)));
        w = &reg.create(name + ".w", std::move(wi));
        b = &reg.create(name + ".b", Tensor<T>::zeros({out}));
    }

    typename Graph<T>::Var forward(Graph<T>& g, typename Graph<T>::Var x) const {
        return g.add_rowvec(g.matmul(x, g.param(*w)), g.param(*b));
    }
};

template <typename T>
struct Conv2d {
    Param<T>* w = nullptr;
    Param<T>* b = nullptr;
    int stride = 1;
    int pad = 1;

    Conv2d() = default;
    Conv2d(ParamRegistry<T>& reg, const Rng& root, const std::string& name, int kh, int kw, int cin, int cout,
           int stride_, int pad_, bool zero_init = false)
        : stride(stride_), pad(pad_) {
        Tensor<T> wi = zero_init ? Tensor<T>::zeros({kh, kw, cin, cout})
                                 : init_he<T>({kh, kw, cin, cout}, root, name + ".w", kh * kw * cin);
        w = &reg.create(name + ".w", std::move(wi));
        b = &reg.create(name + ".b", Tensor<T>::zeros({cout}));
    }

    typename Graph<T>::Var forward(Graph<T>& g, typename Graph<T>::Var x) const {
        return g.conv2d(x, g.param(*w), g.param(*b), stride, pad);
    }
};

template <typename T>
struct GroupNorm {
    Param<T>* gamma = nullptr;
    Param<T>* beta = nullptr;
    int groups = 8;
    T eps = T(1e-5);

    GroupNorm() = default;
    GroupNorm(ParamRegistry<T>& reg, const std::string& name, int channels, int groups_)
        : groups(groups_) {
        gamma = &reg.create(name + ".gamma", Tensor<T>::full({channels}, T(1)));
        beta = &reg.create(name + ".beta", Tensor<T>::zeros({channels}));
    }

    typename Graph<T>::Var forward(Graph<T>& g, typename Graph<T>::Var x) const {
        return g.group_norm(x, g.param(*gamma), g.param(*beta), groups, eps);
    }
};

// Projection weights of one cross-attention layer. Queries come from the
// feature map, keys/values from a context sequence (a prompt, or the feature
// map itself for self attention).
template <typename T>
struct CrossAttention {
    Param<T>* wq = nullptr;
    Param<T>* wk = nullptr;
    Param<T>* wv = nullptr;
    Param<T>* wo = nullptr;
    int heads = 4;

    CrossAttention() = default;
    CrossAttention(ParamRegistry<T>& reg, const Rng& root, const std::string& name, int channels, int ctx_dim,
                   int heads_)
        : heads(heads_) {
        T sc = std::sqrt(T(1) / static_cast<T>(channels));
        T sk = std::sqrt(T(1) / static_cast<T>(ctx_dim));
        wq = &reg.create(name + ".wq", init_normal<T>({channels, channels}, root, name + ".wq", sc));
        wk = &reg.create(name + ".wk", init_normal<T>({ctx_dim, channels}, root, name + ".wk", sk));
        wv = &reg.create(name + ".wv", init_normal<T>({ctx_dim, channels}, root, name + ".wv", sk));
        wo = &reg.create(name + ".wo", init_normal<T>({channels, channels}, root, name + ".wo", sc));
    }

    // x (N,S,C); ctx (N,L,Dp) or (L,Dp)
    typename Graph<T>::Var forward(Graph<T>& g, typename Graph<T>::Var x, typename Graph<T>::Var ctx) const {
        auto q = g.matmul(x, g.param(*wq));
        auto k = g.matmul(ctx, g.param(*wk));
        auto v = g.matmul(ctx, g.param(*wv));
        return g.matmul(g.attention(q, k, v, heads), g.param(*wo));
    }
};

// Sinusoidal timestep features: [cos(t*f_0..), sin(t*f_0..)] with
// log-spaced frequencies; returned as a constant graph input.
template <typename T>
Tensor<T> sinusoidal_time_features(const std::vector<int>& ts, int dim) {
    int half = dim / 2;
    Tensor<T> out(Shape{static_cast<int>(ts.size()), dim});
    for (size_t i = 0; i < ts.size(); ++i) {
        for (int j = 0; j < half; ++j) {
            double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
            double ang = static_cast<double>(ts[i]) * freq;
            out[int64_t(i) * dim + j] = static_cast<T>(std::cos(ang));
            out[int64_t(i) * dim + half + j] = static_cast<T>(std::sin(ang));
        }
    }
    return out;
}

template <typename T>
struct TimeEmbedding {
    int feat_dim = 0;
    Linear<T> l1, l2;

    TimeEmbedding() = default;
    TimeEmbedding(ParamRegistry<T>& reg, const Rng& root, const std::string& name, int feat_dim_, int out_dim)
        : feat_dim(feat_dim_),
          l1(reg, root, name + ".l1", feat_dim_, out_dim),
          l2(reg, root, name + ".l2", out_dim, out_dim) {}

    typename Graph<T>::Var forward(Graph<T>& g, const std::vector<int>& ts) const {
        auto f = g.input(sinusoidal_time_features<T>(ts, feat_dim));
        return l2.forward(g, g.silu(l1.forward(g, f)));
    }
};

}  // namespace bgg
