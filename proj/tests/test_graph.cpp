#include <doctest.h>

#include "bgg/graph.hpp"
#include "bgg/nn.hpp"
#include "oracle_helpers.hpp"

using namespace bgg;
using bggtest::fd_check;

namespace {

// Builds a scalar loss from a set of double Params through `build`, checks
// every param's analytic gradient against central differences.
void check_grads(std::vector<Param<double>*> params,
                 const std::function<GraphD::Var(GraphD&)>& build, double h = 1e-5, double tol = 1e-6) {
    GraphD g;
    auto loss = build(g);
    g.backward(loss);

    Rng pick(123);
    for (auto* p : params) {
        std::vector<double> analytic(p->grad.v);
        auto loss_fn = [&]() {
            GraphD g2(false);
            return g2.val(build(g2))[0];
        };
        auto res = fd_check(p->value.v, analytic, loss_fn, h, pick, 40);
        INFO("param ", p->name, " max_rel_err=", res.max_rel_err);
        CHECK(res.max_rel_err < tol);
    }
}

Tensor<double> rand_t(Shape s, uint64_t seed, double scale = 1.0) {
    Rng r(seed);
    return Tensor<double>::randn(std::move(s), r, scale);
}

}  // namespace

TEST_CASE("matmul and bias gradients") {
    Param<double> w("w", rand_t({5, 4}, 1));
    Param<double> b("b", rand_t({4}, 2));
    Tensor<double> x = rand_t({3, 2, 5}, 3);
    check_grads({&w, &b}, [&](GraphD& g) {
        auto xv = g.input(x);
        auto y = g.add_rowvec(g.matmul(xv, g.param(w)), g.param(b));
        return g.sum(g.silu(y));
    });
}

TEST_CASE("conv2d gradients stride 1 and 2") {
    for (int stride : {1, 2}) {
        CAPTURE(stride);
        Param<double> w("w", rand_t({3, 3, 4, 6}, 10 + stride, 0.3));
        Param<double> b("b", rand_t({6}, 20 + stride));
        Param<double> xin("x", rand_t({2, 6, 6, 4}, 30 + stride));
        check_grads({&w, &b, &xin}, [&](GraphD& g) {
            auto y = g.conv2d(g.param(xin), g.param(w), g.param(b), stride, 1);
            return g.mse(g.silu(y), g.input(Tensor<double>::zeros(g.val(y).shape)));
        });
    }
}

TEST_CASE("group_norm gradients") {
    Param<double> gamma("gamma", rand_t({8}, 40, 0.5));
    Param<double> beta("beta", rand_t({8}, 41, 0.5));
    Param<double> xin("x", rand_t({2, 3, 3, 8}, 42));
    for (auto& v : gamma.value.v) v += 1.0;
    check_grads({&gamma, &beta, &xin}, [&](GraphD& g) {
        auto y = g.group_norm(g.param(xin), g.param(gamma), g.param(beta), 4, 1e-5);
        return g.mse(y, g.input(rand_t({2, 3, 3, 8}, 43)));
    });
}

TEST_CASE("attention gradients with batched context") {
    Param<double> q("q", rand_t({2, 5, 8}, 50));
    Param<double> k("k", rand_t({2, 3, 8}, 51));
    Param<double> v("v", rand_t({2, 3, 8}, 52));
    check_grads({&q, &k, &v}, [&](GraphD& g) {
        auto y = g.attention(g.param(q), g.param(k), g.param(v), 2);
        return g.mse(y, g.input(rand_t({2, 5, 8}, 53)));
    });
}

TEST_CASE("attention gradients with shared context") {
    Param<double> q("q", rand_t({2, 5, 8}, 60));
    Param<double> k("k", rand_t({3, 8}, 61));
    Param<double> v("v", rand_t({3, 8}, 62));
    check_grads({&q, &k, &v}, [&](GraphD& g) {
        auto y = g.attention(g.param(q), g.param(k), g.param(v), 4);
        return g.sum(g.mul(y, y));
    });
}

TEST_CASE("mask_lerp routes gradients by region") {
    Param<double> a("a", rand_t({1, 4, 3}, 70));
    Param<double> b("b", rand_t({1, 4, 3}, 71));
    Tensor<double> mask(Shape{1, 4}, std::vector<double>{1, 0, 1, 0});
    check_grads({&a, &b}, [&](GraphD& g) {
        auto y = g.mask_lerp(g.param(a), g.param(b), mask);
        return g.sum(g.mul(y, y));
    });

    // Where mask==1, output equals a exactly.
    GraphD g;
    auto y = g.mask_lerp(g.param(a), g.param(b), mask);
    const auto& yv = g.val(y);
    for (int c = 0; c < 3; ++c) {
        CHECK(yv[0 * 3 + c] == a.value[0 * 3 + c]);
        CHECK(yv[1 * 3 + c] == b.value[1 * 3 + c]);
    }
}

TEST_CASE("concat/reshape/upsample/gap gradients") {
    Param<double> a("a", rand_t({2, 2, 2, 3}, 80));
    Param<double> b("b", rand_t({2, 2, 2, 5}, 81));
    check_grads({&a, &b}, [&](GraphD& g) {
        auto y = g.concat(g.param(a), g.param(b), 3);
        auto u = g.upsample_nearest2x(y);
        auto p = g.global_avg_pool(u);
        auto r = g.reshape(p, {2 * 8});
        return g.sum(g.mul(r, r));
    });
}

TEST_CASE("rows_select scatters gradients") {
    Param<double> table("t", rand_t({5, 4}, 90));
    check_grads({&table}, [&](GraphD& g) {
        auto y = g.rows_select(g.param(table), {1, 3, 1});
        return g.sum(g.mul(y, y));
    });

    table.zero_grad();
    GraphD g;
    auto tv = g.param(table);
    auto y = g.rows_select(tv, {1, 3, 1});
    g.backward(g.sum(y));
    // rows 0,2,4 untouched; row 1 selected twice
    for (int j = 0; j < 4; ++j) {
        CHECK(table.grad[0 * 4 + j] == 0.0);
        CHECK(table.grad[1 * 4 + j] == 2.0);
        CHECK(table.grad[2 * 4 + j] == 0.0);
        CHECK(table.grad[3 * 4 + j] == 1.0);
    }
}

TEST_CASE("softmax_xent gradient and value") {
    Param<double> logits("l", rand_t({4, 3}, 95));
    check_grads({&logits}, [&](GraphD& g) {
        return g.softmax_xent(g.param(logits), {0, 2, 1, 1});
    });
}

TEST_CASE("add/sub/mul/scale/add_channel_bias gradients") {
    Param<double> a("a", rand_t({2, 2, 2, 3}, 100));
    Param<double> b("b", rand_t({2, 2, 2, 3}, 101));
    Param<double> t("t", rand_t({2, 3}, 102));
    check_grads({&a, &b, &t}, [&](GraphD& g) {
        auto s = g.add(g.param(a), g.scale(g.param(b), 0.7));
        auto d = g.sub(s, g.mul(g.param(a), g.param(b)));
        auto y = g.add_channel_bias_per_sample(d, g.param(t));
        return g.mse(y, g.input(rand_t({2, 2, 2, 3}, 103)));
    });
}

TEST_CASE("frozen params receive no gradient work") {
    Param<float> w("w", TensorF::full({2, 2}, 1.f));
    w.trainable = false;
    GraphF g;
    auto x = g.input(TensorF::full({1, 2}, 2.f));
    auto y = g.matmul(x, g.param(w));
    CHECK_FALSE(g.needs_grad(y));
}

TEST_CASE("no-grad graph skips tape construction") {
    Param<float> w("w", TensorF::full({2, 2}, 1.f));
    GraphF g(false);
    auto x = g.input(TensorF::full({1, 2}, 2.f));
    auto y = g.matmul(x, g.param(w));
    CHECK(g.val(y)[0] == 4.f);
    CHECK_THROWS_AS(g.backward(y), Error);
}
