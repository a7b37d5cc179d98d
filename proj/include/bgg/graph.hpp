#pragma once
// Reverse-mode autodiff over a per-step tape. Every operation appends a node
// holding the forward value and a backward closure; Graph::backward walks the
// tape in reverse. All accumulation orders are fixed, so results are
// bit-reproducible for a given input stream.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "bgg/tensor.hpp"

namespace bgg {

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;

    Param() = default;
    Param(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

    void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), T(0)); }
};

template <typename T>
using EigenRowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<EigenRowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const EigenRowMat<T>>;

template <typename T>
class Graph {
public:
    using Var = int;

    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = delete;
    Graph& operator=(Graph&&) = delete;

    bool grad_enabled() const { return grad_enabled_; }

    // ---- leaves ------------------------------------------------------------

    Var input(Tensor<T> value, bool needs_grad = false) {
        return push(std::move(value), needs_grad && grad_enabled_, {});
    }

    Var param(Param<T>& p) {
        Var id = push_ref_copy(p.value, grad_enabled_ && p.trainable, {});
        if (grad_enabled_ && p.trainable) bound_.push_back({id, &p});
        return id;
    }

    const Tensor<T>& val(Var id) const { return nodes_[static_cast<size_t>(id)].val; }
    const Tensor<T>& grad(Var id) const { return nodes_[static_cast<size_t>(id)].grad; }
    bool needs_grad(Var id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

    // ---- elementwise -------------------------------------------------------

    Var add(Var a, Var b) {
        check_same(a, b, "add");
        Tensor<T> out = val(a);
        const Tensor<T>& bv = val(b);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
        return unary_binary(std::move(out), a, b, [this](Graph& g, Var a, Var b, Var y) {
            const Tensor<T>& gy = g.gradbuf(y);
            if (g.needs_grad(a)) g.acc(a, gy);
            if (g.needs_grad(b)) g.acc(b, gy);
        });
    }

    Var sub(Var a, Var b) {
        check_same(a, b, "sub");
        Tensor<T> out = val(a);
        const Tensor<T>& bv = val(b);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
        return unary_binary(std::move(out), a, b, [this](Graph& g, Var a, Var b, Var y) {
            const Tensor<T>& gy = g.gradbuf(y);
            if (g.needs_grad(a)) g.acc(a, gy);
            if (g.needs_grad(b)) {
                Tensor<T>& gb = g.gradbuf(b);
                for (int64_t i = 0; i < gy.numel(); ++i) gb[i] -= gy[i];
            }
        });
    }

    Var mul(Var a, Var b) {
        check_same(a, b, "mul");
        Tensor<T> out = val(a);
        const Tensor<T>& bv = val(b);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
        return unary_binary(std::move(out), a, b, [this](Graph& g, Var a, Var b, Var y) {
            const Tensor<T>& gy = g.gradbuf(y);
            if (g.needs_grad(a)) {
                Tensor<T>& ga = g.gradbuf(a);
                const Tensor<T>& bv = g.val(b);
                for (int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i] * bv[i];
            }
            if (g.needs_grad(b)) {
                Tensor<T>& gb = g.gradbuf(b);
                const Tensor<T>& av = g.val(a);
                for (int64_t i = 0; i < gy.numel(); ++i) gb[i] += gy[i] * av[i];
            }
        });
    }

    Var scale(Var a, T c) {
        Tensor<T> out = val(a);
        for (auto& x : out.v) x *= c;
        return unary(std::move(out), a, [c](Graph& g, Var a, Var y) {
            const Tensor<T>& gy = g.gradbuf(y);
            Tensor<T>& ga = g.gradbuf(a);
            for (int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i] * c;
        });
    }

    Var silu(Var a) {
        Tensor<T> out = val(a);
        for (auto& x : out.v) x = x / (T(1) + std::exp(-x));
        return unary(std::move(out), a, [](Graph& g, Var a, Var y) {
            const Tensor<T>& gy = g.gradbuf(y);
            const Tensor<T>& av = g.val(a);
            Tensor<T>& ga = g.gradbuf(a);
            for (int64_t i = 0; i < gy.numel(); ++i) {
                T s = T(1) / (T(1) + std::exp(-av[i]));
                ga[i] += gy[i] * s * (T(1) + av[i] * (T(1) - s));
            }
        });
    }

    // Broadcast row vector r (C) over the trailing dimension of x (..., C).
    Var add_rowvec(Var x, Var r) {
        const Tensor<T>& xv = val(x);
        const Tensor<T>& rv = val(r);
        int c = xv.shape.back();
        require(rv.rank() == 1 && rv.dim(0) == c, ErrorKind::shape, "add_rowvec: bias shape");
        Tensor<T> out = xv;
        int64_t rows = xv.numel() / c;
        for (int64_t i = 0; i < rows; ++i)
            for (int j = 0; j < c; ++j) out[i * c + j] += rv[j];
        return unary_binary(std::move(out), x, r, [c](Graph& g, Var x, Var r, Var y) {
            const Tensor<T>& gy = g.gradbuf(y);
            int64_t rows = gy.numel() / c;
            if (g.needs_grad(x)) g.acc(x, gy);
            if (g.needs_grad(r)) {
                Tensor<T>& gr = g.gradbuf(r);
                for (int64_t i = 0; i < rows; ++i)
                    for (int j = 0; j < c; ++j) gr[j] += gy[i * c + j];
            }
        });
    }

    // x (N,H,W,C) += t (N,C) broadcast over spatial positions.
    Var add_channel_bias_per_sample(Var x, Var t) {
        const Tensor<T>& xv = val(x);
        const Tensor<T>& tv = val(t);
        require(xv.rank() == 4 && tv.rank() == 2 && xv.dim(0) == tv.dim(0) && xv.dim(3) == tv.dim(1),
                ErrorKind::shape, "add_channel_bias_per_sample: shapes");
        int n = xv.dim(0), hw = xv.dim(1) * xv.dim(2), c = xv.dim(3);
        Tensor<T> out = xv;
        for (int i = 0; i < n; ++i)
            for (int s = 0; s < hw; ++s)
                for (int j = 0; j < c; ++j) out[(int64_t(i) * hw + s) * c + j] += tv[int64_t(i) * c + j];
        return unary_binary(std::move(out), x, t, [n, hw, c](Graph& g, Var x, Var t, Var y) {
            const Tensor<T>& gy = g.gradbuf(y);
            if (g.needs_grad(x)) g.acc(x, gy);
            if (g.needs_grad(t)) {
                Tensor<T>& gt = g.gradbuf(t);
                for (int i = 0; i < n; ++i)
                    for (int s = 0; s < hw; ++s)
                        for (int j = 0; j < c; ++j) gt[int64_t(i) * c + j] += gy[(int64_t(i) * hw + s) * c + j];
            }
        });
    }

    // out = a*m + b*(1-m), m constant with shape (N,S) or (S) against a,b (N,S,C).
    Var mask_lerp(Var a, Var b, Tensor<T> mask) {
        check_same(a, b, "mask_lerp");
        const Tensor<T>& av = val(a);
        require(av.rank() == 3, ErrorKind::shape, "mask_lerp: expects (N,S,C)");
        int n = av.dim(0), s = av.dim(1), c = av.dim(2);
        bool batched = mask.rank() == 2;
        require((batched && mask.dim(0) == n && mask.dim(1) == s) || (!batched && mask.rank() == 1 && mask.dim(0) == s),
                ErrorKind::shape, "mask_lerp: mask shape " + shape_str(mask.shape));
        Tensor<T> out(av.shape);
        const Tensor<T>& bv = val(b);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < s; ++j) {
                T m = batched ? mask[int64_t(i) * s + j] : mask[j];
                for (int k = 0; k < c; ++k) {
                    int64_t p = (int64_t(i) * s + j) * c + k;
                    out[p] = av[p] * m + bv[p] * (T(1) - m);
                }
            }
        auto mk = std::make_shared<Tensor<T>>(std::move(mask));
        return unary_binary(std::move(out), a, b, [n, s, c, batched, mk](Graph& g, Var a, Var b, Var y) {
            const Tensor<T>& gy = g.gradbuf(y);
            Tensor<T>* ga = g.needs_grad(a) ? &g.gradbuf(a) : nullptr;
            Tensor<T>* gb = g.needs_grad(b) ? &g.gradbuf(b) : nullptr;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < s; ++j) {
                    T m = batched ? (*mk)[int64_t(i) * s + j] : (*mk)[j];
                    for (int k = 0; k < c; ++k) {
                        int64_t p = (int64_t(i) * s + j) * c + k;
                        if (ga) (*ga)[p] += gy[p] * m;
                        if (gb) (*gb)[p] += gy[p] * (T(1) - m);
                    }
                }
        });
    }

    // ---- shape ops ----------------------------------------------------------

    Var reshape(Var a, Shape s) {
        require(shape_numel(s) == val(a).numel(), ErrorKind::shape,
                "reshape: numel mismatch " + shape_str(val(a).shape) + " -> " + shape_str(s));
        Tensor<T> out(std::move(s), val(a).v);
        return unary(std::move(out), a, [](Graph& g, Var a, Var y) {
            const Tensor<T>& gy = g.gradbuf(y);
            Tensor<T>& ga = g.gradbuf(a);
            for (int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i];
        });
    }

    Var concat(Var a, Var b, int axis) {
        const Tensor<T>& av = val(a);
        const Tensor<T>& bv = val(b);
        require(av.rank() == bv.rank(), ErrorKind::shape, "concat: rank mismatch");
        int r = av.rank();
        require(axis >= 0 && axis < r, ErrorKind::argument, "concat: bad axis");
        for (int i = 0; i < r; ++i)
            require(i == axis || av.dim(i) == bv.dim(i), ErrorKind::shape, "concat: dim mismatch");
        Shape os = av.shape;
        os[static_cast<size_t>(axis)] += bv.dim(axis);
        int64_t outer = 1, inner = 1;
        for (int i = 0; i < axis; ++i) outer *= av.dim(i);
        for (int i = axis + 1; i < r; ++i) inner *= av.dim(i);
        int64_t wa = av.dim(axis) * inner, wb = bv.dim(axis) * inner;
        Tensor<T> out(os);
        for (int64_t o = 0; o < outer; ++o) {
            std::copy_n(av.data() + o * wa, wa, out.data() + o * (wa + wb));
            std::copy_n(bv.data() + o * wb, wb, out.data() + o * (wa + wb) + wa);
        }
        return unary_binary(std::move(out), a, b, [outer, wa, wb](Graph& g, Var a, Var b, Var y) {
            const Tensor<T>& gy = g.gradbuf(y);
            if (g.needs_grad(a)) {
                Tensor<T>& ga = g.gradbuf(a);
                for (int64_t o = 0; o < outer; ++o)
                    for (int64_t i = 0; i < wa; ++i) ga[o * wa + i] += gy[o * (wa + wb) + i];
            }
            if (g.needs_grad(b)) {
                Tensor<T>& gb = g.gradbuf(b);
                for (int64_t o = 0; o < outer; ++o)
                    for (int64_t i = 0; i < wb; ++i) gb[o * wb + i] += gy[o * (wa + wb) + wa + i];
            }
        });
    }

    // ---- linear algebra ------------------------------------------------------

    // a (..., K) x b (K, N) -> (..., N); leading dims of a are folded.
    Var matmul(Var a, Var b) {
        const Tensor<T>& av = val(a);
        const Tensor<T>& bv = val(b);
        require(bv.rank() == 2, ErrorKind::shape, "matmul: rhs must be 2-D");
        int k = av.shape.back();
        require(k == bv.dim(0), ErrorKind::shape, "matmul: inner dim mismatch");
        int nn = bv.dim(1);
        int64_t m = av.numel() / k;
        Shape os = av.shape;
        os.back() = nn;
        Tensor<T> out(os);
        ConstMatMap<T> A(av.data(), m, k), B(bv.data(), k, nn);
        MatMap<T> C(out.data(), m, nn);
        C.noalias() = A * B;
        return unary_binary(std::move(out), a, b, [m, k, nn](Graph& g, Var a, Var b, Var y) {
            const Tensor<T>& gy = g.gradbuf(y);
            ConstMatMap<T> GY(gy.data(), m, nn);
            if (g.needs_grad(a)) {
                ConstMatMap<T> B(g.val(b).data(), k, nn);
                MatMap<T> GA(g.gradbuf(a).data(), m, k);
                GA.noalias() += GY * B.transpose();
            }
            if (g.needs_grad(b)) {
                ConstMatMap<T> A(g.val(a).data(), m, k);
                MatMap<T> GB(g.gradbuf(b).data(), k, nn);
                GB.noalias() += A.transpose() * GY;
            }
        });
    }

    // Multi-head scaled dot-product attention.
    //   q (N,S,C), k/v (N,L,C) or (L,C) shared across the batch -> (N,S,C)
    Var attention(Var q, Var k, Var v, int heads) {
        const Tensor<T>& qv = val(q);
        const Tensor<T>& kv = val(k);
        const Tensor<T>& vv = val(v);
        require(qv.rank() == 3, ErrorKind::shape, "attention: q must be (N,S,C)");
        int n = qv.dim(0), s = qv.dim(1), c = qv.dim(2);
        bool shared = kv.rank() == 2;
        require(kv.shape == vv.shape, ErrorKind::shape, "attention: k/v shape mismatch");
        int l = shared ? kv.dim(0) : kv.dim(1);
        require(shared ? kv.dim(1) == c : (kv.dim(0) == n && kv.dim(2) == c), ErrorKind::shape,
                "attention: context shape " + shape_str(kv.shape));
        require(c % heads == 0, ErrorKind::config, "attention: heads must divide channels");
        int dh = c / heads;
        T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));

        Tensor<T> out(qv.shape);
        // Cache softmax probabilities for the backward pass.
        auto probs = std::make_shared<Tensor<T>>(Shape{n, heads, s, l});
        EigenRowMat<T> scores(s, l);
        for (int i = 0; i < n; ++i) {
            const T* kbase = shared ? kv.data() : kv.data() + int64_t(i) * l * c;
            const T* vbase = shared ? vv.data() : vv.data() + int64_t(i) * l * c;
            for (int h = 0; h < heads; ++h) {
                Eigen::Map<const EigenRowMat<T>, 0, Eigen::OuterStride<>> Q(
                    qv.data() + int64_t(i) * s * c + h * dh, s, dh, Eigen::OuterStride<>(c));
                Eigen::Map<const EigenRowMat<T>, 0, Eigen::OuterStride<>> K(kbase + h * dh, l, dh,
                                                                            Eigen::OuterStride<>(c));
                Eigen::Map<const EigenRowMat<T>, 0, Eigen::OuterStride<>> V(vbase + h * dh, l, dh,
                                                                            Eigen::OuterStride<>(c));
                scores.noalias() = Q * K.transpose() * inv_sqrt;
                MatMap<T> P(probs->data() + ((int64_t(i) * heads + h) * s) * l, s, l);
                for (int r = 0; r < s; ++r) {
                    T mx = scores.row(r).maxCoeff();
                    T sum = 0;
                    for (int col = 0; col < l; ++col) {
                        T e = std::exp(scores(r, col) - mx);
                        P(r, col) = e;
                        sum += e;
                    }
                    P.row(r) /= sum;
                }
                Eigen::Map<EigenRowMat<T>, 0, Eigen::OuterStride<>> O(out.data() + int64_t(i) * s * c + h * dh, s,
                                                                      dh, Eigen::OuterStride<>(c));
                O.noalias() = P * V;
            }
        }
        Var y = push(std::move(out), grad_enabled_ && (needs_grad(q) || needs_grad(k) || needs_grad(v)),
                     {q, k, v});
        if (nodes_.back().needs_grad) {
            nodes_[static_cast<size_t>(y)].back = [this, q, k, v, y, n, s, c, l, dh, heads, shared, inv_sqrt,
                                                   probs]() {
                Graph& g = *this;
                const Tensor<T>& gy = g.gradbuf(y);
                Tensor<T>* gq = g.needs_grad(q) ? &g.gradbuf(q) : nullptr;
                Tensor<T>* gk = g.needs_grad(k) ? &g.gradbuf(k) : nullptr;
                Tensor<T>* gv = g.needs_grad(v) ? &g.gradbuf(v) : nullptr;
                const Tensor<T>& qv = g.val(q);
                const Tensor<T>& kv = g.val(k);
                const Tensor<T>& vv = g.val(v);
                EigenRowMat<T> dP(s, l), dS(s, l);
                for (int i = 0; i < n; ++i) {
                    const T* kbase = shared ? kv.data() : kv.data() + int64_t(i) * l * c;
                    const T* vbase = shared ? vv.data() : vv.data() + int64_t(i) * l * c;
                    T* gkbase = gk ? (shared ? gk->data() : gk->data() + int64_t(i) * l * c) : nullptr;
                    T* gvbase = gv ? (shared ? gv->data() : gv->data() + int64_t(i) * l * c) : nullptr;
                    for (int h = 0; h < heads; ++h) {
                        ConstMatMap<T> P(probs->data() + ((int64_t(i) * heads + h) * s) * l, s, l);
                        Eigen::Map<const EigenRowMat<T>, 0, Eigen::OuterStride<>> GO(
                            gy.data() + int64_t(i) * s * c + h * dh, s, dh, Eigen::OuterStride<>(c));
                        Eigen::Map<const EigenRowMat<T>, 0, Eigen::OuterStride<>> Q(
                            qv.data() + int64_t(i) * s * c + h * dh, s, dh, Eigen::OuterStride<>(c));
                        Eigen::Map<const EigenRowMat<T>, 0, Eigen::OuterStride<>> K(kbase + h * dh, l, dh,
                                                                                    Eigen::OuterStride<>(c));
                        Eigen::Map<const EigenRowMat<T>, 0, Eigen::OuterStride<>> V(vbase + h * dh, l, dh,
                                                                                    Eigen::OuterStride<>(c));
                        if (gv) {
                            Eigen::Map<EigenRowMat<T>, 0, Eigen::OuterStride<>> GV(gvbase + h * dh, l, dh,
                                                                                   Eigen::OuterStride<>(c));
                            GV.noalias() += P.transpose() * GO;
                        }
                        dP.noalias() = GO * V.transpose();
                        for (int r = 0; r < s; ++r) {
                            T dot = 0;
                            for (int col = 0; col < l; ++col) dot += dP(r, col) * P(r, col);
                            for (int col = 0; col < l; ++col) dS(r, col) = P(r, col) * (dP(r, col) - dot);
                        }
                        dS *= inv_sqrt;
                        if (gq) {
                            Eigen::Map<EigenRowMat<T>, 0, Eigen::OuterStride<>> GQ(
                                gq->data() + int64_t(i) * s * c + h * dh, s, dh, Eigen::OuterStride<>(c));
                            GQ.noalias() += dS * K;
                        }
                        if (gk) {
                            Eigen::Map<EigenRowMat<T>, 0, Eigen::OuterStride<>> GK(gkbase + h * dh, l, dh,
                                                                                   Eigen::OuterStride<>(c));
                            GK.noalias() += dS.transpose() * Q;
                        }
                    }
                }
            };
        }
        return y;
    }

    // ---- conv / norm / pooling -----------------------------------------------

    // x (N,H,W,Cin), w (KH,KW,Cin,Cout), bias (Cout). Zero padding.
    Var conv2d(Var x, Var w, Var bias, int stride, int pad) {
        const Tensor<T>& xv = val(x);
        const Tensor<T>& wv = val(w);
        require(xv.rank() == 4 && wv.rank() == 4, ErrorKind::shape, "conv2d: ranks");
        int n = xv.dim(0), hh = xv.dim(1), ww = xv.dim(2), cin = xv.dim(3);
        int kh = wv.dim(0), kw = wv.dim(1);
        require(wv.dim(2) == cin, ErrorKind::shape, "conv2d: cin mismatch");
        int cout = wv.dim(3);
        int ho = (hh + 2 * pad - kh) / stride + 1;
        int wo = (ww + 2 * pad - kw) / stride + 1;
        int64_t rows = int64_t(n) * ho * wo;
        int cols_k = kh * kw * cin;

        auto cols = std::make_shared<Tensor<T>>(Shape{static_cast<int>(rows), cols_k});
        im2col(xv, n, hh, ww, cin, kh, kw, stride, pad, ho, wo, cols->data());

        Tensor<T> out(Shape{n, ho, wo, cout});
        ConstMatMap<T> CM(cols->data(), rows, cols_k), WM(wv.data(), cols_k, cout);
        MatMap<T> OM(out.data(), rows, cout);
        OM.noalias() = CM * WM;
        if (bias >= 0) {
            const Tensor<T>& bv = val(bias);
            for (int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < cout; ++j) out[r * cout + j] += bv[j];
        }
        std::vector<Var> parents = {x, w};
        if (bias >= 0) parents.push_back(bias);
        bool ng = grad_enabled_ && (needs_grad(x) || needs_grad(w) || (bias >= 0 && needs_grad(bias)));
        Var y = push(std::move(out), ng, parents);
        if (ng) {
            nodes_[static_cast<size_t>(y)].back = [this, x, w, bias, y, n, hh, ww, cin, kh, kw, stride, pad, ho,
                                                   wo, cout, rows, cols_k, cols]() {
                Graph& g = *this;
                const Tensor<T>& gy = g.gradbuf(y);
                ConstMatMap<T> GY(gy.data(), rows, cout);
                if (g.needs_grad(w)) {
                    ConstMatMap<T> CM(cols->data(), rows, cols_k);
                    MatMap<T> GW(g.gradbuf(w).data(), cols_k, cout);
                    GW.noalias() += CM.transpose() * GY;
                }
                if (bias >= 0 && g.needs_grad(bias)) {
                    Tensor<T>& gb = g.gradbuf(bias);
                    for (int64_t r = 0; r < rows; ++r)
                        for (int j = 0; j < cout; ++j) gb[j] += gy[r * cout + j];
                }
                if (g.needs_grad(x)) {
                    Tensor<T> dcols(Shape{static_cast<int>(rows), cols_k});
                    ConstMatMap<T> WM(g.val(w).data(), cols_k, cout);
                    MatMap<T> DC(dcols.data(), rows, cols_k);
                    DC.noalias() = GY * WM.transpose();
                    col2im_acc(dcols.data(), n, hh, ww, cin, kh, kw, stride, pad, ho, wo, g.gradbuf(x).data());
                }
            };
        }
        return y;
    }

    // GroupNorm over (spatial x channels-in-group) per sample. x (N,...,C).
    Var group_norm(Var x, Var gamma, Var beta, int groups, T eps) {
        const Tensor<T>& xv = val(x);
        int c = xv.shape.back();
        require(c % groups == 0, ErrorKind::config, "group_norm: groups must divide channels");
        int n = xv.dim(0);
        int64_t spatial = xv.numel() / (int64_t(n) * c);
        int cg = c / groups;
        int64_t m = spatial * cg;  // elements per (sample, group)

        auto xhat = std::make_shared<Tensor<T>>(xv.shape);
        auto inv_std = std::make_shared<Tensor<T>>(Shape{n, groups});
        Tensor<T> out(xv.shape);
        const Tensor<T>& gv = val(gamma);
        const Tensor<T>& bv = val(beta);
        for (int i = 0; i < n; ++i) {
            for (int gidx = 0; gidx < groups; ++gidx) {
                T mean = 0;
                for (int64_t s = 0; s < spatial; ++s)
                    for (int j = 0; j < cg; ++j) mean += xv[(int64_t(i) * spatial + s) * c + gidx * cg + j];
                mean /= static_cast<T>(m);
                T var = 0;
                for (int64_t s = 0; s < spatial; ++s)
                    for (int j = 0; j < cg; ++j) {
                        T d = xv[(int64_t(i) * spatial + s) * c + gidx * cg + j] - mean;
                        var += d * d;
                    }
                var /= static_cast<T>(m);
                T istd = T(1) / std::sqrt(var + eps);
                (*inv_std)[int64_t(i) * groups + gidx] = istd;
                for (int64_t s = 0; s < spatial; ++s)
                    for (int j = 0; j < cg; ++j) {
                        int64_t p = (int64_t(i) * spatial + s) * c + gidx * cg + j;
                        T xh = (xv[p] - mean) * istd;
                        (*xhat)[p] = xh;
                        out[p] = xh * gv[gidx * cg + j] + bv[gidx * cg + j];
                    }
            }
        }
        bool ng = grad_enabled_ && (needs_grad(x) || needs_grad(gamma) || needs_grad(beta));
        Var y = push(std::move(out), ng, {x, gamma, beta});
        if (ng) {
            nodes_[static_cast<size_t>(y)].back = [this, x, gamma, beta, y, n, spatial, c, cg, groups, m, xhat,
                                                   inv_std]() {
                Graph& g = *this;
                const Tensor<T>& gy = g.gradbuf(y);
                const Tensor<T>& gv = g.val(gamma);
                if (g.needs_grad(gamma)) {
                    Tensor<T>& gg = g.gradbuf(gamma);
                    for (int i = 0; i < n; ++i)
                        for (int64_t s = 0; s < spatial; ++s)
                            for (int j = 0; j < c; ++j) {
                                int64_t p = (int64_t(i) * spatial + s) * c + j;
                                gg[j] += gy[p] * (*xhat)[p];
                            }
                }
                if (g.needs_grad(beta)) {
                    Tensor<T>& gb = g.gradbuf(beta);
                    for (int i = 0; i < n; ++i)
                        for (int64_t s = 0; s < spatial; ++s)
                            for (int j = 0; j < c; ++j) gb[j] += gy[(int64_t(i) * spatial + s) * c + j];
                }
                if (g.needs_grad(x)) {
                    Tensor<T>& gx = g.gradbuf(x);
                    for (int i = 0; i < n; ++i)
                        for (int gidx = 0; gidx < groups; ++gidx) {
                            T istd = (*inv_std)[int64_t(i) * groups + gidx];
                            T sum_dh = 0, sum_dh_xh = 0;
                            for (int64_t s = 0; s < spatial; ++s)
                                for (int j = 0; j < cg; ++j) {
                                    int64_t p = (int64_t(i) * spatial + s) * c + gidx * cg + j;
                                    T dh = gy[p] * gv[gidx * cg + j];
                                    sum_dh += dh;
                                    sum_dh_xh += dh * (*xhat)[p];
                                }
                            T inv_m = T(1) / static_cast<T>(m);
                            for (int64_t s = 0; s < spatial; ++s)
                                for (int j = 0; j < cg; ++j) {
                                    int64_t p = (int64_t(i) * spatial + s) * c + gidx * cg + j;
                                    T dh = gy[p] * gv[gidx * cg + j];
                                    gx[p] += istd * (dh - inv_m * sum_dh - (*xhat)[p] * inv_m * sum_dh_xh);
                                }
                        }
                }
            };
        }
        return y;
    }

    Var upsample_nearest2x(Var x) {
        const Tensor<T>& xv = val(x);
        require(xv.rank() == 4, ErrorKind::shape, "upsample: expects (N,H,W,C)");
        int n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
        Tensor<T> out(Shape{n, 2 * h, 2 * w, c});
        for (int i = 0; i < n; ++i)
            for (int y0 = 0; y0 < 2 * h; ++y0)
                for (int x0 = 0; x0 < 2 * w; ++x0) {
                    const T* src = xv.data() + ((int64_t(i) * h + y0 / 2) * w + x0 / 2) * c;
                    T* dst = out.data() + ((int64_t(i) * 2 * h + y0) * 2 * w + x0) * c;
                    std::copy_n(src, c, dst);
                }
        return unary(std::move(out), x, [n, h, w, c](Graph& g, Var x, Var y) {
            const Tensor<T>& gy = g.gradbuf(y);
            Tensor<T>& gx = g.gradbuf(x);
            for (int i = 0; i < n; ++i)
                for (int y0 = 0; y0 < 2 * h; ++y0)
                    for (int x0 = 0; x0 < 2 * w; ++x0) {
                        const T* src = gy.data() + ((int64_t(i) * 2 * h + y0) * 2 * w + x0) * c;
                        T* dst = gx.data() + ((int64_t(i) * h + y0 / 2) * w + x0 / 2) * c;
                        for (int j = 0; j < c; ++j) dst[j] += src[j];
                    }
        });
    }

    Var global_avg_pool(Var x) {
        const Tensor<T>& xv = val(x);
        require(xv.rank() == 4, ErrorKind::shape, "gap: expects (N,H,W,C)");
        int n = xv.dim(0), hw = xv.dim(1) * xv.dim(2), c = xv.dim(3);
        Tensor<T> out(Shape{n, c});
        for (int i = 0; i < n; ++i)
            for (int s = 0; s < hw; ++s)
                for (int j = 0; j < c; ++j) out[int64_t(i) * c + j] += xv[(int64_t(i) * hw + s) * c + j];
        T inv = T(1) / static_cast<T>(hw);
        for (auto& v : out.v) v *= inv;
        return unary(std::move(out), x, [n, hw, c, inv](Graph& g, Var x, Var y) {
            const Tensor<T>& gy = g.gradbuf(y);
            Tensor<T>& gx = g.gradbuf(x);
            for (int i = 0; i < n; ++i)
                for (int s = 0; s < hw; ++s)
                    for (int j = 0; j < c; ++j) gx[(int64_t(i) * hw + s) * c + j] += gy[int64_t(i) * c + j] * inv;
        });
    }

    // Select rows of a (K,d) table: indices (N) -> (N,d). Backward scatter-adds.
    Var rows_select(Var table, std::vector<int> indices) {
        const Tensor<T>& tv = val(table);
        require(tv.rank() == 2, ErrorKind::shape, "rows_select: table must be 2-D");
        int k = tv.dim(0), d = tv.dim(1);
        int n = static_cast<int>(indices.size());
        for (int idx : indices)
            require(idx >= 0 && idx < k, ErrorKind::lookup, "rows_select: index out of range");
        Tensor<T> out(Shape{n, d});
        for (int i = 0; i < n; ++i) std::copy_n(tv.data() + int64_t(indices[size_t(i)]) * d, d, out.data() + int64_t(i) * d);
        auto idxs = std::make_shared<std::vector<int>>(std::move(indices));
        return unary(std::move(out), table, [d, idxs](Graph& g, Var table, Var y) {
            const Tensor<T>& gy = g.gradbuf(y);
            Tensor<T>& gt = g.gradbuf(table);
            for (size_t i = 0; i < idxs->size(); ++i)
                for (int j = 0; j < d; ++j) gt[int64_t((*idxs)[i]) * d + j] += gy[int64_t(i) * d + j];
        });
    }

    // ---- reductions ------------------------------------------------------------

    Var sum(Var x) {
        T s = 0;
        for (const auto& v : val(x).v) s += v;
        return unary(Tensor<T>(Shape{1}, std::vector<T>{s}), x, [](Graph& g, Var x, Var y) {
            const T gy = g.gradbuf(y)[0];
            Tensor<T>& gx = g.gradbuf(x);
            for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += gy;
        });
    }

    Var mse(Var a, Var b) {
        check_same(a, b, "mse");
        const Tensor<T>& av = val(a);
        const Tensor<T>& bv = val(b);
        T s = 0;
        for (int64_t i = 0; i < av.numel(); ++i) {
            T d = av[i] - bv[i];
            s += d * d;
        }
        int64_t numel = av.numel();
        s /= static_cast<T>(numel);
        return unary_binary(Tensor<T>(Shape{1}, std::vector<T>{s}), a, b,
                            [numel](Graph& g, Var a, Var b, Var y) {
                                const T gy = g.gradbuf(y)[0];
                                const Tensor<T>& av = g.val(a);
                                const Tensor<T>& bv = g.val(b);
                                T c = T(2) / static_cast<T>(numel) * gy;
                                if (g.needs_grad(a)) {
                                    Tensor<T>& ga = g.gradbuf(a);
                                    for (int64_t i = 0; i < av.numel(); ++i) ga[i] += c * (av[i] - bv[i]);
                                }
                                if (g.needs_grad(b)) {
                                    Tensor<T>& gb = g.gradbuf(b);
                                    for (int64_t i = 0; i < av.numel(); ++i) gb[i] -= c * (av[i] - bv[i]);
                                }
                            });
    }

    // Mean cross entropy over rows; logits (N,K).
    Var softmax_xent(Var logits, std::vector<int> labels) {
        const Tensor<T>& lv = val(logits);
        require(lv.rank() == 2, ErrorKind::shape, "softmax_xent: logits must be (N,K)");
        int n = lv.dim(0), k = lv.dim(1);
        require(static_cast<int>(labels.size()) == n, ErrorKind::shape, "softmax_xent: labels size");
        auto probs = std::make_shared<Tensor<T>>(lv.shape);
        T loss = 0;
        for (int i = 0; i < n; ++i) {
            const T* row = lv.data() + int64_t(i) * k;
            T mx = row[0];
            for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
            T sum = 0;
            for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
            T logz = std::log(sum) + mx;
            for (int j = 0; j < k; ++j) (*probs)[int64_t(i) * k + j] = std::exp(row[j] - logz);
            loss -= (row[labels[size_t(i)]] - logz);
        }
        loss /= static_cast<T>(n);
        auto lab = std::make_shared<std::vector<int>>(std::move(labels));
        return unary(Tensor<T>(Shape{1}, std::vector<T>{loss}), logits,
                     [n, k, probs, lab](Graph& g, Var logits, Var y) {
                         const T gy = g.gradbuf(y)[0];
                         Tensor<T>& gl = g.gradbuf(logits);
                         T inv_n = T(1) / static_cast<T>(n);
                         for (int i = 0; i < n; ++i)
                             for (int j = 0; j < k; ++j) {
                                 T p = (*probs)[int64_t(i) * k + j];
                                 T t = (j == (*lab)[size_t(i)]) ? T(1) : T(0);
                                 gl[int64_t(i) * k + j] += gy * inv_n * (p - t);
                             }
                     });
    }

    // ---- backward ---------------------------------------------------------------

    void backward(Var loss) {
        require(grad_enabled_, ErrorKind::runtime, "backward: graph built without gradients");
        require(val(loss).numel() == 1, ErrorKind::shape, "backward: loss must be scalar");
        gradbuf(loss)[0] = T(1);
        for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
            Node& nd = nodes_[static_cast<size_t>(id)];
            if (nd.back && nd.grad_alloc && nd.needs_grad) nd.back();
        }
        for (auto& [id, p] : bound_) {
            Node& nd = nodes_[static_cast<size_t>(id)];
            if (!nd.grad_alloc) continue;
            for (int64_t i = 0; i < nd.grad.numel(); ++i) p->grad[i] += nd.grad[i];
        }
    }

    Tensor<T>& gradbuf(Var id) {
        Node& nd = nodes_[static_cast<size_t>(id)];
        if (!nd.grad_alloc) {
            nd.grad = Tensor<T>(nd.val.shape);
            nd.grad_alloc = true;
        }
        return nd.grad;
    }

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        bool grad_alloc = false;
        bool needs_grad = false;
        std::function<void()> back;
    };

    std::vector<Node> nodes_;
    std::vector<std::pair<Var, Param<T>*>> bound_;
    bool grad_enabled_;

    Var push(Tensor<T> value, bool needs_grad, const std::vector<Var>& parents) {
        (void)parents;
        Node nd;
        nd.val = std::move(value);
        nd.needs_grad = needs_grad;
        nodes_.push_back(std::move(nd));
        return static_cast<Var>(nodes_.size() - 1);
    }

    Var push_ref_copy(const Tensor<T>& value, bool needs_grad, const std::vector<Var>& parents) {
        return push(value, needs_grad, parents);
    }

    void acc(Var id, const Tensor<T>& g) {
        Tensor<T>& buf = gradbuf(id);
        for (int64_t i = 0; i < g.numel(); ++i) buf[i] += g[i];
    }

    void check_same(Var a, Var b, const char* op) {
        require(val(a).same_shape(val(b)), ErrorKind::shape,
                std::string(op) + ": shape mismatch " + shape_str(val(a).shape) + " vs " + shape_str(val(b).shape));
    }

    template <typename F>
    Var unary(Tensor<T> out, Var a, F&& fn) {
        bool ng = grad_enabled_ && needs_grad(a);
        Var y = push(std::move(out), ng, {a});
        if (ng) {
            nodes_[static_cast<size_t>(y)].back = [this, a, y, fn]() { fn(*this, a, y); };
        }
        return y;
    }

    template <typename F>
    Var unary_binary(Tensor<T> out, Var a, Var b, F&& fn) {
        bool ng = grad_enabled_ && (needs_grad(a) || needs_grad(b));
        Var y = push(std::move(out), ng, {a, b});
        if (ng) {
            nodes_[static_cast<size_t>(y)].back = [this, a, b, y, fn]() { fn(*this, a, b, y); };
        }
        return y;
    }

    static void im2col(const Tensor<T>& x, int n, int h, int w, int cin, int kh, int kw, int stride, int pad,
                       int ho, int wo, T* cols) {
        int64_t row = 0;
        for (int i = 0; i < n; ++i)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox, ++row) {
                    T* dst = cols + row * (int64_t(kh) * kw * cin);
                    for (int ky = 0; ky < kh; ++ky) {
                        int iy = oy * stride - pad + ky;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ix = ox * stride - pad + kx;
                            T* d = dst + (int64_t(ky) * kw + kx) * cin;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
                                std::fill_n(d, cin, T(0));
                            } else {
                                const T* src = x.data() + ((int64_t(i) * h + iy) * w + ix) * cin;
                                std::copy_n(src, cin, d);
                            }
                        }
                    }
                }
    }

    static void col2im_acc(const T* dcols, int n, int h, int w, int cin, int kh, int kw, int stride, int pad,
                           int ho, int wo, T* dx) {
        int64_t row = 0;
        for (int i = 0; i < n; ++i)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox, ++row) {
                    const T* src = dcols + row * (int64_t(kh) * kw * cin);
                    for (int ky = 0; ky < kh; ++ky) {
                        int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= w) continue;
                            const T* s = src + (int64_t(ky) * kw + kx) * cin;
                            T* d = dx + ((int64_t(i) * h + iy) * w + ix) * cin;
                            for (int j = 0; j < cin; ++j) d[j] += s[j];
                        }
                    }
                }
    }
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

}  // namespace bgg
