#pragma once
// Dense row-major tensor of small rank. Value semantics; shape is a plain
// vector of extents. float is the production scalar, double is used by the
// finite-difference verification paths.

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "bgg/error.hpp"
#include "bgg/rng.hpp"

namespace bgg {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), T(0)) {}
    Tensor(Shape s, T fill) : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), fill) {}
    Tensor(Shape s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
        require(static_cast<int64_t>(v.size()) == shape_numel(shape), ErrorKind::shape,
                "tensor data size does not match shape " + shape_str(shape));
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    T& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, T value) { return Tensor(std::move(s), value); }

    static Tensor randn(Shape s, Rng& rng, T stddev = T(1)) {
        Tensor t(std::move(s));
        for (auto& x : t.v) x = static_cast<T>(rng.normal()) * stddev;
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.v.resize(v.size());
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.same_shape(b), ErrorKind::shape, "max_abs_diff: shape mismatch");
    T m = 0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace bgg
