#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

namespace ouro {

// Dense H x W x C tensor, row-major, channel-interleaved.
template <typename S>
struct Tensor {
    int h = 0, w = 0, c = 0;
    std::vector<S> v;

    Tensor() = default;
    Tensor(int h_, int w_, int c_, S fill = S(0)) : h(h_), w(w_), c(c_), v(size_t(h_) * w_ * c_, fill) {
        if (h_ < 0 || w_ < 0 || c_ < 0) throw std::invalid_argument("tensor: negative dims");
    }

    std::size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }
    bool same_shape(const Tensor& o) const { return h == o.h && w == o.w && c == o.c; }

    S& at(int y, int x, int ch) { return v[(std::size_t(y) * w + x) * c + ch]; }
    S at(int y, int x, int ch) const { return v[(std::size_t(y) * w + x) * c + ch]; }

    S* data() { return v.data(); }
    const S* data() const { return v.data(); }

    Tensor& operator+=(const Tensor& o) {
        check_shape(o);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        check_shape(o);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= o.v[i];
        return *this;
    }
    Tensor& operator*=(S s) {
        for (auto& x : v) x *= s;
        return *this;
    }

    // this += s * o
    Tensor& axpy(S s, const Tensor& o) {
        check_shape(o);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += s * o.v[i];
        return *this;
    }

    void fill(S s) { std::fill(v.begin(), v.end(), s); }

    bool all_finite() const {
        for (S x : v)
            if (!std::isfinite(double(x))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> r(h, w, c);
        for (std::size_t i = 0; i < v.size(); ++i) r.v[i] = U(v[i]);
        return r;
    }

    void check_shape(const Tensor& o) const {
        if (!same_shape(o)) throw std::invalid_argument("tensor: shape mismatch");
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename S>
Tensor<S> operator+(Tensor<S> a, const Tensor<S>& b) { a += b; return a; }
template <typename S>
Tensor<S> operator-(Tensor<S> a, const Tensor<S>& b) { a -= b; return a; }
template <typename S>
Tensor<S> operator*(Tensor<S> a, S s) { a *= s; return a; }

template <typename S>
Tensor<S> zeros_like(const Tensor<S>& t) { return Tensor<S>(t.h, t.w, t.c); }

// Concatenate along the channel axis.
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.h != b.h || a.w != b.w) throw std::invalid_argument("concat_channels: spatial mismatch");
    Tensor<S> r(a.h, a.w, a.c + b.c);
    for (int y = 0; y < a.h; ++y)
        for (int x = 0; x < a.w; ++x) {
            for (int ch = 0; ch < a.c; ++ch) r.at(y, x, ch) = a.at(y, x, ch);
            for (int ch = 0; ch < b.c; ++ch) r.at(y, x, a.c + ch) = b.at(y, x, ch);
        }
    return r;
}

template <typename S>
Tensor<S> slice_channels(const Tensor<S>& t, int first, int count) {
    if (first < 0 || first + count > t.c) throw std::invalid_argument("slice_channels: out of range");
    Tensor<S> r(t.h, t.w, count);
    for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x)
            for (int ch = 0; ch < count; ++ch) r.at(y, x, ch) = t.at(y, x, first + ch);
    return r;
}

// Replicate a single-channel map across n channels.
template <typename S>
Tensor<S> broadcast_channels(const Tensor<S>& t, int n) {
    if (t.c != 1) throw std::invalid_argument("broadcast_channels: expects 1 channel");
    Tensor<S> r(t.h, t.w, n);
    for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x)
            for (int ch = 0; ch < n; ++ch) r.at(y, x, ch) = t.at(y, x, 0);
    return r;
}

template <typename S>
Tensor<S> mean_channels(const Tensor<S>& t) {
    Tensor<S> r(t.h, t.w, 1);
    for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x) {
            S s = 0;
            for (int ch = 0; ch < t.c; ++ch) s += t.at(y, x, ch);
            r.at(y, x, 0) = s / S(t.c);
        }
    return r;
}

template <typename S>
double max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
    a.check_shape(b);
    double m = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(double(a.v[i]) - double(b.v[i])));
    return m;
}

template <typename S>
double mean_sq(const Tensor<S>& t) {
    double s = 0;
    for (S x : t.v) s += double(x) * double(x);
    return t.v.empty() ? 0.0 : s / double(t.v.size());
}

// Deterministic seed mixing (splitmix64 step).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

template <typename S>
Tensor<S> gaussian_tensor(int h, int w, int c, std::mt19937_64& rng) {
    Tensor<S> t(h, w, c);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& x : t.v) x = S(nd(rng));
    return t;
}

}  // namespace ouro
