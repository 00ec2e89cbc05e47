#pragma once

// Minimal trainable layer zoo with explicit tapes: conv (im2col + GEMM),
// 2x pooling/upsampling, SiLU, single-head self-attention, linear, embedding
// tables. Forward pushes saved state onto a per-call tape; backward pops in
// exact reverse order, so several forwards can be in flight at once (the
// cycle chains rely on that).

#include <Eigen/Dense>

#include <cassert>
#include <random>
#include <string>
#include <vector>

#include "ouro/tensor.hpp"

namespace ouro::nn {

template <typename S>
using RMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
struct Param {
    std::string name;
    std::vector<int> dims;
    std::vector<S> v, g;

    Param() = default;
    Param(std::string n, std::vector<int> d) : name(std::move(n)), dims(std::move(d)) {
        std::size_t sz = 1;
        for (int x : dims) sz *= std::size_t(x);
        v.assign(sz, S(0));
        g.assign(sz, S(0));
    }
    std::size_t size() const { return v.size(); }
    void zero_grad() { std::fill(g.begin(), g.end(), S(0)); }
};

template <typename S>
struct Tape {
    std::vector<Tensor<S>> tens;
    std::vector<RMat<S>> mats;

    void push(Tensor<S> t) { tens.push_back(std::move(t)); }
    Tensor<S> pop() {
        assert(!tens.empty());
        Tensor<S> t = std::move(tens.back());
        tens.pop_back();
        return t;
    }
    void push_mat(RMat<S> m) { mats.push_back(std::move(m)); }
    RMat<S> pop_mat() {
        assert(!mats.empty());
        RMat<S> m = std::move(mats.back());
        mats.pop_back();
        return m;
    }
    bool empty() const { return tens.empty() && mats.empty(); }
};

// ---- conv ------------------------------------------------------------------

template <typename S>
struct Conv2d {
    int in_c = 0, out_c = 0, k = 3;
    Param<S> w, b;  // w: out_c x (in_c*k*k), row-major

    Conv2d() = default;
    Conv2d(const std::string& name, int in, int out, int kernel) : in_c(in), out_c(out), k(kernel) {
        w = Param<S>(name + ".w", {out, in * kernel * kernel});
        b = Param<S>(name + ".b", {out});
    }

    void init(std::mt19937_64& rng, double gain = 1.0) {
        std::normal_distribution<double> nd(0.0, gain * std::sqrt(2.0 / double(in_c * k * k)));
        for (auto& x : w.v) x = S(nd(rng));
        std::fill(b.v.begin(), b.v.end(), S(0));
    }

    RMat<S> im2col(const Tensor<S>& x) const {
        const int pad = k / 2, H = x.h, W = x.w;
        RMat<S> cols(in_c * k * k, H * W);
        cols.setZero();
        for (int ci = 0; ci < in_c; ++ci)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    int row = (ci * k + ky) * k + kx;
                    for (int y = 0; y < H; ++y) {
                        int sy = y + ky - pad;
                        if (sy < 0 || sy >= H) continue;
                        for (int xx = 0; xx < W; ++xx) {
                            int sx = xx + kx - pad;
                            if (sx < 0 || sx >= W) continue;
                            cols(row, y * W + xx) = x.at(sy, sx, ci);
                        }
                    }
                }
        return cols;
    }

    Tensor<S> forward(const Tensor<S>& x, Tape<S>* tape) const {
        if (x.c != in_c) throw std::invalid_argument("conv " + w.name + ": channel mismatch");
        RMat<S> cols = im2col(x);
        Eigen::Map<const RMat<S>> W(w.v.data(), out_c, in_c * k * k);
        RMat<S> out_mat = W * cols;  // out_c x HW
        Tensor<S> y(x.h, x.w, out_c);
        for (int o = 0; o < out_c; ++o) {
            S bias = b.v[o];
            for (int p = 0; p < x.h * x.w; ++p) y.v[std::size_t(p) * out_c + o] = out_mat(o, p) + bias;
        }
        if (tape) tape->push(x);
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy, Tape<S>& tape) {
        Tensor<S> x = tape.pop();
        const int H = x.h, W2 = x.w, HW = H * W2;
        RMat<S> cols = im2col(x);
        RMat<S> dY(out_c, HW);
        for (int o = 0; o < out_c; ++o)
            for (int p = 0; p < HW; ++p) dY(o, p) = dy.v[std::size_t(p) * out_c + o];

        Eigen::Map<RMat<S>> gW(w.g.data(), out_c, in_c * k * k);
        gW.noalias() += dY * cols.transpose();
        for (int o = 0; o < out_c; ++o) b.g[o] += dY.row(o).sum();

        Eigen::Map<const RMat<S>> Wm(w.v.data(), out_c, in_c * k * k);
        RMat<S> dcols = Wm.transpose() * dY;  // (in_c*k*k) x HW

        Tensor<S> dx(H, W2, in_c);
        const int pad = k / 2;
        for (int ci = 0; ci < in_c; ++ci)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    int row = (ci * k + ky) * k + kx;
                    for (int y = 0; y < H; ++y) {
                        int sy = y + ky - pad;
                        if (sy < 0 || sy >= H) continue;
                        for (int xx = 0; xx < W2; ++xx) {
                            int sx = xx + kx - pad;
                            if (sx < 0 || sx >= W2) continue;
                            dx.at(sy, sx, ci) += dcols(row, y * W2 + xx);
                        }
                    }
                }
        return dx;
    }

    std::vector<Param<S>*> params() { return {&w, &b}; }
};

// ---- pooling / upsampling --------------------------------------------------

template <typename S>
Tensor<S> avgpool2(const Tensor<S>& x) {
    Tensor<S> y(x.h / 2, x.w / 2, x.c);
    for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx)
            for (int c = 0; c < x.c; ++c)
                y.at(yy, xx, c) = (x.at(2 * yy, 2 * xx, c) + x.at(2 * yy, 2 * xx + 1, c) +
                                   x.at(2 * yy + 1, 2 * xx, c) + x.at(2 * yy + 1, 2 * xx + 1, c)) *
                                  S(0.25);
    return y;
}

template <typename S>
Tensor<S> avgpool2_backward(const Tensor<S>& dy) {
    Tensor<S> dx(dy.h * 2, dy.w * 2, dy.c);
    for (int yy = 0; yy < dy.h; ++yy)
        for (int xx = 0; xx < dy.w; ++xx)
            for (int c = 0; c < dy.c; ++c) {
                S g = dy.at(yy, xx, c) * S(0.25);
                dx.at(2 * yy, 2 * xx, c) = g;
                dx.at(2 * yy, 2 * xx + 1, c) = g;
                dx.at(2 * yy + 1, 2 * xx, c) = g;
                dx.at(2 * yy + 1, 2 * xx + 1, c) = g;
            }
    return dx;
}

template <typename S>
Tensor<S> upsample2(const Tensor<S>& x) {
    Tensor<S> y(x.h * 2, x.w * 2, x.c);
    for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx)
            for (int c = 0; c < x.c; ++c) y.at(yy, xx, c) = x.at(yy / 2, xx / 2, c);
    return y;
}

template <typename S>
Tensor<S> upsample2_backward(const Tensor<S>& dy) {
    Tensor<S> dx(dy.h / 2, dy.w / 2, dy.c);
    for (int yy = 0; yy < dy.h; ++yy)
        for (int xx = 0; xx < dy.w; ++xx)
            for (int c = 0; c < dy.c; ++c) dx.at(yy / 2, xx / 2, c) += dy.at(yy, xx, c);
    return dx;
}

// ---- activation ------------------------------------------------------------

template <typename S>
Tensor<S> silu(const Tensor<S>& x, Tape<S>* tape) {
    Tensor<S> y = x;
    for (auto& v : y.v) {
        S s = S(1) / (S(1) + std::exp(-v));
        v = v * s;
    }
    if (tape) tape->push(x);
    return y;
}

template <typename S>
Tensor<S> silu_backward(const Tensor<S>& dy, Tape<S>& tape) {
    Tensor<S> x = tape.pop();
    Tensor<S> dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i) {
        S s = S(1) / (S(1) + std::exp(-x.v[i]));
        dx.v[i] *= s * (S(1) + x.v[i] * (S(1) - s));
    }
    return dx;
}

// ---- attention -------------------------------------------------------------

// Single-head residual self-attention over an N x d token matrix.
template <typename S>
struct SelfAttention {
    int d = 0;
    Param<S> wq, wk, wv, wo;  // each d x d, applied on the right

    SelfAttention() = default;
    SelfAttention(const std::string& name, int dim) : d(dim) {
        wq = Param<S>(name + ".wq", {dim, dim});
        wk = Param<S>(name + ".wk", {dim, dim});
        wv = Param<S>(name + ".wv", {dim, dim});
        wo = Param<S>(name + ".wo", {dim, dim});
    }

    void init(std::mt19937_64& rng) {
        std::normal_distribution<double> nd(0.0, std::sqrt(1.0 / double(d)));
        for (auto* p : {&wq, &wk, &wv, &wo})
            for (auto& x : p->v) x = S(nd(rng));
        // small output projection keeps the residual branch near identity at init
        for (auto& x : wo.v) x *= S(0.1);
    }

    RMat<S> forward_tokens(const RMat<S>& X, Tape<S>* tape) const {
        Eigen::Map<const RMat<S>> Wq(wq.v.data(), d, d), Wk(wk.v.data(), d, d), Wv(wv.v.data(), d, d),
            Wo(wo.v.data(), d, d);
        RMat<S> Q = X * Wq, K = X * Wk, V = X * Wv;
        RMat<S> A = Q * K.transpose() * S(1.0 / std::sqrt(double(d)));
        for (Eigen::Index i = 0; i < A.rows(); ++i) {
            S mx = A.row(i).maxCoeff();
            A.row(i) = (A.row(i).array() - mx).exp();
            A.row(i) /= A.row(i).sum();
        }
        RMat<S> Y0 = A * V;
        RMat<S> out = X + Y0 * Wo;
        if (tape) {
            tape->push_mat(X);
            tape->push_mat(Q);
            tape->push_mat(K);
            tape->push_mat(V);
            tape->push_mat(A);
            tape->push_mat(Y0);
        }
        return out;
    }

    RMat<S> backward_tokens(const RMat<S>& dout, Tape<S>& tape) {
        RMat<S> Y0 = tape.pop_mat();
        RMat<S> A = tape.pop_mat();
        RMat<S> V = tape.pop_mat();
        RMat<S> K = tape.pop_mat();
        RMat<S> Q = tape.pop_mat();
        RMat<S> X = tape.pop_mat();
        Eigen::Map<const RMat<S>> Wq(wq.v.data(), d, d), Wk(wk.v.data(), d, d), Wv(wv.v.data(), d, d),
            Wo(wo.v.data(), d, d);
        Eigen::Map<RMat<S>> gWq(wq.g.data(), d, d), gWk(wk.g.data(), d, d), gWv(wv.g.data(), d, d),
            gWo(wo.g.data(), d, d);

        RMat<S> dY0 = dout * Wo.transpose();
        gWo.noalias() += Y0.transpose() * dout;
        RMat<S> dA = dY0 * V.transpose();
        RMat<S> dV = A.transpose() * dY0;
        // softmax rows
        RMat<S> dL(A.rows(), A.cols());
        for (Eigen::Index i = 0; i < A.rows(); ++i) {
            S dot = (dA.row(i).array() * A.row(i).array()).sum();
            dL.row(i) = A.row(i).array() * (dA.row(i).array() - dot);
        }
        S inv_sqrt_d = S(1.0 / std::sqrt(double(d)));
        RMat<S> dQ = dL * K * inv_sqrt_d;
        RMat<S> dK = dL.transpose() * Q * inv_sqrt_d;

        gWq.noalias() += X.transpose() * dQ;
        gWk.noalias() += X.transpose() * dK;
        gWv.noalias() += X.transpose() * dV;
        RMat<S> dX = dout + dQ * Wq.transpose() + dK * Wk.transpose() + dV * Wv.transpose();
        return dX;
    }

    // Spatial convenience wrappers (tokens = pixels of one map).
    Tensor<S> forward(const Tensor<S>& x, Tape<S>* tape) const {
        Eigen::Map<const RMat<S>> X(x.v.data(), x.h * x.w, x.c);
        RMat<S> out = forward_tokens(RMat<S>(X), tape);
        Tensor<S> y(x.h, x.w, x.c);
        Eigen::Map<RMat<S>>(y.v.data(), y.h * y.w, y.c) = out;
        return y;
    }
    Tensor<S> backward(const Tensor<S>& dy, Tape<S>& tape) {
        Eigen::Map<const RMat<S>> D(dy.v.data(), dy.h * dy.w, dy.c);
        RMat<S> dX = backward_tokens(RMat<S>(D), tape);
        Tensor<S> dx(dy.h, dy.w, dy.c);
        Eigen::Map<RMat<S>>(dx.v.data(), dx.h * dx.w, dx.c) = dX;
        return dx;
    }

    std::vector<Param<S>*> params() { return {&wq, &wk, &wv, &wo}; }
};

// ---- linear / embeddings ---------------------------------------------------

template <typename S>
struct Linear {
    int in = 0, out = 0;
    Param<S> w, b;  // w: out x in

    Linear() = default;
    Linear(const std::string& name, int in_, int out_) : in(in_), out(out_) {
        w = Param<S>(name + ".w", {out_, in_});
        b = Param<S>(name + ".b", {out_});
    }
    void init(std::mt19937_64& rng) {
        std::normal_distribution<double> nd(0.0, std::sqrt(1.0 / double(in)));
        for (auto& x : w.v) x = S(nd(rng));
        std::fill(b.v.begin(), b.v.end(), S(0));
    }

    std::vector<S> forward(const std::vector<S>& x, Tape<S>* tape) const {
        std::vector<S> y(out);
        for (int o = 0; o < out; ++o) {
            S s = b.v[o];
            for (int i = 0; i < in; ++i) s += w.v[std::size_t(o) * in + i] * x[i];
            y[o] = s;
        }
        if (tape) {
            Tensor<S> t(1, in, 1);
            t.v.assign(x.begin(), x.end());
            tape->push(std::move(t));
        }
        return y;
    }

    std::vector<S> backward(const std::vector<S>& dy, Tape<S>& tape) {
        Tensor<S> xt = tape.pop();
        std::vector<S> dx(in, S(0));
        for (int o = 0; o < out; ++o) {
            b.g[o] += dy[o];
            for (int i = 0; i < in; ++i) {
                w.g[std::size_t(o) * in + i] += dy[o] * xt.v[i];
                dx[i] += w.v[std::size_t(o) * in + i] * dy[o];
            }
        }
        return dx;
    }

    std::vector<Param<S>*> params() { return {&w, &b}; }
};

// ---- optimizer -------------------------------------------------------------

template <typename S>
struct AdamState {
    std::vector<S> m, v;
};

template <typename S>
struct Adam {
    double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, clip = 1.0;
    long step_count = 0;
    std::vector<AdamState<S>> state;

    void attach(const std::vector<Param<S>*>& params) {
        state.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state[i].m.assign(params[i]->size(), S(0));
            state[i].v.assign(params[i]->size(), S(0));
        }
    }

    void step(const std::vector<Param<S>*>& params) {
        if (state.size() != params.size()) throw std::logic_error("adam: not attached");
        // global gradient-norm clip
        double norm2 = 0;
        for (auto* p : params)
            for (S g : p->g) norm2 += double(g) * double(g);
        double scale = 1.0;
        double norm = std::sqrt(norm2);
        if (clip > 0 && norm > clip) scale = clip / norm;

        ++step_count;
        double bc1 = 1.0 - std::pow(beta1, double(step_count));
        double bc2 = 1.0 - std::pow(beta2, double(step_count));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = *params[i];
            auto& st = state[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                double g = double(p.g[j]) * scale;
                st.m[j] = S(beta1 * double(st.m[j]) + (1 - beta1) * g);
                st.v[j] = S(beta2 * double(st.v[j]) + (1 - beta2) * g * g);
                double mh = double(st.m[j]) / bc1, vh = double(st.v[j]) / bc2;
                p.v[j] -= S(lr * mh / (std::sqrt(vh) + eps));
            }
        }
    }
};

}  // namespace ouro::nn
