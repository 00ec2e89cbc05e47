#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <random>

#include "ouro/nn.hpp"

using namespace ouro;
using nn::RMat;
using nn::Tape;

namespace {

// Central-difference derivative of `loss` w.r.t. one scalar location.
double fd(std::function<double()> loss, double& x, double h = 1e-6) {
    double orig = x;
    x = orig + h;
    double up = loss();
    x = orig - h;
    double dn = loss();
    x = orig;
    return (up - dn) / (2 * h);
}

TensorD randn(int h, int w, int c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return gaussian_tensor<double>(h, w, c, rng);
}

double weighted_sum(const TensorD& y, const TensorD& r) {
    double s = 0;
    for (std::size_t i = 0; i < y.v.size(); ++i) s += y.v[i] * r.v[i];
    return s;
}

}  // namespace

TEST_CASE("conv2d gradients match finite differences") {
    nn::Conv2d<double> conv("c", 2, 3, 3);
    std::mt19937_64 rng(11);
    conv.init(rng);
    TensorD x = randn(5, 4, 2, 21);
    TensorD r = randn(5, 4, 3, 22);

    auto loss = [&] {
        return weighted_sum(conv.forward(x, nullptr), r);
    };

    Tape<double> tape;
    TensorD y = conv.forward(x, &tape);
    conv.w.zero_grad();
    conv.b.zero_grad();
    TensorD dx = conv.backward(r, tape);

    for (std::size_t i : {0ul, 7ul, 19ul}) {
        REQUIRE(dx.v[i] == Catch::Approx(fd(loss, x.v[i])).margin(1e-6));
    }
    for (std::size_t i : {0ul, 5ul, 30ul}) {
        REQUIRE(conv.w.g[i] == Catch::Approx(fd(loss, conv.w.v[i])).margin(1e-6));
    }
    REQUIRE(conv.b.g[1] == Catch::Approx(fd(loss, conv.b.v[1])).margin(1e-6));
}

TEST_CASE("silu gradient matches finite differences") {
    TensorD x = randn(3, 3, 2, 5);
    TensorD r = randn(3, 3, 2, 6);
    auto loss = [&] { return weighted_sum(nn::silu<double>(x, nullptr), r); };
    Tape<double> tape;
    nn::silu<double>(x, &tape);
    TensorD dx = nn::silu_backward(r, tape);
    for (std::size_t i = 0; i < x.v.size(); ++i)
        REQUIRE(dx.v[i] == Catch::Approx(fd(loss, x.v[i])).margin(1e-7));
}

TEST_CASE("avgpool2 and upsample2 backward are exact adjoints") {
    TensorD x = randn(4, 6, 3, 7);
    TensorD dy_pool = randn(2, 3, 3, 8);
    TensorD y = nn::avgpool2(x);
    TensorD dx = nn::avgpool2_backward(dy_pool);
    REQUIRE(weighted_sum(y, dy_pool) == Catch::Approx(weighted_sum(x, dx)).epsilon(1e-12));

    TensorD u = nn::upsample2(nn::avgpool2(x));
    TensorD dy_up = randn(4, 6, 3, 9);
    TensorD dxu = nn::upsample2_backward(dy_up);
    REQUIRE(weighted_sum(nn::upsample2(nn::avgpool2(x)), dy_up) ==
            Catch::Approx(weighted_sum(nn::avgpool2(x), dxu)).epsilon(1e-12));
    REQUIRE(u.h == 4);
}

TEST_CASE("self-attention gradients match finite differences") {
    const int n = 5, d = 4;
    nn::SelfAttention<double> attn("a", d);
    std::mt19937_64 rng(3);
    attn.init(rng);
    std::mt19937_64 rx(4);
    RMat<double> X(n, d), R(n, d);
    std::normal_distribution<double> nd;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            X(i, j) = nd(rx);
            R(i, j) = nd(rx);
        }

    auto loss = [&] {
        RMat<double> Y = attn.forward_tokens(X, nullptr);
        return (Y.array() * R.array()).sum();
    };

    Tape<double> tape;
    attn.forward_tokens(X, &tape);
    for (auto* p : attn.params()) p->zero_grad();
    RMat<double> dX = attn.backward_tokens(R, tape);

    for (auto [i, j] : {std::pair{0, 0}, {2, 3}, {4, 1}}) {
        REQUIRE(dX(i, j) == Catch::Approx(fd(loss, X(i, j))).margin(1e-6));
    }
    for (auto* p : attn.params()) {
        for (std::size_t i : {0ul, 7ul, 13ul}) {
            REQUIRE(p->g[i] == Catch::Approx(fd(loss, p->v[i])).margin(1e-6));
        }
    }
}

TEST_CASE("linear gradients match finite differences") {
    nn::Linear<double> lin("l", 4, 3);
    std::mt19937_64 rng(17);
    lin.init(rng);
    std::vector<double> x = {0.3, -0.7, 1.1, 0.2};
    std::vector<double> r = {0.5, -1.0, 0.25};

    auto loss = [&] {
        auto y = lin.forward(x, nullptr);
        double s = 0;
        for (int i = 0; i < 3; ++i) s += y[i] * r[i];
        return s;
    };

    Tape<double> tape;
    lin.forward(x, &tape);
    lin.w.zero_grad();
    lin.b.zero_grad();
    auto dx = lin.backward(r, tape);
    for (int i = 0; i < 4; ++i) REQUIRE(dx[i] == Catch::Approx(fd(loss, x[i])).margin(1e-7));
    for (std::size_t i = 0; i < lin.w.size(); ++i)
        REQUIRE(lin.w.g[i] == Catch::Approx(fd(loss, lin.w.v[i])).margin(1e-7));
    for (int i = 0; i < 3; ++i) REQUIRE(lin.b.g[i] == Catch::Approx(r[i]).margin(1e-12));
}

TEST_CASE("tape supports nested forwards popped in reverse") {
    nn::Conv2d<double> conv("c", 1, 1, 3);
    std::mt19937_64 rng(2);
    conv.init(rng);
    TensorD x1 = randn(4, 4, 1, 31), x2 = randn(4, 4, 1, 32);
    Tape<double> t1, t2;
    conv.forward(x1, &t1);
    conv.forward(x2, &t2);  // separate tapes: order across tapes is free
    TensorD g(4, 4, 1, 1.0);
    conv.w.zero_grad();
    conv.b.zero_grad();
    conv.backward(g, t2);
    conv.backward(g, t1);
    REQUIRE(t1.empty());
    REQUIRE(t2.empty());
}

TEST_CASE("adam clips the global gradient norm") {
    nn::Param<double> p("p", {2});
    p.v = {0.0, 0.0};
    p.g = {3000.0, 4000.0};  // norm 5000 >> clip 1
    std::vector<nn::Param<double>*> ps = {&p};
    nn::Adam<double> opt;
    opt.lr = 0.1;
    opt.attach(ps);
    opt.step(ps);
    // post-clip gradient direction is (0.6, 0.8); first adam step size is lr
    REQUIRE(p.v[0] == Catch::Approx(-0.1).epsilon(1e-3));
    REQUIRE(p.v[1] == Catch::Approx(-0.1).epsilon(1e-3));
    REQUIRE(opt.step_count == 1);
}

TEST_CASE("adam moves parameters against the gradient") {
    nn::Param<double> p("p", {1});
    p.v = {1.0};
    std::vector<nn::Param<double>*> ps = {&p};
    nn::Adam<double> opt;
    opt.lr = 0.01;
    opt.attach(ps);
    for (int i = 0; i < 10; ++i) {
        p.zero_grad();
        p.g[0] = 2.0 * p.v[0];  // d/dx of x^2
        opt.step(ps);
    }
    REQUIRE(p.v[0] < 1.0);
    REQUIRE(p.v[0] > 0.0);
}
