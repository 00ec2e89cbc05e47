#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "ouro/diffusion.hpp"

using namespace ouro;

TEST_CASE("T=1 schedule worked example") {
    DiffusionSchedule s = make_schedule(1, 0.5, 0.5);
    REQUIRE(s.alpha_bar.size() == 2);
    REQUIRE(s.alpha_bar[0] == Catch::Approx(1.0));
    REQUIRE(s.alpha_bar[1] == Catch::Approx(0.5));
    // but its terminal state is far from pure noise, so validation refuses it
    REQUIRE_THROWS_AS(validate_schedule(s), ConfigError);
}

TEST_CASE("default schedule is valid and near-noise at T") {
    DiffusionSchedule s = default_schedule();
    REQUIRE(s.T == 1000);
    REQUIRE_NOTHROW(validate_schedule(s));
    REQUIRE(s.alpha_bar[1000] < 0.01);
    for (int t = 1; t <= s.T; ++t) REQUIRE(s.alpha_bar[t] < s.alpha_bar[t - 1]);
}

TEST_CASE("make_schedule rejects bad parameters") {
    REQUIRE_THROWS_AS(make_schedule(0, 1e-4, 0.02), ConfigError);
    REQUIRE_THROWS_AS(make_schedule(10, 0.0, 0.02), ConfigError);
    REQUIRE_THROWS_AS(make_schedule(10, 0.02, 0.01), ConfigError);
    REQUIRE_THROWS_AS(make_schedule(10, 1e-4, 1.0), ConfigError);
}

TEST_CASE("v inversion recovers z0 exactly at t=T") {
    DiffusionSchedule s = default_schedule();
    std::mt19937_64 rng(5);
    TensorD z0 = gaussian_tensor<double>(8, 8, 3, rng);
    TensorD eps = gaussian_tensor<double>(8, 8, 3, rng);
    TensorD zT = noise_target(z0, eps, s.T, s);
    TensorD v = v_target(z0, eps, s.T, s);
    TensorD rec = v_to_z0(zT, v, s);
    REQUIRE(max_abs_diff(rec, z0) < 1e-12);
}

TEST_CASE("forward process interpolates endpoints") {
    DiffusionSchedule s = default_schedule();
    TensorD z0(4, 4, 3, 0.7), eps(4, 4, 3, -0.3);
    TensorD at0 = noise_target(z0, eps, 0, s);
    REQUIRE(max_abs_diff(at0, z0) < 1e-12);
    REQUIRE_THROWS_AS(noise_target(z0, eps, s.T + 1, s), std::out_of_range);
}

TEST_CASE("multires noise has unit pointwise variance") {
    NoiseSpec spec;  // scales {1,2,4,8}, discount 0.5
    double sum = 0, sum2 = 0;
    std::size_t n = 0;
    for (int draw = 0; draw < 100; ++draw) {
        TensorF e = multires_noise<float>(64, 64, 3, spec, 1000 + draw);
        for (float x : e.v) {
            sum += x;
            sum2 += double(x) * x;
            ++n;
        }
    }
    double mean = sum / double(n);
    double var = sum2 / double(n) - mean * mean;
    REQUIRE(std::abs(mean) < 0.02);
    REQUIRE(var > 0.95);
    REQUIRE(var < 1.05);
}

TEST_CASE("multires noise with a single scale is plain Gaussian") {
    NoiseSpec spec;
    spec.scales = {1};
    TensorF e = multires_noise<float>(16, 16, 3, spec, 7);
    std::mt19937_64 rng(mix_seed(7, 0x6e015eull));
    TensorF g = gaussian_tensor<float>(16, 16, 3, rng);
    REQUIRE(max_abs_diff(e, g) < 1e-6);
}

TEST_CASE("multires noise is deterministic and spec-validated") {
    NoiseSpec spec;
    TensorF a = multires_noise<float>(16, 16, 3, spec, 3);
    TensorF b = multires_noise<float>(16, 16, 3, spec, 3);
    REQUIRE(max_abs_diff(a, b) == 0.0);
    NoiseSpec bad;
    bad.scales = {2, 4};
    REQUIRE_THROWS_AS(multires_noise<float>(8, 8, 1, bad, 0), ConfigError);
    NoiseSpec unordered;
    unordered.scales = {1, 4, 2};
    REQUIRE_THROWS_AS(multires_noise<float>(8, 8, 1, unordered, 0), ConfigError);
}

TEST_CASE("latent codecs round trip each channel") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    TensorF a(6, 6, 3);
    for (auto& x : a.v) x = u(rng);
    REQUIRE(max_abs_diff(channel_from_latent(latent_from_channel(a, Channel::Albedo), Channel::Albedo), a) < 1e-6);

    TensorF r1(6, 6, 1);
    for (auto& x : r1.v) x = u(rng);
    TensorF back = channel_from_latent(latent_from_channel(r1, Channel::Roughness), Channel::Roughness);
    REQUIRE(back.c == 1);
    REQUIRE(max_abs_diff(back, r1) < 1e-6);

    TensorF e(6, 6, 3);
    for (auto& x : e.v) x = 2.0f * u(rng);
    REQUIRE(max_abs_diff(channel_from_latent(latent_from_channel(e, Channel::Irradiance), Channel::Irradiance), e) <
            1e-6);
}

TEST_CASE("condition slot offsets cover 11 planes without overlap") {
    REQUIRE(condition_slot_offset(Channel::Normal) == 0);
    REQUIRE(condition_slot_offset(Channel::Albedo) == 3);
    REQUIRE(condition_slot_offset(Channel::Roughness) == 6);
    REQUIRE(condition_slot_offset(Channel::Metallicity) == 7);
    REQUIRE(condition_slot_offset(Channel::Irradiance) == 8);
    int total = 0;
    for (Channel c : kAllChannels) total += condition_slot_planes(c);
    REQUIRE(total == kConditionPlanes);
}

TEST_CASE("assemble_condition zeros masked-out channels and respects dropout stats") {
    IntrinsicSet x = IntrinsicSet::zeros(4, 4);
    x.normal.fill(0.0f);
    for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 4; ++xx) x.normal.at(y, xx, 2) = 1.0f;
    x.albedo.fill(0.75f);
    x.roughness.fill(0.5f);
    x.metallicity.fill(0.25f);
    x.irradiance.fill(1.5f);
    x.mask = ChannelMask::all();

    SECTION("no dropout: all slots populated with the latent encodings") {
        std::mt19937_64 rng(1);
        auto cond = assemble_condition<float>(x, x.mask, 0.0, rng);
        REQUIRE(cond.planes.c == kConditionPlanes);
        REQUIRE(cond.planes.at(0, 0, 2) == Catch::Approx(1.0));    // normal z
        REQUIRE(cond.planes.at(0, 0, 3) == Catch::Approx(0.5));    // albedo 2*0.75-1
        REQUIRE(cond.planes.at(0, 0, 6) == Catch::Approx(0.0));    // roughness 2*0.5-1
        REQUIRE(cond.planes.at(0, 0, 7) == Catch::Approx(-0.5));   // metallicity 2*0.25-1
        REQUIRE(cond.planes.at(0, 0, 8) == Catch::Approx(0.5));    // irradiance 1.5-1
        for (bool k : cond.kept) REQUIRE(k);
    }

    SECTION("masked-out channel slots stay zero") {
        ChannelMask m = ChannelMask::of({Channel::Albedo});
        std::mt19937_64 rng(1);
        auto cond = assemble_condition<float>(x, m, 0.0, rng);
        REQUIRE(cond.planes.at(1, 1, 3) == Catch::Approx(0.5));
        for (int p : {0, 1, 2, 6, 7, 8, 9, 10}) REQUIRE(cond.planes.at(1, 1, p) == 0.0f);
    }

    SECTION("dropout marginal is p within 0.02 over 10000 trials") {
        const double p = 0.3;
        std::mt19937_64 rng(77);
        std::array<int, 5> kept_count = {};
        const int trials = 10000;
        for (int i = 0; i < trials; ++i) {
            auto cond = assemble_condition<float>(x, x.mask, p, rng);
            for (int c = 0; c < 5; ++c) kept_count[c] += cond.kept[c] ? 1 : 0;
        }
        for (int c = 0; c < 5; ++c) {
            double keep_rate = double(kept_count[c]) / trials;
            REQUIRE(std::abs(keep_rate - (1.0 - p)) < 0.02);
        }
    }
}

TEST_CASE("condition_grad_to_latents is the adjoint of condition_from_latents") {
    std::mt19937_64 rng(13);
    std::array<TensorD, 5> latents;
    for (auto& z : latents) z = gaussian_tensor<double>(5, 5, 3, rng);
    TensorD planes = condition_from_latents(latents);
    TensorD dplanes = gaussian_tensor<double>(5, 5, kConditionPlanes, rng);
    auto dlat = condition_grad_to_latents(dplanes);

    // <dplanes, F(latents)> must equal sum_c <dlat_c, latents_c>
    double lhs = 0;
    for (std::size_t i = 0; i < planes.v.size(); ++i) lhs += planes.v[i] * dplanes.v[i];
    double rhs = 0;
    for (int c = 0; c < 5; ++c)
        for (std::size_t i = 0; i < latents[c].v.size(); ++i) rhs += latents[c].v[i] * dlat[c].v[i];
    REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-10));
}

namespace {
// v_hat = 0 stub: single_step_infer must then return sqrt(ab_T) * z_T.
struct ZeroModel {
    TensorF forward(const TensorF& input, const Token&) { return TensorF(input.h, input.w, 3); }
};
}  // namespace

TEST_CASE("single_step_infer is deterministic and matches the inversion formula") {
    DiffusionSchedule sched = default_schedule();
    NoiseSpec nspec;
    TensorF cond(8, 8, 3, 0.1f);
    ZeroModel m;
    TensorF a = single_step_infer(m, cond, Token{TaskToken(Channel::Albedo)}, sched, nspec, 21);
    TensorF b = single_step_infer(m, cond, Token{TaskToken(Channel::Albedo)}, sched, nspec, 21);
    REQUIRE(max_abs_diff(a, b) == 0.0);

    TensorF zT = multires_noise<float>(8, 8, 3, nspec, 21);
    zT *= float(sched.sqrt_ab(sched.T));
    REQUIRE(max_abs_diff(a, zT) < 1e-7);
}

TEST_CASE("codec with factor 2 averages and upsamples") {
    Codec codec{2};
    TensorF t(2, 2, 1);
    t.v = {1, 3, 5, 7};
    TensorF enc = codec.encode(t);
    REQUIRE(enc.h == 1);
    REQUIRE(enc.at(0, 0, 0) == Catch::Approx(4.0));
    TensorF dec = codec.decode(enc);
    REQUIRE(dec.h == 2);
    for (float v : dec.v) REQUIRE(v == Catch::Approx(4.0));
}
