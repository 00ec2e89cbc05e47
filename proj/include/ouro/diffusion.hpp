#pragma once

// Diffusion math for the single-step regime: beta/alpha-bar schedule,
// multi-resolution noise, v-parameterization and its inversion, condition
// assembly with channel dropout, and the one-evaluation sampler.

#include <random>
#include <variant>
#include <vector>

#include "ouro/core.hpp"
#include "ouro/tensor.hpp"

namespace ouro {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DiffusionSchedule {
    int T = 0;
    std::vector<double> alpha_bar;  // index 0..T, alpha_bar[0] = 1

    double sqrt_ab(int t) const { return std::sqrt(alpha_bar.at(t)); }
    double sqrt_1mab(int t) const { return std::sqrt(1.0 - alpha_bar.at(t)); }
};

// alpha_bar_t = prod_{s<=t} (1 - beta_s), beta linear beta_start..beta_end.
inline DiffusionSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ConfigError("make_schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ConfigError("make_schedule: need 0 < beta_start <= beta_end < 1");
    DiffusionSchedule s;
    s.T = T;
    s.alpha_bar.resize(T + 1);
    s.alpha_bar[0] = 1.0;
    for (int t = 1; t <= T; ++t) {
        double beta = (T == 1) ? beta_start : beta_start + (beta_end - beta_start) * double(t - 1) / double(T - 1);
        s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - beta);
    }
    return s;
}

// Terminal-state check required before training/inference: the fixed-t=T
// regime assumes z_T is essentially pure noise.
inline void validate_schedule(const DiffusionSchedule& s) {
    if (s.T < 1 || int(s.alpha_bar.size()) != s.T + 1) throw ConfigError("schedule: malformed");
    if (s.alpha_bar[0] < 0.999) throw ConfigError("schedule: alpha_bar[0] must be >= 0.999");
    for (int t = 1; t <= s.T; ++t)
        if (!(s.alpha_bar[t] > 0.0 && s.alpha_bar[t] < s.alpha_bar[t - 1]))
            throw ConfigError("schedule: alpha_bar must be strictly decreasing in (0,1]");
    if (s.alpha_bar[s.T] > 0.01) throw ConfigError("schedule: alpha_bar[T] too large for single-step training");
}

inline DiffusionSchedule default_schedule() { return make_schedule(1000, 1e-4, 0.02); }

// ---- multi-resolution noise ----------------------------------------------

struct NoiseSpec {
    std::vector<int> scales = {1, 2, 4, 8};
    double discount = 0.5;

    void validate() const {
        if (scales.empty() || scales[0] != 1) throw ConfigError("noise spec: scales must start at 1");
        for (std::size_t i = 1; i < scales.size(); ++i)
            if (scales[i] <= scales[i - 1]) throw ConfigError("noise spec: scales must strictly increase");
        if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError("noise spec: discount must be in (0,1]");
    }
};

// eps = normalize( sum_k discount^k * nearest_upsample(g_k) ), g_k unit
// Gaussian at ceil(shape/scales[k]); normalized to unit pointwise variance.
template <typename S>
Tensor<S> multires_noise(int h, int w, int c, const NoiseSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(mix_seed(seed, 0x6e015eull));
    Tensor<S> out(h, w, c);
    double var_sum = 0.0;
    for (std::size_t k = 0; k < spec.scales.size(); ++k) {
        int sh = (h + spec.scales[k] - 1) / spec.scales[k];
        int sw = (w + spec.scales[k] - 1) / spec.scales[k];
        Tensor<S> g = gaussian_tensor<S>(sh, sw, c, rng);
        double wgt = std::pow(spec.discount, double(k));
        var_sum += wgt * wgt;
        for (int y = 0; y < h; ++y) {
            int gy = y * sh / h;
            for (int x = 0; x < w; ++x) {
                int gx = x * sw / w;
                for (int ch = 0; ch < c; ++ch) out.at(y, x, ch) += S(wgt) * g.at(gy, gx, ch);
            }
        }
    }
    out *= S(1.0 / std::sqrt(var_sum));
    return out;
}

// ---- v-parameterization ---------------------------------------------------

template <typename S>
Tensor<S> noise_target(const Tensor<S>& z0, const Tensor<S>& eps, int t, const DiffusionSchedule& sched) {
    z0.check_shape(eps);
    if (t < 0 || t > sched.T) throw std::out_of_range("noise_target: t out of range");
    Tensor<S> z = z0;
    z *= S(sched.sqrt_ab(t));
    z.axpy(S(sched.sqrt_1mab(t)), eps);
    return z;
}

template <typename S>
Tensor<S> v_target(const Tensor<S>& z0, const Tensor<S>& eps, int t, const DiffusionSchedule& sched) {
    z0.check_shape(eps);
    if (t < 0 || t > sched.T) throw std::out_of_range("v_target: t out of range");
    Tensor<S> v = eps;
    v *= S(sched.sqrt_ab(t));
    v.axpy(S(-sched.sqrt_1mab(t)), z0);
    return v;
}

// z0_hat = sqrt(ab_T) * z_T - sqrt(1 - ab_T) * v_hat   (terminal index T)
template <typename S>
Tensor<S> v_to_z0(const Tensor<S>& zT, const Tensor<S>& v, const DiffusionSchedule& sched) {
    zT.check_shape(v);
    Tensor<S> z = zT;
    z *= S(sched.sqrt_ab(sched.T));
    z.axpy(S(-sched.sqrt_1mab(sched.T)), v);
    return z;
}

// ---- latent codec ----------------------------------------------------------

// Identity at toy scale (f=1); f>1 uses average-pool encode and nearest
// upsample decode, exercising the low-resolution irradiance path.
struct Codec {
    int factor = 1;

    template <typename S>
    Tensor<S> encode(const Tensor<S>& t) const {
        if (factor == 1) return t;
        int oh = t.h / factor, ow = t.w / factor;
        Tensor<S> r(oh, ow, t.c);
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x)
                for (int ch = 0; ch < t.c; ++ch) {
                    double s = 0;
                    for (int dy = 0; dy < factor; ++dy)
                        for (int dx = 0; dx < factor; ++dx) s += t.at(y * factor + dy, x * factor + dx, ch);
                    r.at(y, x, ch) = S(s / (factor * factor));
                }
        return r;
    }

    template <typename S>
    Tensor<S> decode(const Tensor<S>& t) const {
        if (factor == 1) return t;
        Tensor<S> r(t.h * factor, t.w * factor, t.c);
        for (int y = 0; y < r.h; ++y)
            for (int x = 0; x < r.w; ++x)
                for (int ch = 0; ch < t.c; ++ch) r.at(y, x, ch) = t.at(y / factor, x / factor, ch);
        return r;
    }
};

// ---- channel <-> latent encodings -----------------------------------------
// Latent space is roughly [-1, 1], always 3 planes per map:
//   normal:     latent = n (i.e. 2 * encoded - 1)
//   albedo/r/m: latent = 2 * value - 1 (r/m replicated to 3 planes)
//   irradiance: latent = E - 1 (E typically in [0, 2])
//   rgb:        latent = 2 * I - 1

template <typename S>
Tensor<S> latent_from_rgb(const Tensor<S>& img) {
    Tensor<S> z = img;
    z *= S(2);
    for (auto& x : z.v) x -= S(1);
    return z;
}

template <typename S>
Tensor<S> rgb_from_latent(const Tensor<S>& z) {
    Tensor<S> img = z;
    for (auto& x : img.v) x = (x + S(1)) * S(0.5);
    return img;
}

template <typename S>
Tensor<S> latent_from_channel(const Tensor<S>& value, Channel c) {
    switch (c) {
        case Channel::Normal: return value;  // raw unit vectors == 2*encoded-1
        case Channel::Albedo: return latent_from_rgb(value);
        case Channel::Roughness:
        case Channel::Metallicity: {
            Tensor<S> z = value.c == 1 ? broadcast_channels(value, 3) : value;
            return latent_from_rgb(z);
        }
        case Channel::Irradiance: {
            Tensor<S> z = value;
            for (auto& x : z.v) x -= S(1);
            return z;
        }
    }
    return value;
}

// Inverse map back to channel storage semantics (no clamping: callers clamp
// only at file-writing time so gradients stay intact).
template <typename S>
Tensor<S> channel_from_latent(const Tensor<S>& z, Channel c) {
    switch (c) {
        case Channel::Normal: return z;  // still a raw (possibly non-unit) vector field
        case Channel::Albedo: return rgb_from_latent(z);
        case Channel::Roughness:
        case Channel::Metallicity: return rgb_from_latent(mean_channels(z));
        case Channel::Irradiance: {
            Tensor<S> e = z;
            for (auto& x : e.v) x += S(1);
            return e;
        }
    }
    return z;
}

// ---- condition assembly ----------------------------------------------------
// Fixed slot order n(3) a(3) r(1) m(1) E(3) -> 11 planes for X->RGB; the
// RGB->X condition is the 3-plane image latent.

constexpr int kConditionPlanes = 11;

inline int condition_slot_offset(Channel c) {
    switch (c) {
        case Channel::Normal: return 0;
        case Channel::Albedo: return 3;
        case Channel::Roughness: return 6;
        case Channel::Metallicity: return 7;
        case Channel::Irradiance: return 8;
    }
    return 0;
}
inline int condition_slot_planes(Channel c) { return channel_planes(c); }

template <typename S>
struct ConditionStack {
    Tensor<S> planes;                    // H x W x 11 (x2rgb) or H x W x 3 (rgb2x)
    std::array<bool, 5> kept = {};       // post-dropout slot liveness (x2rgb only)
};

// Channels absent from the mask are always zero; present channels are
// independently dropped with probability dropout_p. The irradiance slot is
// routed through the codec's low-resolution path.
template <typename S>
ConditionStack<S> assemble_condition(const IntrinsicSet& x, const ChannelMask& mask, double dropout_p,
                                     std::mt19937_64& rng, const Codec& codec = {}) {
    if (dropout_p < 0.0 || dropout_p > 1.0) throw std::invalid_argument("assemble_condition: dropout_p in [0,1]");
    const int H = x.normal.h, W = x.normal.w;
    ConditionStack<S> out;
    out.planes = Tensor<S>(H, W, kConditionPlanes);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Channel c : kAllChannels) {
        bool keep = mask.has(c) && !(dropout_p > 0.0 && u(rng) < dropout_p);
        out.kept[int(c)] = keep;
        if (!keep) continue;
        Tensor<S> z = latent_from_channel(x.channel(c).template cast<S>(), c);
        if (c == Channel::Irradiance) z = codec.template decode<S>(codec.template encode<S>(z));
        if (condition_slot_planes(c) == 1) z = mean_channels(z);
        int off = condition_slot_offset(c);
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx)
                for (int p = 0; p < z.c; ++p) out.planes.at(y, xx, off + p) = z.at(y, xx, p);
    }
    return out;
}

// Same slot layout, but built from predicted per-channel latents (3 planes
// each); used inside the cycle chains where gradients must flow.
template <typename S>
Tensor<S> condition_from_latents(const std::array<Tensor<S>, 5>& latents, const Codec& codec = {}) {
    const int H = latents[0].h, W = latents[0].w;
    Tensor<S> planes(H, W, kConditionPlanes);
    for (Channel c : kAllChannels) {
        Tensor<S> z = latents[int(c)];
        if (c == Channel::Irradiance) z = codec.template decode<S>(codec.template encode<S>(z));
        if (condition_slot_planes(c) == 1) z = mean_channels(z);
        int off = condition_slot_offset(c);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int p = 0; p < z.c; ++p) planes.at(y, x, off + p) = z.at(y, x, p);
    }
    return planes;
}

// Scatter a gradient on the 11 condition planes back onto the five 3-plane
// latents (adjoint of condition_from_latents with the identity codec).
template <typename S>
std::array<Tensor<S>, 5> condition_grad_to_latents(const Tensor<S>& dplanes) {
    const int H = dplanes.h, W = dplanes.w;
    std::array<Tensor<S>, 5> grads;
    for (Channel c : kAllChannels) {
        Tensor<S> g(H, W, 3);
        int off = condition_slot_offset(c);
        if (condition_slot_planes(c) == 3) {
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    for (int p = 0; p < 3; ++p) g.at(y, x, p) = dplanes.at(y, x, off + p);
        } else {
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    for (int p = 0; p < 3; ++p) g.at(y, x, p) = dplanes.at(y, x, off) / S(3);
        }
        grads[int(c)] = std::move(g);
    }
    return grads;
}

// ---- single-step sampler ---------------------------------------------------

using Token = std::variant<TaskToken, Caption>;

// z_T is pure multi-resolution noise; one model evaluation; Eq.-4 inversion.
// Returns the predicted clean latent.
template <typename S, typename Model>
Tensor<S> single_step_infer(Model& model, const Tensor<S>& cond_planes, const Token& token,
                            const DiffusionSchedule& sched, const NoiseSpec& nspec, std::uint64_t seed) {
    Tensor<S> zT = multires_noise<S>(cond_planes.h, cond_planes.w, 3, nspec, seed);
    Tensor<S> input = concat_channels(zT, cond_planes);
    Tensor<S> v = model.forward(input, token);
    return v_to_z0(zT, v, sched);
}

}  // namespace ouro
