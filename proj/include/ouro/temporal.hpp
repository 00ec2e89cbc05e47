#pragma once

// Training-free video inference: overlapping window planning, gamma-blended
// latent hand-off between windows, and orchestration of the inflated model.
// The hand-off latent for an overlap frame is noise_target(z0_hat_prev,
// eps_prev, T), i.e. the noisy latent consistent with the previous window's
// prediction under that window's noise. Overlapped frames are owned by the
// later window.

#include <vector>

#include "ouro/denoiser.hpp"
#include "ouro/diffusion.hpp"

namespace ouro {

struct Window {
    int start = 0, end = 0;  // inclusive
    int length() const { return end - start + 1; }
};

struct WindowPlan {
    std::vector<Window> windows;
    int window_size = 0, stride = 0;
};

struct VideoConfig {
    int window_size = 8;
    int stride = 4;
    double gamma = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (window_size < 1) throw ConfigError("video: window_size must be >= 1");
        if (window_size > 1 && !(stride >= 1 && stride < window_size))
            throw ConfigError("video: need 1 <= stride < window_size");
        if (gamma < 0.0 || gamma > 1.0) throw ConfigError("video: gamma in [0,1]");
    }
};

// Windows start at 0, stride, 2*stride, ...; a final window that would
// overshoot is shifted left to end exactly at n_frames-1.
inline WindowPlan plan_windows(int n_frames, int window_size, int stride) {
    if (window_size < 1 || n_frames < 1) throw ConfigError("plan_windows: sizes must be >= 1");
    if (n_frames < window_size) throw ConfigError("plan_windows: n_frames < window_size");
    if (window_size > 1 && !(stride >= 1 && stride < window_size))
        throw ConfigError("plan_windows: need 1 <= stride < window_size");
    WindowPlan plan;
    plan.window_size = window_size;
    plan.stride = stride;
    for (int k = 0;; ++k) {
        int start = window_size == 1 ? k : k * stride;
        if (start + window_size >= n_frames) {
            int s = n_frames - window_size;
            if (plan.windows.empty() || plan.windows.back().start != s)
                plan.windows.push_back({s, n_frames - 1});
            break;
        }
        plan.windows.push_back({start, start + window_size - 1});
    }
    return plan;
}

// Eq.-9 convex combination: z_init = gamma * z_prev + (1 - gamma) * eps.
template <typename S>
Tensor<S> blend_init(const Tensor<S>& z_prev, const Tensor<S>& eps, double gamma) {
    z_prev.check_shape(eps);
    Tensor<S> z = z_prev;
    z *= S(gamma);
    z.axpy(S(1.0 - gamma), eps);
    return z;
}

template <typename S>
struct VideoDiagnostics {
    std::vector<Tensor<S>> z_init;      // per-frame initial latent of the owning window
    std::vector<int> owner_window;      // which window produced each frame's output
    WindowPlan plan;
};

// Windowed video inference. `frames_cond` holds per-frame condition planes
// (image latents for rgb2x, the 11-plane stack for x2rgb); returns per-frame
// predicted clean latents. The model is inflated internally; each window
// evaluates once over its whole frame batch; each window shares one noise
// field across its frames so hand-off blending is the only cross-window
// difference.
template <typename S, typename Model>
std::vector<Tensor<S>> infer_video(const Model& model_image, const std::vector<Tensor<S>>& frames_cond,
                                   const Token& token, const DiffusionSchedule& sched, const NoiseSpec& nspec,
                                   const VideoConfig& vcfg, VideoDiagnostics<S>* diag = nullptr) {
    vcfg.validate();
    if (frames_cond.empty()) throw std::invalid_argument("infer_video: no frames");
    const int n = int(frames_cond.size());
    const int H = frames_cond[0].h, W = frames_cond[0].w;
    for (const auto& f : frames_cond)
        if (f.h != H || f.w != W || f.c != frames_cond[0].c)
            throw std::invalid_argument("infer_video: frame resolution mismatch");

    const int w_eff = std::min(vcfg.window_size, n);
    const int s_eff = w_eff == n ? std::max(1, w_eff - 1) : std::min(vcfg.stride, w_eff - 1);
    WindowPlan plan = plan_windows(n, w_eff, w_eff == 1 ? 1 : s_eff);

    Model video = model_image.inflated();
    std::vector<Tensor<S>> z0_hat(n);
    std::vector<Tensor<S>> eps_used(n);  // noise each frame's current output was computed from
    if (diag) {
        diag->z_init.resize(n);
        diag->owner_window.assign(n, -1);
        diag->plan = plan;
    }

    for (std::size_t k = 0; k < plan.windows.size(); ++k) {
        const Window& win = plan.windows[k];
        Tensor<S> eps = multires_noise<S>(H, W, kLatentPlanes, nspec, mix_seed(vcfg.seed, 0x77ull + k));
        std::vector<Tensor<S>> inputs;
        std::vector<Tensor<S>> z_inits;
        inputs.reserve(win.length());
        for (int f = win.start; f <= win.end; ++f) {
            Tensor<S> z_init = eps;
            if (k > 0 && !z0_hat[f].empty()) {
                Tensor<S> z_prev = noise_target(z0_hat[f], eps_used[f], sched.T, sched);
                z_init = blend_init(z_prev, eps, vcfg.gamma);
            }
            inputs.push_back(concat_channels(z_init, frames_cond[f]));
            z_inits.push_back(std::move(z_init));
        }
        std::vector<Tensor<S>> vs = video.forward_video(inputs, token);
        for (int f = win.start; f <= win.end; ++f) {
            int i = f - win.start;
            z0_hat[f] = v_to_z0(z_inits[i], vs[i], sched);
            eps_used[f] = eps;
            if (diag) {
                diag->z_init[f] = z_inits[i];
                diag->owner_window[f] = int(k);
            }
        }
    }
    return z0_hat;
}

// Baseline for the smoothing comparison: per-frame single-step inference with
// an independent noise field per frame.
template <typename S, typename Model>
std::vector<Tensor<S>> infer_frames_independent(Model& model, const std::vector<Tensor<S>>& frames_cond,
                                                const Token& token, const DiffusionSchedule& sched,
                                                const NoiseSpec& nspec, std::uint64_t seed) {
    std::vector<Tensor<S>> out;
    out.reserve(frames_cond.size());
    for (std::size_t f = 0; f < frames_cond.size(); ++f)
        out.push_back(single_step_infer<S>(model, frames_cond[f], token, sched, nspec, mix_seed(seed, 0x1000ull + f)));
    return out;
}

}  // namespace ouro
