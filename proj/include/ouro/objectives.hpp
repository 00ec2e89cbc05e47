#pragma once

// Training losses: angular normal loss, affine-invariant irradiance loss
// (closed-form per-channel least squares), the MSE family, cycle losses and
// masked aggregation. Every loss has an analytic gradient w.r.t. the
// prediction; finite-difference tests pin them down.
//
// Normalization convention: every Frobenius-style loss is divided by the
// pixel count N (channels are summed, pixels averaged).

#include <array>
#include <cmath>

#include "ouro/core.hpp"

namespace ouro {

constexpr double kArccosClamp = 1e-7;

template <typename S>
struct NormalLossResult {
    double value = 0;
    long degenerate_pixels = 0;  // zero-length predictions, counted at pi/2
};

// Mean angular difference; gt must be unit, pred may be any nonzero field.
// grad_out (optional) receives d(loss)/d(pred).
template <typename S>
NormalLossResult<S> loss_normal(const Tensor<S>& n_gt, const Tensor<S>& n_pred, Tensor<S>* grad_out = nullptr) {
    n_gt.check_shape(n_pred);
    if (n_gt.c != 3) throw std::invalid_argument("loss_normal: expects 3 channels");
    const long N = long(n_gt.h) * n_gt.w;
    NormalLossResult<S> res;
    if (grad_out) *grad_out = zeros_like(n_pred);
    for (int y = 0; y < n_gt.h; ++y)
        for (int x = 0; x < n_gt.w; ++x) {
            double g[3] = {double(n_gt.at(y, x, 0)), double(n_gt.at(y, x, 1)), double(n_gt.at(y, x, 2))};
            double p[3] = {double(n_pred.at(y, x, 0)), double(n_pred.at(y, x, 1)), double(n_pred.at(y, x, 2))};
            double gl = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
            double pl = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
            if (pl < 1e-8) {
                res.value += M_PI / 2.0;
                ++res.degenerate_pixels;
                continue;
            }
            double dot = (g[0] * p[0] + g[1] * p[1] + g[2] * p[2]) / (gl * pl);
            double c = std::clamp(dot, -1.0 + kArccosClamp, 1.0 - kArccosClamp);
            res.value += std::acos(c);
            if (grad_out && dot > -1.0 + kArccosClamp && dot < 1.0 - kArccosClamp) {
                double dacos = -1.0 / std::sqrt(1.0 - c * c);
                for (int k = 0; k < 3; ++k) {
                    double dc_dp = g[k] / (gl * pl) - dot * p[k] / (pl * pl);
                    grad_out->at(y, x, k) += S(dacos * dc_dp / double(N));
                }
            }
        }
    res.value /= double(N);
    return res;
}

struct AffineFit {
    std::array<double, 3> scale{};
    std::array<double, 3> shift{};
    double residual = 0;  // minimized sum of squares over all pixels/channels
};

// Per channel c, minimize sum_p (E_c - s_c*Ehat_c - t_c)^2 in closed form.
template <typename S>
AffineFit fit_affine(const Tensor<S>& e_pred, const Tensor<S>& e_gt) {
    e_pred.check_shape(e_gt);
    if (e_pred.c != 3) throw std::invalid_argument("fit_affine: expects 3 channels");
    const long N = long(e_pred.h) * e_pred.w;
    AffineFit fit;
    for (int c = 0; c < 3; ++c) {
        double sp = 0, sg = 0, spp = 0, spg = 0;
        for (int y = 0; y < e_pred.h; ++y)
            for (int x = 0; x < e_pred.w; ++x) {
                double p = e_pred.at(y, x, c), g = e_gt.at(y, x, c);
                sp += p;
                sg += g;
                spp += p * p;
                spg += p * g;
            }
        double mp = sp / N, mg = sg / N;
        double var = spp / N - mp * mp;
        double cov = spg / N - mp * mg;
        double s, t;
        if (var < 1e-12) {
            s = 0.0;
            t = mg;
        } else {
            s = cov / var;
            t = mg - s * mp;
        }
        fit.scale[c] = s;
        fit.shift[c] = t;
        for (int y = 0; y < e_pred.h; ++y)
            for (int x = 0; x < e_pred.w; ++x) {
                double r = double(e_gt.at(y, x, c)) - s * double(e_pred.at(y, x, c)) - t;
                fit.residual += r * r;
            }
    }
    return fit;
}

// Affine-invariant irradiance loss: fit residual divided by pixel count.
// Gradient uses the envelope theorem (s, t held at their optimum).
template <typename S>
double loss_irradiance(const Tensor<S>& e_gt, const Tensor<S>& e_pred, Tensor<S>* grad_out = nullptr) {
    AffineFit fit = fit_affine(e_pred, e_gt);
    const long N = long(e_pred.h) * e_pred.w;
    if (grad_out) {
        *grad_out = zeros_like(e_pred);
        for (int c = 0; c < 3; ++c) {
            double s = fit.scale[c], t = fit.shift[c];
            for (int y = 0; y < e_pred.h; ++y)
                for (int x = 0; x < e_pred.w; ++x) {
                    double r = double(e_gt.at(y, x, c)) - s * double(e_pred.at(y, x, c)) - t;
                    grad_out->at(y, x, c) = S(-2.0 * s * r / double(N));
                }
        }
    }
    return fit.residual / double(N);
}

// (1/N) * sum_pixels |y - y_hat|_F^2 (summed over channels).
template <typename S>
double loss_mse(const Tensor<S>& y_gt, const Tensor<S>& y_pred, Tensor<S>* grad_out = nullptr) {
    y_gt.check_shape(y_pred);
    const long N = long(y_gt.h) * y_gt.w;
    double loss = 0;
    if (grad_out) *grad_out = zeros_like(y_pred);
    for (std::size_t i = 0; i < y_gt.v.size(); ++i) {
        double d = double(y_pred.v[i]) - double(y_gt.v[i]);
        loss += d * d;
        if (grad_out) grad_out->v[i] = S(2.0 * d / double(N));
    }
    return loss / double(N);
}

struct LossBreakdown {
    double n = 0, a = 0, r = 0, m = 0, e = 0;
    double rgb = 0;
    double cycle_x = 0, cycle_i = 0;
    double total = 0;

    double task_sum() const { return n + a + r + m + e; }
};

// Sum of per-channel losses over the mask: angular for normals, affine-
// invariant for irradiance, MSE for albedo/roughness/metallicity. Inputs are
// channel-space tensors (normals as raw vectors).
template <typename S>
LossBreakdown task_loss(const IntrinsicSet& pred, const IntrinsicSet& gt, const ChannelMask& mask) {
    LossBreakdown lb;
    auto predf = [&](Channel c) { return pred.channel(c).template cast<S>(); };
    auto gtf = [&](Channel c) { return gt.channel(c).template cast<S>(); };
    if (mask.has(Channel::Normal)) lb.n = loss_normal<S>(gtf(Channel::Normal), predf(Channel::Normal)).value;
    if (mask.has(Channel::Albedo)) lb.a = loss_mse<S>(gtf(Channel::Albedo), predf(Channel::Albedo));
    if (mask.has(Channel::Roughness)) lb.r = loss_mse<S>(gtf(Channel::Roughness), predf(Channel::Roughness));
    if (mask.has(Channel::Metallicity))
        lb.m = loss_mse<S>(gtf(Channel::Metallicity), predf(Channel::Metallicity));
    if (mask.has(Channel::Irradiance)) lb.e = loss_irradiance<S>(gtf(Channel::Irradiance), predf(Channel::Irradiance));
    lb.total = lb.task_sum();
    return lb;
}

// Cycle losses: X compared per present channel in encoded storage space
// ((n+1)/2 for normals), averaged over present channels; the image term is a
// plain MSE. Wild records (empty mask) contribute only the image term.
template <typename S>
std::pair<double, double> loss_cycle(const std::array<Tensor<S>, 5>& x_gt_storage,
                                     const std::array<Tensor<S>, 5>& x_cycled_storage, const Tensor<S>& i_gt,
                                     const Tensor<S>& i_cycled, const ChannelMask& mask) {
    double cycle_x = 0;
    int n_present = 0;
    for (Channel c : kAllChannels) {
        if (!mask.has(c)) continue;
        cycle_x += loss_mse<S>(x_gt_storage[int(c)], x_cycled_storage[int(c)]);
        ++n_present;
    }
    if (n_present > 0) cycle_x /= n_present;
    double cycle_i = loss_mse<S>(i_gt, i_cycled);
    return {cycle_x, cycle_i};
}

}  // namespace ouro
