#pragma once

// Metric suite and report generation: PSNR, SSIM, scale-invariant RMSE,
// angular-error statistics, a pluggable perceptual-metric registry (no
// built-in backend), paired-directory evaluation and a text/JSON report.

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ouro/core.hpp"
#include "ouro/objectives.hpp"

namespace ouro {

constexpr double kPsnrCap = 99.0;
constexpr double kAngularThresholdDeg = 11.25;

inline double psnr(const TensorF& gt, const TensorF& pred, double peak = 1.0) {
    gt.check_shape(pred);
    double mse = 0;
    for (std::size_t i = 0; i < gt.v.size(); ++i) {
        double d = double(pred.v[i]) - double(gt.v[i]);
        mse += d * d;
    }
    mse /= double(gt.v.size());
    if (mse <= 0) return kPsnrCap;
    return std::min(kPsnrCap, 20.0 * std::log10(peak) - 10.0 * std::log10(mse));
}

// Standard SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, dynamic
// range 1, valid-region convolution, averaged over channels.
inline double ssim(const TensorF& gt, const TensorF& pred) {
    gt.check_shape(pred);
    constexpr int kWin = 11;
    if (gt.h < kWin || gt.w < kWin) throw std::invalid_argument("ssim: image smaller than 11x11 window");
    static const std::array<double, kWin> kKernel = [] {
        std::array<double, kWin> k{};
        double sum = 0;
        for (int i = 0; i < kWin; ++i) {
            double d = i - (kWin - 1) / 2.0;
            k[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            sum += k[i];
        }
        for (auto& v : k) v /= sum;
        return k;
    }();
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const int oh = gt.h - kWin + 1, ow = gt.w - kWin + 1;
    double total = 0;
    for (int ch = 0; ch < gt.c; ++ch) {
        double acc = 0;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                for (int ky = 0; ky < kWin; ++ky)
                    for (int kx = 0; kx < kWin; ++kx) {
                        double wgt = kKernel[ky] * kKernel[kx];
                        double a = gt.at(oy + ky, ox + kx, ch);
                        double b = pred.at(oy + ky, ox + kx, ch);
                        mx += wgt * a;
                        my += wgt * b;
                        mxx += wgt * a * a;
                        myy += wgt * b * b;
                        mxy += wgt * a * b;
                    }
                double vx = mxx - mx * mx, vy = myy - my * my, cov = mxy - mx * my;
                acc += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        total += acc / (double(oh) * ow);
    }
    return total / gt.c;
}

// min over alpha >= 0 of RMSE(gt, alpha*pred); alpha fit jointly over all
// channels by default, per channel behind the flag.
inline double si_rmse(const TensorF& gt, const TensorF& pred, bool per_channel = false) {
    gt.check_shape(pred);
    auto rmse_span = [&](int c0, int c1) {
        double gp = 0, pp = 0;
        for (int y = 0; y < gt.h; ++y)
            for (int x = 0; x < gt.w; ++x)
                for (int c = c0; c < c1; ++c) {
                    gp += double(gt.at(y, x, c)) * pred.at(y, x, c);
                    pp += double(pred.at(y, x, c)) * pred.at(y, x, c);
                }
        double alpha = pp > 0 ? std::max(0.0, gp / pp) : 0.0;
        double se = 0;
        long n = 0;
        for (int y = 0; y < gt.h; ++y)
            for (int x = 0; x < gt.w; ++x)
                for (int c = c0; c < c1; ++c) {
                    double d = double(gt.at(y, x, c)) - alpha * pred.at(y, x, c);
                    se += d * d;
                    ++n;
                }
        return std::pair<double, long>{se, n};
    };
    double se = 0;
    long n = 0;
    if (per_channel) {
        for (int c = 0; c < gt.c; ++c) {
            auto [s, k] = rmse_span(c, c + 1);
            se += s;
            n += k;
        }
    } else {
        std::tie(se, n) = rmse_span(0, gt.c);
    }
    return std::sqrt(se / double(n));
}

struct AngularStats {
    double mean_deg = 0;
    double pct_below_11_25 = 0;
};

// gt must be unit; pred renormalized, zero-length vectors mapped to (0,0,1).
inline AngularStats angular_stats(const TensorF& n_gt, const TensorF& n_pred) {
    n_gt.check_shape(n_pred);
    if (n_gt.c != 3) throw std::invalid_argument("angular_stats: expects 3 channels");
    AngularStats st;
    long below = 0;
    const long N = long(n_gt.h) * n_gt.w;
    for (int y = 0; y < n_gt.h; ++y)
        for (int x = 0; x < n_gt.w; ++x) {
            double p[3] = {double(n_pred.at(y, x, 0)), double(n_pred.at(y, x, 1)), double(n_pred.at(y, x, 2))};
            double pl = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
            if (pl < 1e-8) {
                p[0] = 0;
                p[1] = 0;
                p[2] = 1;
                pl = 1;
            }
            double dot = 0;
            for (int k = 0; k < 3; ++k) dot += double(n_gt.at(y, x, k)) * p[k] / pl;
            double deg = std::acos(std::clamp(dot, -1.0, 1.0)) * 180.0 / M_PI;
            st.mean_deg += deg;
            if (deg < kAngularThresholdDeg) ++below;
        }
    st.mean_deg /= double(N);
    st.pct_below_11_25 = 100.0 * double(below) / double(N);
    return st;
}

// ---- perceptual backend registry -------------------------------------------

using PerceptualFn = std::function<double(const TensorF& gt, const TensorF& pred)>;

inline std::map<std::string, PerceptualFn>& perceptual_registry() {
    static std::map<std::string, PerceptualFn> reg;
    return reg;
}

inline void register_perceptual(const std::string& name, PerceptualFn fn) {
    perceptual_registry()[name] = std::move(fn);
}

inline double perceptual(const TensorF& gt, const TensorF& pred, const std::string& backend) {
    auto it = perceptual_registry().find(backend);
    if (it == perceptual_registry().end())
        throw std::invalid_argument("perceptual: unknown backend '" + backend + "'");
    double v = it->second(gt, pred);
    if (!std::isfinite(v))
        throw std::runtime_error("perceptual: backend '" + backend + "' returned a non-finite value");
    return v;
}

// ---- paired-directory evaluation -------------------------------------------

struct ChannelMetrics {
    std::map<std::string, double> values;      // metric name -> mean over images
    std::vector<std::string> unavailable;      // metric slots without a backend
    long images = 0;
    long pixels = 0;
};

struct MetricReport {
    std::string pred_root, gt_root;
    std::string perceptual_backend;            // empty = none registered/requested
    std::map<std::string, ChannelMetrics> channels;
    std::vector<std::string> warnings;
};

inline const std::vector<std::string>& all_eval_channels() {
    static const std::vector<std::string> v = {"normal", "albedo", "roughness", "metallicity", "irradiance", "rgb"};
    return v;
}

namespace detail {
inline void accumulate(ChannelMetrics& cm, const std::string& metric, double v) { cm.values[metric] += v; }
}  // namespace detail

// Walks paired record directories (same layout as the dataset) and averages
// per-channel metrics over the paired ids. A gt id missing on the pred side
// is excluded with a warning; a pred id unknown to gt refuses evaluation
// unless allow_unpaired.
inline MetricReport evaluate(const std::filesystem::path& pred_root, const std::filesystem::path& gt_root,
                             const std::vector<std::string>& channels, const std::string& perceptual_backend = "",
                             bool allow_unpaired = false) {
    namespace fs = std::filesystem;
    MetricReport rep;
    rep.pred_root = pred_root.string();
    rep.gt_root = gt_root.string();
    rep.perceptual_backend = perceptual_backend;

    auto list_ids = [](const fs::path& root) {
        std::set<std::string> ids;
        if (!fs::is_directory(root)) throw std::runtime_error("evaluate: not a directory: " + root.string());
        for (const auto& e : fs::directory_iterator(root))
            if (e.is_directory() && fs::exists(e.path() / "meta.json")) ids.insert(e.path().filename().string());
        return ids;
    };
    std::set<std::string> gt_ids = list_ids(gt_root), pred_ids = list_ids(pred_root);

    std::vector<std::string> extra;
    for (const auto& id : pred_ids)
        if (!gt_ids.count(id)) extra.push_back(id);
    if (!extra.empty() && !allow_unpaired) {
        std::string msg = "evaluate: predictions without ground truth:";
        for (const auto& id : extra) msg += " " + id;
        throw ValidationError(msg + " (pass allow_unpaired to skip)");
    }
    for (const auto& id : extra) rep.warnings.push_back("unpaired prediction skipped: " + id);

    bool want_perc = !perceptual_backend.empty();
    std::vector<std::string> paired;
    for (const auto& id : gt_ids) {
        if (!pred_ids.count(id)) {
            rep.warnings.push_back("missing prediction for " + id + "; excluded");
            continue;
        }
        paired.push_back(id);
    }
    if (paired.empty() && !allow_unpaired) throw ValidationError("evaluate: no paired ids between roots");

    for (const auto& id : paired) {
        DatasetRecord gt = load_record(gt_root / id);
        DatasetRecord pr = load_record(pred_root / id);
        for (const auto& ch : channels) {
            if (ch == "rgb") {
                auto& cm = rep.channels["rgb"];
                detail::accumulate(cm, "psnr", psnr(gt.rgb.data, pr.rgb.data));
                detail::accumulate(cm, "ssim", ssim(gt.rgb.data, pr.rgb.data));
                if (want_perc) detail::accumulate(cm, "lpips", perceptual(gt.rgb.data, pr.rgb.data, perceptual_backend));
                cm.images++;
                cm.pixels += long(gt.rgb.data.h) * gt.rgb.data.w;
                continue;
            }
            auto c = channel_from_name(ch);
            if (!c) throw std::invalid_argument("evaluate: unknown channel '" + ch + "'");
            if (!gt.intrinsics.mask.has(*c)) {
                rep.warnings.push_back(id + ": gt lacks channel " + ch + "; skipped");
                continue;
            }
            if (!pr.intrinsics.mask.has(*c)) {
                rep.warnings.push_back(id + ": prediction lacks channel " + ch + "; skipped");
                continue;
            }
            auto& cm = rep.channels[ch];
            const TensorF& g = gt.intrinsics.channel(*c);
            const TensorF& p = pr.intrinsics.channel(*c);
            switch (*c) {
                case Channel::Normal: {
                    AngularStats st = angular_stats(g, p);
                    detail::accumulate(cm, "mean_deg", st.mean_deg);
                    detail::accumulate(cm, "pct_below_11_25", st.pct_below_11_25);
                    break;
                }
                case Channel::Albedo:
                    detail::accumulate(cm, "psnr", psnr(g, p));
                    detail::accumulate(cm, "ssim", ssim(g, p));
                    detail::accumulate(cm, "si_rmse", si_rmse(g, p));
                    if (want_perc) detail::accumulate(cm, "lpips", perceptual(g, p, perceptual_backend));
                    break;
                case Channel::Irradiance: {
                    AffineFit fit = fit_affine(p, g);
                    TensorF aligned = p;
                    for (int y = 0; y < aligned.h; ++y)
                        for (int x = 0; x < aligned.w; ++x)
                            for (int k = 0; k < 3; ++k)
                                aligned.at(y, x, k) = float(fit.scale[k] * p.at(y, x, k) + fit.shift[k]);
                    detail::accumulate(cm, "psnr_aligned", psnr(g, aligned));
                    detail::accumulate(cm, "psnr_raw", psnr(g, p));
                    if (want_perc) detail::accumulate(cm, "lpips", perceptual(g, p, perceptual_backend));
                    break;
                }
                default:  // roughness / metallicity
                    detail::accumulate(cm, "psnr", psnr(g, p));
                    if (want_perc) detail::accumulate(cm, "lpips", perceptual(g, p, perceptual_backend));
                    break;
            }
            cm.images++;
            cm.pixels += long(g.h) * g.w;
        }
    }
    for (auto& [name, cm] : rep.channels) {
        if (cm.images > 0)
            for (auto& [k, v] : cm.values) v /= double(cm.images);
        if (!want_perc && name != "normal") cm.unavailable.push_back("lpips");
    }
    return rep;
}

inline nlohmann::json report_to_json(const MetricReport& r) {
    nlohmann::json j;
    j["pred_root"] = r.pred_root;
    j["gt_root"] = r.gt_root;
    j["perceptual_backend"] = r.perceptual_backend.empty() ? "unavailable" : r.perceptual_backend;
    for (const auto& [name, cm] : r.channels) {
        nlohmann::json c;
        for (const auto& [k, v] : cm.values) c["metrics"][k] = v;
        for (const auto& k : cm.unavailable) c["metrics"][k] = "unavailable";
        c["images"] = cm.images;
        c["pixels"] = cm.pixels;
        j["channels"][name] = c;
    }
    j["warnings"] = r.warnings;
    return j;
}

inline MetricReport report_from_json(const nlohmann::json& j) {
    MetricReport r;
    r.pred_root = j.value("pred_root", "");
    r.gt_root = j.value("gt_root", "");
    std::string pb = j.value("perceptual_backend", "unavailable");
    r.perceptual_backend = pb == "unavailable" ? "" : pb;
    if (j.contains("channels"))
        for (auto& [name, c] : j.at("channels").items()) {
            ChannelMetrics cm;
            if (c.contains("metrics"))
                for (auto& [k, v] : c.at("metrics").items()) {
                    if (v.is_number())
                        cm.values[k] = v.get<double>();
                    else
                        cm.unavailable.push_back(k);
                }
            cm.images = c.value("images", 0l);
            cm.pixels = c.value("pixels", 0l);
            r.channels[name] = cm;
        }
    if (j.contains("warnings")) r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
}

// Aligned plain-text table.
inline std::string report_text(const MetricReport& r) {
    std::ostringstream os;
    os << "channel       metric            value      images\n";
    os << "-------------------------------------------------\n";
    for (const auto& [name, cm] : r.channels) {
        for (const auto& [k, v] : cm.values) {
            os << name;
            for (std::size_t i = name.size(); i < 14; ++i) os << ' ';
            os << k;
            for (std::size_t i = k.size(); i < 18; ++i) os << ' ';
            char buf[32];
            std::snprintf(buf, sizeof buf, "%9.4f", v);
            os << buf << "  " << cm.images << "\n";
        }
        for (const auto& k : cm.unavailable) {
            os << name;
            for (std::size_t i = name.size(); i < 14; ++i) os << ' ';
            os << k;
            for (std::size_t i = k.size(); i < 18; ++i) os << ' ';
            os << "unavailable\n";
        }
    }
    for (const auto& w : r.warnings) os << "warning: " << w << "\n";
    return os.str();
}

}  // namespace ouro
