// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Heavier end-to-end checks (overfit, cycle improvement, temporal
// smoothing) run real training loops, so this binary takes tens of minutes.

#include <chrono>
#include <cstdio>
#include <functional>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "ouro/evalkit.hpp"
#include "ouro/sceneforge.hpp"
#include "ouro/temporal.hpp"
#include "ouro/trainer.hpp"

using namespace ouro;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double elapsed_s(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int idx, const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s criterion %d (%s): %s\n", ok ? "PASS" : "FAIL", idx, name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

fs::path workdir() {
    static fs::path p = [] {
        fs::path d = fs::temp_directory_path() / "acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return p;
}

std::vector<DatasetRecord> gen_records(int n, Profile profile, int res, std::uint64_t seed) {
    std::vector<DatasetRecord> recs;
    for (int i = 0; i < n; ++i) {
        DatasetRecord r = make_record(mix_seed(seed, i), profile, res);
        r.id = std::string(profile_name(profile)) + "_" + std::to_string(i);
        recs.push_back(std::move(r));
    }
    return recs;
}

// ---- criterion 1: diffusion algebra ----------------------------------------

bool algebra_suite(std::string& detail) {
    DiffusionSchedule sched = default_schedule();
    validate_schedule(sched);
    std::mt19937_64 rng(1);
    double worst_inv = 0;
    for (int trial = 0; trial < 20; ++trial) {
        TensorD z0 = gaussian_tensor<double>(16, 16, 3, rng);
        TensorD eps = gaussian_tensor<double>(16, 16, 3, rng);
        TensorD zT = noise_target(z0, eps, sched.T, sched);
        TensorD v = v_target(z0, eps, sched.T, sched);
        worst_inv = std::max(worst_inv, max_abs_diff(v_to_z0(zT, v, sched), z0));
    }
    if (worst_inv > 1e-10) {
        detail = "v inversion drift " + std::to_string(worst_inv);
        return false;
    }
    // noise variance
    NoiseSpec nspec;
    double sum = 0, sum2 = 0;
    std::size_t n = 0;
    for (int d = 0; d < 50; ++d) {
        TensorF e = multires_noise<float>(64, 64, 3, nspec, 50 + d);
        for (float x : e.v) {
            sum += x;
            sum2 += double(x) * x;
            ++n;
        }
    }
    double var = sum2 / double(n) - (sum / double(n)) * (sum / double(n));
    if (var < 0.95 || var > 1.05) {
        detail = "multires variance " + std::to_string(var);
        return false;
    }
    // condition adjoint
    std::array<TensorD, 5> lat;
    for (auto& z : lat) z = gaussian_tensor<double>(8, 8, 3, rng);
    TensorD planes = condition_from_latents(lat);
    TensorD dp = gaussian_tensor<double>(8, 8, kConditionPlanes, rng);
    auto dl = condition_grad_to_latents(dp);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < planes.v.size(); ++i) lhs += planes.v[i] * dp.v[i];
    for (int c = 0; c < 5; ++c)
        for (std::size_t i = 0; i < lat[c].v.size(); ++i) rhs += lat[c].v[i] * dl[c].v[i];
    if (std::abs(lhs - rhs) > 1e-9 * std::max(1.0, std::abs(lhs))) {
        detail = "condition adjoint mismatch";
        return false;
    }
    detail = "inversion exact, noise variance " + std::to_string(var);
    return true;
}

// ---- criterion 2: loss oracles ---------------------------------------------

bool loss_oracles(std::string& detail) {
    std::mt19937_64 rng(2);
    auto fd = [](std::function<double()> f, double& x) {
        double o = x, h = 1e-6;
        x = o + h;
        double up = f();
        x = o - h;
        double dn = f();
        x = o;
        return (up - dn) / (2 * h);
    };
    // normal loss gradient
    TensorD gt = gaussian_tensor<double>(4, 4, 3, rng);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            double l = 0;
            for (int c = 0; c < 3; ++c) l += gt.at(y, x, c) * gt.at(y, x, c);
            l = std::sqrt(l);
            for (int c = 0; c < 3; ++c) gt.at(y, x, c) /= l;
        }
    TensorD pred = gaussian_tensor<double>(4, 4, 3, rng);
    TensorD grad;
    loss_normal(gt, pred, &grad);
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        double num = fd([&] { return loss_normal(gt, pred).value; }, pred.v[i]);
        if (std::abs(grad.v[i] - num) > 1e-5) {
            detail = "normal grad off at " + std::to_string(i);
            return false;
        }
    }
    // irradiance: affine invariance + gradient
    TensorD e_gt = gaussian_tensor<double>(6, 6, 3, rng);
    TensorD e_pred = gaussian_tensor<double>(6, 6, 3, rng);
    double base = loss_irradiance(e_gt, e_pred);
    TensorD warped = e_pred;
    for (auto& x : warped.v) x = 2.5 * x - 0.7;
    if (std::abs(loss_irradiance(e_gt, warped) - base) > 1e-8) {
        detail = "irradiance loss not affine invariant";
        return false;
    }
    TensorD eg;
    loss_irradiance(e_gt, e_pred, &eg);
    for (std::size_t i = 0; i < e_pred.v.size(); ++i) {
        double num = fd([&] { return loss_irradiance(e_gt, e_pred); }, e_pred.v[i]);
        if (std::abs(eg.v[i] - num) > 1e-5) {
            detail = "irradiance grad off";
            return false;
        }
    }
    // mse convention worked example
    TensorD a(2, 2, 3), b(2, 2, 3, 1.0);
    if (std::abs(loss_mse(a, b) - 3.0) > 1e-12) {
        detail = "mse convention broken";
        return false;
    }
    detail = "normal/irradiance gradients match finite differences";
    return true;
}

// ---- criterion 3: renderer self-consistency --------------------------------

bool reshade_consistency(std::string& detail) {
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        SceneSpec s = sample_scene(seed);
        RenderOutput ro = render_gbuffer(s, 64);
        IntrinsicSet g = ro.intrinsics;
        g.normal = decode_normal(encode_normal(g.normal));  // storage round trip
        worst = std::max(worst, max_abs_diff(reshade(g, s), ro.rgb.data));
        if (worst > 1e-5) break;
    }
    detail = "worst reshade deviation " + std::to_string(worst) + " over 100 scenes";
    return worst <= 1e-5;
}

// ---- criterion 4: overfit both directions ----------------------------------

struct LogStats {
    double early_avg = 0, final_total = 0;
};

LogStats parse_log(const std::string& text) {
    LogStats st;
    std::istringstream in(text);
    std::string line;
    int count = 0;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        double t = j.at("total").get<double>();
        if (count < 10) st.early_avg += t;
        st.final_total = t;
        ++count;
    }
    st.early_avg /= std::min(count, 10);
    return st;
}

bool overfit_direction(Direction dir, const std::vector<DatasetRecord>& data, Checkpoint& out_ck, std::string& detail) {
    TrainConfig cfg;
    cfg.model.base_width = 16;
    cfg.model.depth = 2;
    cfg.model.embed_dim = 32;
    cfg.steps = 1500;
    cfg.lr = 1e-3;
    cfg.dropout_p = 0.0;  // overfit probe: full conditioning
    cfg.seed = 17;
    cfg.checkpoint_every = 0;
    std::ostringstream log;
    auto t0 = Clock::now();
    out_ck = train_stage1(cfg, dir, data, &log);
    double secs = elapsed_s(t0);
    LogStats st = parse_log(log.str());
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s: early avg %.4f -> final %.4f (%.1f%%), %.0fs", direction_name(dir),
                  st.early_avg, st.final_total, 100.0 * st.final_total / st.early_avg, secs);
    detail = buf;
    return st.final_total <= 0.10 * st.early_avg && secs <= 1800.0;
}

bool overfit_suite(std::string& detail) {
    auto data = gen_records(4, Profile::IndoorLike, 64, 71);
    Checkpoint inv, fwd;
    std::string d1, d2;
    bool ok1 = overfit_direction(Direction::Rgb2X, data, inv, d1);
    bool ok2 = overfit_direction(Direction::X2Rgb, data, fwd, d2);

    // reconstruction PSNR for the forward model on its training scenes
    DiffusionSchedule sched = fwd.schedule();
    double psnr_sum = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        std::mt19937_64 rng(0);
        auto cond = assemble_condition<float>(data[i].intrinsics, data[i].intrinsics.mask, 0.0, rng);
        TensorF z0 = single_step_infer(fwd.model, cond.planes, Token{data[i].caption}, sched, fwd.noise,
                                       mix_seed(99, i));
        psnr_sum += psnr(data[i].rgb.data, rgb_from_latent(z0));
    }
    double avg_psnr = psnr_sum / double(data.size());
    bool ok3 = avg_psnr >= 25.0;
    char buf[128];
    std::snprintf(buf, sizeof buf, "; x2rgb reconstruction %.2f dB", avg_psnr);
    detail = d1 + " | " + d2 + buf;
    return ok1 && ok2 && ok3;
}

// ---- criterion 5: cycle training improves wild reconstruction --------------

bool cycle_improvement(std::string& detail) {
    const int res = 32;
    auto annotated = gen_records(16, Profile::IndoorLike, res, 81);
    auto wild = gen_records(32, Profile::Wild, res, 82);

    TrainConfig s1;
    s1.model.base_width = 16;
    s1.model.depth = 2;
    s1.steps = 300;
    s1.lr = 1e-3;
    s1.seed = 23;
    s1.checkpoint_every = 0;
    auto t0 = Clock::now();
    Checkpoint inv = train_stage1(s1, Direction::Rgb2X, annotated);
    Checkpoint fwd = train_stage1(s1, Direction::X2Rgb, annotated);

    std::vector<double> before(wild.size());
    for (std::size_t i = 0; i < wild.size(); ++i) before[i] = cycle_i_metric(inv, fwd, wild[i], mix_seed(7, i));

    TrainConfig s2 = s1;
    s2.steps = 300 + 1000;  // continue for 1000 joint steps
    s2.lr = 3e-4;
    inv.opt.lr = fwd.opt.lr = s2.lr;
    auto [inv2, fwd2] = train_cycle(s2, std::move(inv), std::move(fwd), annotated, wild);
    double secs = elapsed_s(t0);

    int wins = 0;
    for (std::size_t i = 0; i < wild.size(); ++i) {
        double after = cycle_i_metric(inv2, fwd2, wild[i], mix_seed(7, i));
        if (after < before[i]) ++wins;
    }
    // one-sided sign test, n = 32: >= 22 wins gives p ~ 0.025 < 0.05
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d/32 wild images improved (need >= 22 for p < 0.05), %.0fs", wins, secs);
    detail = buf;
    return wins >= 22 && secs <= 2700.0;
}

// ---- criterion 6: temporal smoothing ---------------------------------------

double adjacent_diff(const std::vector<TensorF>& frames) {
    double s = 0;
    for (std::size_t f = 0; f + 1 < frames.size(); ++f) {
        TensorF d = frames[f + 1];
        d -= frames[f];
        s += mean_sq(d);
    }
    return s / double(frames.size() - 1);
}

bool temporal_suite(std::string& detail) {
    auto t0 = Clock::now();
    // 16-frame horizontal pan: every object slides a little each frame
    SceneSpec base = sample_scene(4242);
    std::vector<TensorF> conds;
    for (int f = 0; f < 16; ++f) {
        SceneSpec s = base;
        for (auto& o : s.objects)
            if (o.shape != ShapeKind::Plane) o.cx += 0.012f * f;
        conds.push_back(latent_from_rgb(render_gbuffer(s, 32).rgb.data));
    }

    ModelConfig mc;
    mc.direction = Direction::Rgb2X;
    mc.base_width = 16;
    mc.depth = 2;
    auto model = build_model<float>(mc, 55);
    DiffusionSchedule sched = default_schedule();
    NoiseSpec nspec;

    VideoConfig vcfg;
    vcfg.window_size = 8;
    vcfg.stride = 4;
    vcfg.gamma = 0.1;
    vcfg.seed = 66;
    auto windowed = infer_video(model, conds, Token{TaskToken(Channel::Albedo)}, sched, nspec, vcfg);
    auto independent = infer_frames_independent(model, conds, Token{TaskToken(Channel::Albedo)}, sched, nspec, 66);

    double dw = adjacent_diff(windowed), di = adjacent_diff(independent);
    double secs = elapsed_s(t0);
    char buf[160];
    std::snprintf(buf, sizeof buf, "adjacent-frame msd windowed %.5f vs independent %.5f, %.0fs", dw, di, secs);
    detail = buf;
    return dw <= di && secs <= 600.0;
}

// ---- criterion 7: metric suite ---------------------------------------------

bool metric_suite(std::string& detail) {
    TensorF gt(16, 16, 3, 0.5f);
    TensorF off = gt;
    for (auto& x : off.v) x += 0.1f;
    if (std::abs(psnr(gt, off) - 20.0) > 1e-3) {
        detail = "psnr worked example failed";
        return false;
    }
    if (psnr(gt, gt) != kPsnrCap) {
        detail = "psnr cap failed";
        return false;
    }
    std::mt19937_64 rng(3);
    TensorF img = gaussian_tensor<float>(16, 16, 3, rng);
    if (std::abs(ssim(img, img) - 1.0) > 1e-9) {
        detail = "ssim identity failed";
        return false;
    }
    TensorF scaled = img;
    scaled *= 0.4f;
    if (si_rmse(img, scaled) > 1e-6) {
        detail = "si_rmse scale invariance failed";
        return false;
    }
    TensorF n_gt(1, 1, 3), n_pred(1, 1, 3);
    n_gt.at(0, 0, 2) = 1.0f;
    float s = float(1.0 / std::sqrt(2.0));
    n_pred.at(0, 0, 0) = s;
    n_pred.at(0, 0, 2) = s;
    AngularStats st = angular_stats(n_gt, n_pred);
    if (std::abs(st.mean_deg - 45.0) > 1e-3 || st.pct_below_11_25 != 0.0) {
        detail = "angular stats failed";
        return false;
    }
    detail = "psnr/ssim/si-rmse/angular worked examples all match";
    return true;
}

// ---- criterion 8: one evaluation per requested map (CLI) -------------------

std::string run_capture(const std::string& args, int& code) {
    std::string cmd = std::string(OURO_BIN) + " " + args + " 2>/dev/null";
    FILE* p = popen(cmd.c_str(), "r");
    std::string out;
    char buf[512];
    while (p && fgets(buf, sizeof buf, p)) out += buf;
    code = p ? WEXITSTATUS(pclose(p)) : -1;
    return out;
}

long parse_evals(const std::string& out) {
    auto pos = out.rfind("total network evaluations: ");
    if (pos == std::string::npos) return -1;
    return std::atol(out.c_str() + pos + 27);
}

bool eval_counter_suite(std::string& detail) {
    fs::path dir = workdir() / "evalcount";
    fs::create_directories(dir);
    // tiny checkpoints + one record
    TrainConfig cfg;
    cfg.model.base_width = 4;
    cfg.model.depth = 2;
    cfg.model.embed_dim = 8;
    cfg.seed = 1;
    Checkpoint inv = make_checkpoint(cfg, Direction::Rgb2X);
    Checkpoint fwd = make_checkpoint(cfg, Direction::X2Rgb);
    save_checkpoint(inv, dir / "inv");
    save_checkpoint(fwd, dir / "fwd");
    build_dataset(1, 91, dir / "data", Profile::IndoorLike, 16);
    fs::path rec = dir / "data" / "train" / "indoor-like_00000";

    int code = 0;
    std::string out3 = run_capture("infer --ckpt \"" + (dir / "inv").string() + "\" --input \"" + rec.string() +
                                       "\" --tasks n,a,E --out \"" + (dir / "p3").string() + "\"",
                                   code);
    long evals3 = parse_evals(out3);
    if (code != 0 || evals3 != 3) {
        detail = "rgb2x 3-map run reported " + std::to_string(evals3) + " evaluations";
        return false;
    }
    std::string out5 = run_capture("infer --ckpt \"" + (dir / "inv").string() + "\" --input \"" + rec.string() +
                                       "\" --tasks n,a,r,m,E --out \"" + (dir / "p5").string() + "\"",
                                   code);
    long evals5 = parse_evals(out5);
    if (code != 0 || evals5 != 5) {
        detail = "rgb2x 5-map run reported " + std::to_string(evals5) + " evaluations";
        return false;
    }
    std::string out1 = run_capture("infer --ckpt \"" + (dir / "fwd").string() + "\" --input \"" + rec.string() +
                                       "\" --out \"" + (dir / "p1").string() + "\"",
                                   code);
    long evals1 = parse_evals(out1);
    if (code != 0 || evals1 != 1) {
        detail = "x2rgb run reported " + std::to_string(evals1) + " evaluations";
        return false;
    }
    detail = "3, 5 and 1 requested maps cost exactly 3, 5 and 1 evaluations";
    return true;
}

template <typename Fn>
void run_criterion(int idx, const std::string& name, double budget_s, Fn fn) {
    auto t0 = Clock::now();
    std::string detail;
    bool ok = false;
    try {
        ok = fn(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    double secs = elapsed_s(t0);
    if (secs > budget_s) {
        ok = false;
        detail += " [over time budget: " + std::to_string(long(secs)) + "s > " + std::to_string(long(budget_s)) + "s]";
    }
    report(idx, name, ok, detail);
}

}  // namespace

int main() {
    run_criterion(1, "diffusion algebra", 10, algebra_suite);
    run_criterion(2, "loss oracles", 120, loss_oracles);
    run_criterion(3, "renderer self-consistency", 60, reshade_consistency);
    run_criterion(7, "metric suite", 30, metric_suite);
    run_criterion(8, "one evaluation per map", 120, eval_counter_suite);
    run_criterion(6, "temporal smoothing", 600, temporal_suite);
    run_criterion(4, "single-scene-set overfit", 3700, overfit_suite);
    run_criterion(5, "cycle improvement", 2700, cycle_improvement);
    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
