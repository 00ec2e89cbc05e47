// ouro: command-line front end. Thin orchestration over the library:
// gen-data, train, train-cycle, infer, infer-video, eval, report.
// Exit codes: 0 success, 1 validation/config error, 2 runtime failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ouro/evalkit.hpp"
#include "ouro/imageio.hpp"
#include "ouro/sceneforge.hpp"
#include "ouro/temporal.hpp"
#include "ouro/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ouro;

namespace {

constexpr const char* kArtifactVersion = "0.1.0";

bool g_quiet = false;

void say(const std::string& s) {
    if (!g_quiet) std::cout << s << "\n";
}

void write_provenance(const fs::path& out_dir, const std::string& command, const json& config, std::uint64_t seed,
                      double wall_s, int argc, char** argv) {
    fs::create_directories(out_dir);
    json j;
    j["command"] = command;
    for (int i = 0; i < argc; ++i) j["argv"].push_back(argv[i]);
    j["config"] = config;
    j["seed"] = seed;
    j["wall_time_s"] = wall_s;
    j["versions"] = {{"artifact", kArtifactVersion}, {"otns", 1}};
    std::ofstream f(out_dir / "provenance.json");
    f << j.dump(2) << "\n";
}

std::vector<DatasetRecord> load_split(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("dataset path not found: " + dir.string());
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && fs::exists(e.path() / "meta.json")) ids.push_back(e.path().filename().string());
    std::sort(ids.begin(), ids.end());
    std::vector<DatasetRecord> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(load_record(dir / id));
    if (out.empty()) throw std::runtime_error("no records under " + dir.string());
    return out;
}

Channel channel_from_shorthand(const std::string& s) {
    if (s == "a") return Channel::Albedo;
    if (s == "n") return Channel::Normal;
    if (s == "r") return Channel::Roughness;
    if (s == "m") return Channel::Metallicity;
    if (s == "E") return Channel::Irradiance;
    auto c = channel_from_name(s);
    if (!c) throw ConfigError("unknown channel '" + s + "'");
    return *c;
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

struct TrainPaths {
    std::string data, wild_data, out;
};

void apply_train_json(const json& j, TrainConfig& tc, TrainPaths& paths) {
    static const std::set<std::string> known = {
        "data",        "wild_data",  "out",          "steps",       "batch_size",
        "lr",          "dropout_p",  "lambda_cyc",   "use_task_loss_in_cycle",
        "detach_cycle", "seed",      "checkpoint_every", "mix_annotated", "mix_wild",
        "sched_T",     "beta_start", "beta_end",     "noise_scales", "noise_discount",
        "base_width",  "depth",      "embed_dim",    "caption_buckets"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw ConfigError("config: unknown key '" + k + "'");
    auto get = [&](const char* k, auto& dst) {
        if (j.contains(k)) dst = j.at(k).get<std::decay_t<decltype(dst)>>();
    };
    get("data", paths.data);
    get("wild_data", paths.wild_data);
    get("out", paths.out);
    get("steps", tc.steps);
    get("batch_size", tc.batch_size);
    get("lr", tc.lr);
    get("dropout_p", tc.dropout_p);
    get("lambda_cyc", tc.lambda_cyc);
    get("use_task_loss_in_cycle", tc.use_task_loss_in_cycle);
    get("detach_cycle", tc.detach_cycle);
    get("seed", tc.seed);
    get("checkpoint_every", tc.checkpoint_every);
    get("mix_annotated", tc.mix_annotated);
    get("mix_wild", tc.mix_wild);
    get("sched_T", tc.sched_T);
    get("beta_start", tc.beta_start);
    get("beta_end", tc.beta_end);
    get("noise_scales", tc.noise.scales);
    get("noise_discount", tc.noise.discount);
    get("base_width", tc.model.base_width);
    get("depth", tc.model.depth);
    get("embed_dim", tc.model.embed_dim);
    get("caption_buckets", tc.model.caption_buckets);
}

// clamp a predicted channel into its storable range and renormalize normals
void sanitize_channel(TensorF& t, Channel c) {
    switch (c) {
        case Channel::Normal:
            for (int y = 0; y < t.h; ++y)
                for (int x = 0; x < t.w; ++x) {
                    double l = 0;
                    for (int k = 0; k < 3; ++k) l += double(t.at(y, x, k)) * t.at(y, x, k);
                    l = std::sqrt(l);
                    if (l < 1e-8) {
                        t.at(y, x, 0) = 0;
                        t.at(y, x, 1) = 0;
                        t.at(y, x, 2) = 1;
                    } else {
                        for (int k = 0; k < 3; ++k) t.at(y, x, k) = float(t.at(y, x, k) / l);
                    }
                }
            break;
        case Channel::Irradiance:
            for (auto& v : t.v) v = std::max(0.0f, v);
            break;
        default:
            for (auto& v : t.v) v = std::clamp(v, 0.0f, 1.0f);
            break;
    }
}

TensorF channel_preview(const TensorF& t, Channel c) {
    TensorF p = t;
    if (c == Channel::Normal)
        for (auto& v : p.v) v = (v + 1.0f) * 0.5f;
    else
        for (auto& v : p.v) v = std::clamp(v, 0.0f, 1.0f);
    return p;
}

int run_gen_data(const std::string& profile_s, int count, std::uint64_t seed, int res, const std::string& out,
                 const std::string& split, int argc, char** argv) {
    auto profile = profile_from_name(profile_s);
    if (!profile) throw ConfigError("unknown profile '" + profile_s + "'");
    auto t0 = std::chrono::steady_clock::now();
    build_dataset(count, seed, out, *profile, res, {}, split);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json cfg = {{"profile", profile_s}, {"count", count}, {"res", res}, {"split", split}};
    write_provenance(fs::path(out) / split, "gen-data", cfg, seed, wall, argc, argv);
    say("wrote " + std::to_string(count) + " records to " + out + "/" + split);
    return 0;
}

int run_train(const std::string& direction_s, const std::string& config_path, const TrainPaths& overrides,
              int steps_override, std::uint64_t seed_override, bool has_seed, const std::string& resume, int argc,
              char** argv) {
    auto dir = direction_from_name(direction_s);
    if (!dir) throw ConfigError("unknown direction '" + direction_s + "'");
    TrainConfig tc;
    TrainPaths paths;
    json cfg = json::object();
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw std::runtime_error("cannot read config: " + config_path);
        cfg = json::parse(f);
        apply_train_json(cfg, tc, paths);
    }
    if (!overrides.data.empty()) paths.data = overrides.data;
    if (!overrides.out.empty()) paths.out = overrides.out;
    if (steps_override > 0) tc.steps = steps_override;
    if (has_seed) tc.seed = seed_override;
    if (paths.data.empty()) throw ConfigError("train: no dataset (config key 'data' or --data)");
    if (paths.out.empty()) throw ConfigError("train: no output dir (config key 'out' or --out)");
    tc.out_dir = paths.out;
    tc.validate(false);

    auto data = load_split(paths.data);
    fs::create_directories(paths.out);
    std::ofstream log(fs::path(paths.out) / "train_log.jsonl", std::ios::app);
    std::optional<Checkpoint> res_ck;
    if (!resume.empty()) res_ck = load_checkpoint(resume);

    auto t0 = std::chrono::steady_clock::now();
    Checkpoint ck = train_stage1(tc, *dir, data, &log, res_ck ? &*res_ck : nullptr);
    save_checkpoint(ck, fs::path(paths.out) / "final");
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_provenance(paths.out, "train", cfg, tc.seed, wall, argc, argv);
    say("trained " + std::to_string(ck.step) + " steps; checkpoint at " + paths.out + "/final");
    return 0;
}

int run_train_cycle(const std::string& inv_path, const std::string& fwd_path, const std::string& config_path,
                    const TrainPaths& overrides, int steps_override, std::uint64_t seed_override, bool has_seed,
                    int argc, char** argv) {
    TrainConfig tc;
    TrainPaths paths;
    json cfg = json::object();
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw std::runtime_error("cannot read config: " + config_path);
        cfg = json::parse(f);
        apply_train_json(cfg, tc, paths);
    }
    if (!overrides.data.empty()) paths.data = overrides.data;
    if (!overrides.wild_data.empty()) paths.wild_data = overrides.wild_data;
    if (!overrides.out.empty()) paths.out = overrides.out;
    if (steps_override > 0) tc.steps = steps_override;
    if (has_seed) tc.seed = seed_override;
    if (paths.out.empty()) throw ConfigError("train-cycle: no output dir");
    tc.out_dir = paths.out;
    tc.validate(true);

    Checkpoint inv = load_checkpoint(inv_path);
    Checkpoint fwd = load_checkpoint(fwd_path);
    // joint training restarts its own step count
    inv.step = fwd.step = 0;
    std::vector<DatasetRecord> annotated, wild;
    if (!paths.data.empty()) annotated = load_split(paths.data);
    if (!paths.wild_data.empty()) wild = load_split(paths.wild_data);
    fs::create_directories(paths.out);
    std::ofstream log(fs::path(paths.out) / "train_log.jsonl", std::ios::app);

    auto t0 = std::chrono::steady_clock::now();
    auto [inv2, fwd2] = train_cycle(tc, std::move(inv), std::move(fwd), annotated, wild, &log);
    save_checkpoint(inv2, fs::path(paths.out) / "rgb2x_final");
    save_checkpoint(fwd2, fs::path(paths.out) / "x2rgb_final");
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_provenance(paths.out, "train-cycle", cfg, tc.seed, wall, argc, argv);
    say("cycle training done; checkpoints under " + paths.out);
    return 0;
}

int run_infer(const std::string& ckpt_path, const std::string& input, const std::string& tasks_s,
              const std::string& caption_s, std::uint64_t seed, const std::string& out, int argc, char** argv) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    DiffusionSchedule sched = ck.schedule();
    validate_schedule(sched);
    fs::path out_dir(out);
    auto t0 = std::chrono::steady_clock::now();
    long evals_before = eval_counter().load();
    json logj = json::array();

    if (ck.cfg.direction == Direction::Rgb2X) {
        if (!caption_s.empty()) throw ConfigError("infer: --caption is for x2rgb checkpoints");
        std::vector<Channel> tasks;
        for (const auto& s : split_commas(tasks_s.empty() ? "n,a,r,m,E" : tasks_s))
            tasks.push_back(channel_from_shorthand(s));
        TensorF rgb;
        bool as_record = fs::is_directory(input);
        DatasetRecord rec;
        if (as_record) {
            rec = load_record(input);
            rgb = rec.rgb.data;
        } else if (fs::path(input).extension() == ".otns") {
            rgb = read_tensor_hwc(input);
        } else {
            rgb = load_png(input);
        }
        TensorF cond = latent_from_rgb(rgb);
        fs::path rec_dir = as_record ? out_dir / rec.id : out_dir;
        fs::create_directories(rec_dir);
        DatasetRecord pred;
        if (as_record) {
            pred = rec;
            pred.intrinsics = IntrinsicSet::zeros(rgb.h, rgb.w);
            pred.intrinsics.mask = {};
        }
        for (Channel c : tasks) {
            auto c0 = std::chrono::steady_clock::now();
            long e0 = eval_counter().load();
            TensorF z0 = single_step_infer<float>(ck.model, cond, Token{TaskToken(c)}, sched, ck.noise,
                                                  mix_seed(seed, std::uint64_t(int(c))));
            TensorF chan = channel_from_latent(z0, c);
            sanitize_channel(chan, c);
            long e1 = eval_counter().load();
            double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - c0).count();
            std::string nm = channel_name(c);
            if (as_record) {
                pred.intrinsics.channel(c) = chan;
                pred.intrinsics.mask.set(c, true);
            } else {
                write_tensor(chan, nm, rec_dir / (nm + ".otns"));
            }
            save_png(channel_preview(chan, c), rec_dir / (nm + ".png"));
            json line = {{"channel", nm}, {"ms", ms}, {"evals", e1 - e0}};
            logj.push_back(line);
            say(line.dump());
        }
        if (as_record) save_record(pred, rec_dir);
    } else {
        if (!fs::is_directory(input)) throw std::runtime_error("infer: x2rgb expects a record directory as input");
        DatasetRecord rec = load_record(input);
        std::mt19937_64 rng(mix_seed(seed, 1));
        auto cond = assemble_condition<float>(rec.intrinsics, rec.intrinsics.mask, 0.0, rng);
        Caption cap = caption_s.empty() ? rec.caption : Caption{caption_s};
        auto c0 = std::chrono::steady_clock::now();
        long e0 = eval_counter().load();
        TensorF z0 = single_step_infer<float>(ck.model, cond.planes, Token{cap}, sched, ck.noise, mix_seed(seed, 2));
        TensorF rgb = rgb_from_latent(z0);
        for (auto& v : rgb.v) v = std::clamp(v, 0.0f, 1.0f);
        long e1 = eval_counter().load();
        double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - c0).count();
        fs::path rec_dir = out_dir / rec.id;
        DatasetRecord pred = rec;
        pred.rgb.data = rgb;
        save_record(pred, rec_dir);
        save_png(rgb, rec_dir / "rgb.png");
        json line = {{"channel", "rgb"}, {"ms", ms}, {"evals", e1 - e0}};
        logj.push_back(line);
        say(line.dump());
    }
    long evals = eval_counter().load() - evals_before;
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json cfg = {{"ckpt", ckpt_path}, {"input", input}, {"tasks", tasks_s}, {"caption", caption_s},
                {"log", logj},       {"total_evals", evals}};
    write_provenance(out_dir, "infer", cfg, seed, wall, argc, argv);
    say("total network evaluations: " + std::to_string(evals));
    return 0;
}

int run_infer_video(const std::string& ckpt_path, const std::string& frames_dir, const std::string& task_s, int window,
                    int stride, double gamma, std::uint64_t seed, const std::string& out, int argc, char** argv) {
    Checkpoint ck = load_checkpoint(ckpt_path);
    if (ck.cfg.direction != Direction::Rgb2X) throw ConfigError("infer-video: requires an rgb2x checkpoint");
    DiffusionSchedule sched = ck.schedule();
    validate_schedule(sched);
    Channel task = channel_from_shorthand(task_s);

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(frames_dir)) {
        auto ext = e.path().extension();
        if (ext == ".png" || ext == ".otns") files.push_back(e.path());
    }
    if (files.empty()) throw std::runtime_error("infer-video: no frames under " + frames_dir);
    std::sort(files.begin(), files.end());

    std::vector<TensorF> cond;
    cond.reserve(files.size());
    for (const auto& p : files) {
        TensorF rgb = p.extension() == ".otns" ? read_tensor_hwc(p) : load_png(p);
        cond.push_back(latent_from_rgb(rgb));
    }

    VideoConfig vcfg;
    vcfg.window_size = window;
    vcfg.stride = stride;
    vcfg.gamma = gamma;
    vcfg.seed = seed;
    auto t0 = std::chrono::steady_clock::now();
    auto latents = infer_video<float>(ck.model, cond, Token{TaskToken(task)}, sched, ck.noise, vcfg);
    fs::create_directories(out);
    for (std::size_t i = 0; i < latents.size(); ++i) {
        TensorF chan = channel_from_latent(latents[i], task);
        sanitize_channel(chan, task);
        std::string stem = files[i].stem().string();
        write_tensor(chan, channel_name(task), fs::path(out) / (stem + ".otns"));
        save_png(channel_preview(chan, task), fs::path(out) / (stem + ".png"));
    }
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json cfg = {{"ckpt", ckpt_path}, {"frames", frames_dir}, {"task", task_s},
                {"window", window},  {"stride", stride},     {"gamma", gamma}};
    write_provenance(out, "infer-video", cfg, seed, wall, argc, argv);
    say("wrote " + std::to_string(latents.size()) + " frames to " + out);
    return 0;
}

int run_eval(const std::string& pred, const std::string& gt, const std::string& channels_s, const std::string& out,
             const std::string& backend, bool allow_unpaired, int argc, char** argv) {
    std::vector<std::string> channels;
    for (const auto& s : split_commas(channels_s))
        channels.push_back(s == "rgb" ? "rgb" : channel_name(channel_from_shorthand(s)));
    auto t0 = std::chrono::steady_clock::now();
    MetricReport rep = evaluate(pred, gt, channels, backend, allow_unpaired);
    json j = report_to_json(rep);
    if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw std::runtime_error("eval: cannot write " + out);
        f << j.dump(2) << "\n";
    }
    std::cout << report_text(rep);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!out.empty()) {
        json cfg = {{"pred", pred}, {"gt", gt}, {"channels", channels_s}, {"backend", backend}};
        write_provenance(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path(), "eval", cfg, 0, wall,
                         argc, argv);
    }
    return 0;
}

int run_report(const std::string& report_path, const std::string& plots_dir) {
    std::ifstream f(report_path);
    if (!f) throw std::runtime_error("report: cannot read " + report_path);
    MetricReport rep = report_from_json(json::parse(f));
    std::cout << report_text(rep);
    if (!plots_dir.empty()) {
        render_report_plots(rep, plots_dir);
        say("plots written to " + plots_dir);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ouro: cycle-consistent single-step diffusion for intrinsic decomposition and neural rendering"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "global RNG seed");
    app.add_flag("--quiet", g_quiet, "suppress progress output");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a procedural dataset");
    std::string gd_profile = "indoor-like", gd_out, gd_split = "train";
    int gd_count = 8, gd_res = 64;
    gen->add_option("--profile", gd_profile, "indoor-like|city-like|wild");
    gen->add_option("--count", gd_count, "number of scenes")->check(CLI::PositiveNumber);
    gen->add_option("--res", gd_res, "image resolution");
    gen->add_option("--out", gd_out, "dataset root")->required();
    gen->add_option("--split", gd_split, "split name");

    // train
    auto* tr = app.add_subcommand("train", "stage-1 training of one direction");
    std::string tr_direction, tr_config, tr_resume;
    TrainPaths tr_paths;
    int tr_steps = 0;
    tr->add_option("--direction", tr_direction, "rgb2x|x2rgb")->required();
    tr->add_option("--config", tr_config, "JSON config file");
    tr->add_option("--data", tr_paths.data, "dataset split dir (overrides config)");
    tr->add_option("--out", tr_paths.out, "output dir (overrides config)");
    tr->add_option("--steps", tr_steps, "step count (overrides config)");
    tr->add_option("--resume", tr_resume, "checkpoint dir to resume from");

    // train-cycle
    auto* tc = app.add_subcommand("train-cycle", "stage-2 joint cycle training");
    std::string tc_inv, tc_fwd, tc_config;
    TrainPaths tc_paths;
    tc->add_option("--inv", tc_inv, "rgb2x checkpoint")->required();
    tc->add_option("--fwd", tc_fwd, "x2rgb checkpoint")->required();
    tc->add_option("--config", tc_config, "JSON config file");
    tc->add_option("--data", tc_paths.data, "annotated split dir (overrides config)");
    tc->add_option("--wild-data", tc_paths.wild_data, "wild split dir (overrides config)");
    tc->add_option("--out", tc_paths.out, "output dir (overrides config)");
    int tc_steps = 0;
    tc->add_option("--steps", tc_steps, "step count (overrides config)");

    // infer
    auto* inf = app.add_subcommand("infer", "single-step image inference");
    std::string if_ckpt, if_input, if_tasks, if_caption, if_out;
    inf->add_option("--ckpt", if_ckpt, "checkpoint dir")->required();
    inf->add_option("--input", if_input, "RGB image (png/otns) or record dir")->required();
    inf->add_option("--tasks", if_tasks, "comma list for rgb2x, e.g. n,a,r,m,E");
    inf->add_option("--caption", if_caption, "caption for x2rgb");
    inf->add_option("--out", if_out, "output dir")->required();

    // infer-video
    auto* ifv = app.add_subcommand("infer-video", "windowed video inference");
    std::string iv_ckpt, iv_frames, iv_task = "normal", iv_out;
    int iv_window = 8, iv_stride = 4;
    double iv_gamma = 0.1;
    ifv->add_option("--ckpt", iv_ckpt, "rgb2x checkpoint dir")->required();
    ifv->add_option("--frames", iv_frames, "directory of ordered png/otns frames")->required();
    ifv->add_option("--task", iv_task, "intrinsic channel");
    ifv->add_option("--window", iv_window, "window size");
    ifv->add_option("--stride", iv_stride, "window stride");
    ifv->add_option("--gamma", iv_gamma, "latent blend factor");
    ifv->add_option("--out", iv_out, "output dir")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "paired-directory metric evaluation");
    std::string ev_pred, ev_gt, ev_channels = "a,n,r,m,E,rgb", ev_out, ev_backend;
    bool ev_allow = false;
    ev->add_option("--pred", ev_pred, "prediction root")->required();
    ev->add_option("--gt", ev_gt, "ground-truth root")->required();
    ev->add_option("--channels", ev_channels, "comma list, e.g. a,n,r,m,E,rgb");
    ev->add_option("--out", ev_out, "report JSON path");
    ev->add_option("--backend", ev_backend, "registered perceptual backend name");
    ev->add_flag("--allow-unpaired", ev_allow, "skip unpaired ids instead of refusing");

    // report
    auto* rp = app.add_subcommand("report", "render a saved report");
    std::string rp_path, rp_plots;
    rp->add_option("report", rp_path, "report JSON file")->required();
    rp->add_option("--plots", rp_plots, "directory for PNG bar plots");

    for (auto* s : app.get_subcommands({})) s->fallthrough(true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen) return run_gen_data(gd_profile, gd_count, seed, gd_res, gd_out, gd_split, argc, argv);
        if (*tr)
            return run_train(tr_direction, tr_config, tr_paths, tr_steps, seed, app.count("--seed") > 0, tr_resume,
                             argc, argv);
        if (*tc)
            return run_train_cycle(tc_inv, tc_fwd, tc_config, tc_paths, tc_steps, seed, app.count("--seed") > 0, argc,
                                   argv);
        if (*inf) return run_infer(if_ckpt, if_input, if_tasks, if_caption, seed, if_out, argc, argv);
        if (*ifv)
            return run_infer_video(iv_ckpt, iv_frames, iv_task, iv_window, iv_stride, iv_gamma, seed, iv_out, argc,
                                   argv);
        if (*ev) return run_eval(ev_pred, ev_gt, ev_channels, ev_out, ev_backend, ev_allow, argc, argv);
        if (*rp) return run_report(rp_path, rp_plots);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
