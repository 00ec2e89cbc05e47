#pragma once

// Stage-1 independent fine-tuning of both directions and stage-2 joint cycle
// training, plus resumable checkpoints. Training always uses the fixed
// terminal timestep t = T. Determinism contract: all randomness is derived
// per step from (seed, step), so resuming at step k reproduces an
// uninterrupted run bit for bit in single-worker mode.

#include <filesystem>
#include <fstream>
#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>

#include "ouro/denoiser.hpp"
#include "ouro/diffusion.hpp"
#include "ouro/objectives.hpp"
#include "ouro/otns.hpp"
#include "ouro/sceneforge.hpp"

namespace ouro {

struct TrainAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    ModelConfig model;
    int steps = 1500;
    int batch_size = 1;
    double lr = 1e-4;
    double dropout_p = 0.3;        // x2rgb condition dropout
    double lambda_cyc = 1.0;
    bool use_task_loss_in_cycle = true;
    bool detach_cycle = false;     // ablation: stop cycle gradients at the chain boundary
    std::uint64_t seed = 0;
    int checkpoint_every = 500;
    int mix_annotated = 2, mix_wild = 1;  // stage-2 batch mixing pattern
    int sched_T = 1000;
    double beta_start = 1e-4, beta_end = 0.02;
    NoiseSpec noise;
    std::string out_dir;  // checkpoints + training log; empty = no side files

    void validate(bool joint) const {
        if (steps < 1) throw ConfigError("train: steps must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (dropout_p < 0 || dropout_p > 1) throw ConfigError("train: dropout_p in [0,1]");
        if (joint && mix_annotated + mix_wild < 1) throw ConfigError("train: mixing ratios invalid");
    }
};

struct Checkpoint {
    ModelConfig cfg;
    int sched_T = 1000;
    double beta_start = 1e-4, beta_end = 0.02;
    NoiseSpec noise;
    DenoiserModel<float> model;
    nn::Adam<float> opt;
    long step = 0;

    DiffusionSchedule schedule() const { return make_schedule(sched_T, beta_start, beta_end); }
};

inline Checkpoint make_checkpoint(const TrainConfig& cfg, Direction dir) {
    Checkpoint ck;
    ck.cfg = cfg.model;
    ck.cfg.direction = dir;
    ck.sched_T = cfg.sched_T;
    ck.beta_start = cfg.beta_start;
    ck.beta_end = cfg.beta_end;
    ck.noise = cfg.noise;
    ck.model = build_model<float>(ck.cfg, cfg.seed);
    ck.opt.lr = cfg.lr;
    ck.opt.attach(ck.model.params());
    return ck;
}

// ---- checkpoint serialization ---------------------------------------------
// Directory layout: {params/*.otns, meta.json, optim.bin}. meta.json carries
// a hash over config + parameter + optimizer bytes; load refuses silently
// corrupted archives unless explicitly overridden.

namespace detail {
inline void hash_bytes(std::uint64_t& h, const void* p, std::size_t n) {
    const std::uint8_t* b = static_cast<const std::uint8_t*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ull;
}
}  // namespace detail

inline nlohmann::json checkpoint_meta_json(const Checkpoint& ck) {
    nlohmann::json j;
    j["direction"] = direction_name(ck.cfg.direction);
    j["base_width"] = ck.cfg.base_width;
    j["depth"] = ck.cfg.depth;
    j["embed_dim"] = ck.cfg.embed_dim;
    j["caption_buckets"] = ck.cfg.caption_buckets;
    j["sched_T"] = ck.sched_T;
    j["beta_start"] = ck.beta_start;
    j["beta_end"] = ck.beta_end;
    j["noise_scales"] = ck.noise.scales;
    j["noise_discount"] = ck.noise.discount;
    j["optimizer"] = {{"kind", "adam"}, {"lr", ck.opt.lr}, {"beta1", ck.opt.beta1},
                      {"beta2", ck.opt.beta2}, {"clip", ck.opt.clip}};
    j["step"] = ck.step;
    return j;
}

inline std::uint64_t checkpoint_hash(Checkpoint& ck) {
    std::uint64_t h = 1469598103934665603ull;
    auto meta = checkpoint_meta_json(ck);
    std::string cfg_str = meta.dump();
    detail::hash_bytes(h, cfg_str.data(), cfg_str.size());
    for (auto* p : ck.model.params()) detail::hash_bytes(h, p->v.data(), p->v.size() * sizeof(float));
    detail::hash_bytes(h, &ck.opt.step_count, sizeof ck.opt.step_count);
    for (auto& st : ck.opt.state) {
        detail::hash_bytes(h, st.m.data(), st.m.size() * sizeof(float));
        detail::hash_bytes(h, st.v.data(), st.v.size() * sizeof(float));
    }
    return h;
}

inline void save_checkpoint(Checkpoint& ck, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "params");
    for (auto* p : ck.model.params()) {
        NamedTensor nt;
        nt.dims = {std::uint32_t(p->size())};
        nt.data = p->v;
        nt.name = p->name;
        write_tensor(nt, dir / "params" / (p->name + ".otns"));
    }
    {
        std::ofstream f(dir / "optim.bin", std::ios::binary | std::ios::trunc);
        f.write("OPTM", 4);
        std::int64_t sc = ck.opt.step_count;
        f.write(reinterpret_cast<const char*>(&sc), sizeof sc);
        std::uint32_t n = std::uint32_t(ck.opt.state.size());
        f.write(reinterpret_cast<const char*>(&n), sizeof n);
        for (auto& st : ck.opt.state) {
            std::uint32_t sz = std::uint32_t(st.m.size());
            f.write(reinterpret_cast<const char*>(&sz), sizeof sz);
            f.write(reinterpret_cast<const char*>(st.m.data()), sz * sizeof(float));
            f.write(reinterpret_cast<const char*>(st.v.data()), sz * sizeof(float));
        }
        if (!f) throw std::runtime_error("checkpoint: failed writing optim.bin");
    }
    auto meta = checkpoint_meta_json(ck);
    meta["hash"] = checkpoint_hash(ck);
    std::ofstream f(dir / "meta.json");
    if (!f) throw std::runtime_error("checkpoint: cannot write meta.json");
    f << meta.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir, bool allow_hash_mismatch = false) {
    std::ifstream mf(dir / "meta.json");
    if (!mf) throw std::runtime_error("checkpoint: cannot read " + (dir / "meta.json").string());
    nlohmann::json meta = nlohmann::json::parse(mf);

    Checkpoint ck;
    auto d = direction_from_name(meta.at("direction").get<std::string>());
    if (!d) throw ConfigError("checkpoint: unknown direction");
    ck.cfg.direction = *d;
    ck.cfg.base_width = meta.at("base_width").get<int>();
    ck.cfg.depth = meta.at("depth").get<int>();
    ck.cfg.embed_dim = meta.at("embed_dim").get<int>();
    ck.cfg.caption_buckets = meta.at("caption_buckets").get<int>();
    ck.sched_T = meta.at("sched_T").get<int>();
    ck.beta_start = meta.at("beta_start").get<double>();
    ck.beta_end = meta.at("beta_end").get<double>();
    ck.noise.scales = meta.at("noise_scales").get<std::vector<int>>();
    ck.noise.discount = meta.at("noise_discount").get<double>();
    ck.step = meta.at("step").get<long>();

    ck.model = build_model<float>(ck.cfg, 0);
    for (auto* p : ck.model.params()) {
        NamedTensor nt = read_tensor(dir / "params" / (p->name + ".otns"));
        if (nt.data.size() != p->size()) throw ParseError("checkpoint: size mismatch for " + p->name);
        p->v = std::move(nt.data);
    }

    ck.opt.lr = meta.at("optimizer").at("lr").get<double>();
    ck.opt.clip = meta.at("optimizer").at("clip").get<double>();
    {
        std::ifstream f(dir / "optim.bin", std::ios::binary);
        if (!f) throw std::runtime_error("checkpoint: cannot read optim.bin");
        char magic[4];
        f.read(magic, 4);
        if (std::string(magic, 4) != "OPTM") throw ParseError("checkpoint: bad optim.bin magic");
        std::int64_t sc;
        f.read(reinterpret_cast<char*>(&sc), sizeof sc);
        ck.opt.step_count = long(sc);
        std::uint32_t n;
        f.read(reinterpret_cast<char*>(&n), sizeof n);
        ck.opt.state.resize(n);
        for (auto& st : ck.opt.state) {
            std::uint32_t sz;
            f.read(reinterpret_cast<char*>(&sz), sizeof sz);
            st.m.resize(sz);
            st.v.resize(sz);
            f.read(reinterpret_cast<char*>(st.m.data()), sz * sizeof(float));
            f.read(reinterpret_cast<char*>(st.v.data()), sz * sizeof(float));
        }
        if (!f) throw TruncatedError("checkpoint optim.bin");
    }

    std::uint64_t expect = meta.at("hash").get<std::uint64_t>();
    std::uint64_t got = checkpoint_hash(ck);
    if (expect != got && !allow_hash_mismatch)
        throw ValidationError("checkpoint: hash mismatch (archive modified?); pass an explicit override to resume");
    return ck;
}

// ---- latent/channel chain helpers -----------------------------------------

// Storage-space view of a predicted latent (normals stay encoded) and the
// adjoint mapping a storage-space gradient back onto the 3-plane latent.
inline TensorF storage_from_latent(const TensorF& z, Channel c) {
    switch (c) {
        case Channel::Normal:
        case Channel::Albedo: {
            TensorF s = z;
            for (auto& x : s.v) x = (x + 1.0f) * 0.5f;
            return s;
        }
        case Channel::Roughness:
        case Channel::Metallicity: {
            TensorF m = mean_channels(z);
            for (auto& x : m.v) x = (x + 1.0f) * 0.5f;
            return m;
        }
        case Channel::Irradiance: {
            TensorF s = z;
            for (auto& x : s.v) x += 1.0f;
            return s;
        }
    }
    return z;
}

inline TensorF storage_grad_to_latent(const TensorF& dstorage, Channel c) {
    if (c == Channel::Roughness || c == Channel::Metallicity) {
        TensorF dz(dstorage.h, dstorage.w, 3);
        for (int y = 0; y < dz.h; ++y)
            for (int x = 0; x < dz.w; ++x)
                for (int p = 0; p < 3; ++p) dz.at(y, x, p) = dstorage.at(y, x, 0) / 6.0f;
        return dz;
    }
    TensorF dz = dstorage;
    if (c == Channel::Normal || c == Channel::Albedo) dz *= 0.5f;
    return dz;
}

// Channel-space (task-loss) view: normals as raw vectors, r/m as 1-plane maps.
inline TensorF channelspace_from_latent(const TensorF& z, Channel c) {
    return c == Channel::Normal ? z : storage_from_latent(z, c);
}

inline TensorF channelspace_grad_to_latent(const TensorF& dchan, Channel c) {
    if (c == Channel::Normal) return dchan;
    return storage_grad_to_latent(dchan, c);
}

// Per-channel task loss in channel space, with gradient w.r.t. the latent.
inline double channel_task_loss(const TensorF& pred_latent, const TensorF& gt_channel, Channel c,
                                TensorF* dlatent_out) {
    TensorF pred = channelspace_from_latent(pred_latent, c);
    TensorF grad;
    double loss = 0;
    switch (c) {
        case Channel::Normal: loss = loss_normal<float>(gt_channel, pred, dlatent_out ? &grad : nullptr).value; break;
        case Channel::Irradiance: loss = loss_irradiance<float>(gt_channel, pred, dlatent_out ? &grad : nullptr); break;
        default: loss = loss_mse<float>(gt_channel, pred, dlatent_out ? &grad : nullptr); break;
    }
    if (dlatent_out) *dlatent_out = channelspace_grad_to_latent(grad, c);
    return loss;
}

// ---- stage 1 ----------------------------------------------------------------

struct StepLog {
    long step = 0;
    std::string phase;  // "rgb2x" / "x2rgb" / "cycle-annotated" / "cycle-wild"
    LossBreakdown loss;
};

inline void append_log(std::ostream* log, const StepLog& sl) {
    if (!log) return;
    nlohmann::json j;
    j["step"] = sl.step;
    j["phase"] = sl.phase;
    j["n"] = sl.loss.n;
    j["a"] = sl.loss.a;
    j["r"] = sl.loss.r;
    j["m"] = sl.loss.m;
    j["E"] = sl.loss.e;
    j["rgb"] = sl.loss.rgb;
    j["cycle_x"] = sl.loss.cycle_x;
    j["cycle_i"] = sl.loss.cycle_i;
    j["total"] = sl.loss.total;
    (*log) << j.dump() << "\n";
}

// One rgb2x training example: run the single-step recovery per present
// channel, apply the task losses, accumulate gradients (no optimizer step).
inline LossBreakdown stage1_rgb2x_example(Checkpoint& ck, const DatasetRecord& rec, const DiffusionSchedule& sched,
                                          std::uint64_t ex_seed, double grad_scale) {
    const int T = sched.T;
    const float s1m = float(sched.sqrt_1mab(T));
    TensorF cond = latent_from_rgb(rec.rgb.data);
    LossBreakdown lb;
    int k = 0;
    for (Channel c : kAllChannels) {
        if (!rec.intrinsics.mask.has(c)) continue;
        TensorF z0 = latent_from_channel(rec.intrinsics.channel(c), c);
        TensorF eps = multires_noise<float>(z0.h, z0.w, 3, ck.noise, mix_seed(ex_seed, 100 + k));
        TensorF zT = noise_target(z0, eps, T, sched);
        nn::Tape<float> tape;
        TensorF v = ck.model.forward(concat_channels(zT, cond), Token{TaskToken(c)}, &tape);
        TensorF z0_hat = v_to_z0(zT, v, sched);
        TensorF dlatent;
        double loss = channel_task_loss(z0_hat, rec.intrinsics.channel(c), c, &dlatent);
        switch (c) {
            case Channel::Normal: lb.n = loss; break;
            case Channel::Albedo: lb.a = loss; break;
            case Channel::Roughness: lb.r = loss; break;
            case Channel::Metallicity: lb.m = loss; break;
            case Channel::Irradiance: lb.e = loss; break;
        }
        dlatent *= float(-double(s1m) * grad_scale);  // d z0_hat / d v = -sqrt(1-ab_T)
        ck.model.backward(dlatent, tape);
        ++k;
    }
    lb.total = lb.task_sum();
    return lb;
}

inline LossBreakdown stage1_x2rgb_example(Checkpoint& ck, const DatasetRecord& rec, const DiffusionSchedule& sched,
                                          double dropout_p, std::uint64_t ex_seed, double grad_scale) {
    const int T = sched.T;
    std::mt19937_64 drop_rng(mix_seed(ex_seed, 7));
    auto cond = assemble_condition<float>(rec.intrinsics, rec.intrinsics.mask, dropout_p, drop_rng);
    TensorF z0 = latent_from_rgb(rec.rgb.data);
    TensorF eps = multires_noise<float>(z0.h, z0.w, 3, ck.noise, mix_seed(ex_seed, 11));
    TensorF zT = noise_target(z0, eps, T, sched);
    nn::Tape<float> tape;
    TensorF v = ck.model.forward(concat_channels(zT, cond.planes), Token{rec.caption}, &tape);
    TensorF z0_hat = v_to_z0(zT, v, sched);
    TensorF pred_rgb = rgb_from_latent(z0_hat);
    TensorF grad;
    LossBreakdown lb;
    lb.rgb = loss_mse<float>(rec.rgb.data, pred_rgb, &grad);
    lb.total = lb.rgb;
    grad *= float(-0.5 * sched.sqrt_1mab(T) * grad_scale);  // chain: rgb <- latent <- v
    ck.model.backward(grad, tape);
    return lb;
}

inline void maybe_checkpoint(Checkpoint& ck, const TrainConfig& cfg, const std::string& stem) {
    if (cfg.out_dir.empty() || cfg.checkpoint_every <= 0) return;
    if (ck.step % cfg.checkpoint_every != 0) return;
    save_checkpoint(ck, std::filesystem::path(cfg.out_dir) / (stem + "_step" + std::to_string(ck.step)));
}

// Stage-1 independent fine-tuning of one direction on annotated records.
// `resume` continues an existing checkpoint (which fixes the direction).
inline Checkpoint train_stage1(const TrainConfig& cfg, Direction dir, const std::vector<DatasetRecord>& data,
                               std::ostream* log = nullptr, Checkpoint* resume = nullptr) {
    cfg.validate(false);
    if (data.empty()) throw ConfigError("train_stage1: no records");
    for (const auto& r : data)
        if (dir == Direction::Rgb2X && r.intrinsics.mask.none())
            throw ConfigError("train_stage1: rgb2x requires annotated records (got wild record " + r.id + ")");
    Checkpoint ck = resume ? *resume : make_checkpoint(cfg, dir);
    DiffusionSchedule sched = ck.schedule();
    validate_schedule(sched);

    for (long step = ck.step; step < cfg.steps; ++step) {
        ck.model.zero_grad();
        LossBreakdown lb;
        for (int b = 0; b < cfg.batch_size; ++b) {
            std::uint64_t ex_seed = mix_seed(cfg.seed, std::uint64_t(step) * 1000003ull + b);
            const DatasetRecord& rec = data[ex_seed % data.size()];
            double gs = 1.0 / cfg.batch_size;
            LossBreakdown one = dir == Direction::Rgb2X
                                    ? stage1_rgb2x_example(ck, rec, sched, ex_seed, gs)
                                    : stage1_x2rgb_example(ck, rec, sched, cfg.dropout_p, ex_seed, gs);
            lb.n += one.n / cfg.batch_size;
            lb.a += one.a / cfg.batch_size;
            lb.r += one.r / cfg.batch_size;
            lb.m += one.m / cfg.batch_size;
            lb.e += one.e / cfg.batch_size;
            lb.rgb += one.rgb / cfg.batch_size;
        }
        lb.total = lb.task_sum() + lb.rgb;
        if (!std::isfinite(lb.total))
            throw TrainAbort("train_stage1: non-finite loss at step " + std::to_string(step) +
                             "; last good checkpoint at step " +
                             std::to_string((step / std::max(1, cfg.checkpoint_every)) * cfg.checkpoint_every));
        ck.opt.step(ck.model.params());
        ck.step = step + 1;
        append_log(log, {ck.step, direction_name(dir), lb});
        maybe_checkpoint(ck, cfg, direction_name(dir));
    }
    return ck;
}

// ---- stage 2: joint cycle training ------------------------------------------

// One cycle-training example. Chain A: I -> X_hat (all five channels) ->
// I_tilde with the image cycle loss; chain B (annotated only): X -> I_hat ->
// X_tilde with the intrinsic cycle loss. Task losses ride along on the
// first-stage outputs. Gradients flow through the whole chain, including the
// condition assembly, unless cfg.detach_cycle is set.
inline LossBreakdown cycle_example(Checkpoint& inv, Checkpoint& fwd, const DatasetRecord& rec, bool wild,
                                   const TrainConfig& cfg, const DiffusionSchedule& sched, std::uint64_t ex_seed) {
    const int T = sched.T;
    const float s1m = float(sched.sqrt_1mab(T));
    const float lam = float(cfg.lambda_cyc);
    LossBreakdown lb;

    // ---- chain A: I -> X_hat -> I_tilde ----
    TensorF condI = latent_from_rgb(rec.rgb.data);
    std::array<TensorF, 5> xhat_lat;
    std::array<nn::Tape<float>, 5> tapesA;
    for (Channel c : kAllChannels) {
        TensorF eps = multires_noise<float>(condI.h, condI.w, 3, inv.noise, mix_seed(ex_seed, 200 + int(c)));
        TensorF v = inv.model.forward(concat_channels(eps, condI), Token{TaskToken(c)}, &tapesA[int(c)]);
        xhat_lat[int(c)] = v_to_z0(eps, v, sched);
    }
    std::array<TensorF, 5> dxhat;  // accumulated latent gradients
    bool use_task = cfg.use_task_loss_in_cycle && !wild;
    if (use_task) {
        for (Channel c : kAllChannels) {
            if (!rec.intrinsics.mask.has(c)) continue;
            TensorF dlat;
            double loss = channel_task_loss(xhat_lat[int(c)], rec.intrinsics.channel(c), c, &dlat);
            switch (c) {
                case Channel::Normal: lb.n = loss; break;
                case Channel::Albedo: lb.a = loss; break;
                case Channel::Roughness: lb.r = loss; break;
                case Channel::Metallicity: lb.m = loss; break;
                case Channel::Irradiance: lb.e = loss; break;
            }
            dxhat[int(c)] = dlat;
        }
    }

    TensorF condXhat = condition_from_latents(xhat_lat);
    TensorF epsI = multires_noise<float>(condI.h, condI.w, 3, fwd.noise, mix_seed(ex_seed, 300));
    nn::Tape<float> tapeA_fwd;
    Caption cap = wild ? Caption{"a photo"} : rec.caption;
    TensorF vI = fwd.model.forward(concat_channels(epsI, condXhat), Token{cap}, &tapeA_fwd);
    TensorF itilde_lat = v_to_z0(epsI, vI, sched);
    TensorF itilde = rgb_from_latent(itilde_lat);
    TensorF d_itilde;
    lb.cycle_i = loss_mse<float>(rec.rgb.data, itilde, &d_itilde);

    // backward chain A
    TensorF dv_fwd = d_itilde;
    dv_fwd *= -0.5f * s1m * lam;  // image <- latent <- v, weighted by lambda
    TensorF dinA = fwd.model.backward(dv_fwd, tapeA_fwd);
    if (!cfg.detach_cycle) {
        auto dlat_from_cond = condition_grad_to_latents(slice_channels(dinA, kLatentPlanes, kConditionPlanes));
        for (Channel c : kAllChannels) {
            if (dxhat[int(c)].empty())
                dxhat[int(c)] = dlat_from_cond[int(c)];
            else
                dxhat[int(c)] += dlat_from_cond[int(c)];
        }
    }
    for (int ci = 4; ci >= 0; --ci) {
        if (dxhat[ci].empty()) {
            nn::Tape<float> discard;
            std::swap(discard, tapesA[ci]);
            continue;
        }
        TensorF dv = dxhat[ci];
        dv *= -s1m;
        inv.model.backward(dv, tapesA[ci]);
    }

    // ---- chain B: X -> I_hat -> X_tilde (annotated only) ----
    if (!wild) {
        std::mt19937_64 drop_rng(mix_seed(ex_seed, 400));
        auto condX = assemble_condition<float>(rec.intrinsics, rec.intrinsics.mask, cfg.dropout_p, drop_rng);
        TensorF epsB = multires_noise<float>(condI.h, condI.w, 3, fwd.noise, mix_seed(ex_seed, 401));
        nn::Tape<float> tapeB_fwd;
        TensorF vB = fwd.model.forward(concat_channels(epsB, condX.planes), Token{rec.caption}, &tapeB_fwd);
        TensorF ihat_lat = v_to_z0(epsB, vB, sched);
        TensorF ihat = rgb_from_latent(ihat_lat);
        TensorF d_ihat_rgb;
        if (cfg.use_task_loss_in_cycle) lb.rgb = loss_mse<float>(rec.rgb.data, ihat, &d_ihat_rgb);

        std::vector<Channel> present;
        for (Channel c : kAllChannels)
            if (rec.intrinsics.mask.has(c)) present.push_back(c);
        std::vector<nn::Tape<float>> tapesB(present.size());
        std::vector<TensorF> xtilde_lat(present.size());
        for (std::size_t i = 0; i < present.size(); ++i) {
            TensorF eps = multires_noise<float>(condI.h, condI.w, 3, inv.noise, mix_seed(ex_seed, 500 + i));
            TensorF v = inv.model.forward(concat_channels(eps, ihat_lat), Token{TaskToken(present[i])}, &tapesB[i]);
            xtilde_lat[i] = v_to_z0(eps, v, sched);
        }
        // cycle_x in encoded storage space, averaged over present channels
        TensorF d_ihat_lat(condI.h, condI.w, 3);
        double cyc_x = 0;
        std::vector<TensorF> dxt(present.size());
        for (std::size_t i = 0; i < present.size(); ++i) {
            Channel c = present[i];
            TensorF gt_st = c == Channel::Normal ? encode_normal(rec.intrinsics.normal).data
                                                 : rec.intrinsics.channel(c);
            TensorF pred_st = storage_from_latent(xtilde_lat[i], c);
            TensorF g;
            cyc_x += loss_mse<float>(gt_st, pred_st, &g);
            g *= 1.0f / float(present.size());
            dxt[i] = storage_grad_to_latent(g, c);
        }
        if (!present.empty()) cyc_x /= double(present.size());
        lb.cycle_x = cyc_x;

        for (std::size_t ii = present.size(); ii-- > 0;) {
            TensorF dv = dxt[ii];
            dv *= -s1m * lam;
            TensorF din = inv.model.backward(dv, tapesB[ii]);
            if (!cfg.detach_cycle) d_ihat_lat += slice_channels(din, kLatentPlanes, kLatentPlanes);
        }
        TensorF dvB = d_ihat_lat;
        if (!d_ihat_rgb.empty()) dvB.axpy(0.5f, d_ihat_rgb);  // rgb task grad: d rgb / d latent = 0.5
        dvB *= -s1m;
        fwd.model.backward(dvB, tapeB_fwd);
    }

    lb.total = lb.task_sum() + lb.rgb + cfg.lambda_cyc * (lb.cycle_x + lb.cycle_i);
    return lb;
}

// Stage-2 joint optimization of both checkpoints on annotated plus wild data.
inline std::pair<Checkpoint, Checkpoint> train_cycle(const TrainConfig& cfg, Checkpoint inv, Checkpoint fwd,
                                                     const std::vector<DatasetRecord>& annotated,
                                                     const std::vector<DatasetRecord>& wild,
                                                     std::ostream* log = nullptr) {
    cfg.validate(true);
    if (inv.cfg.direction != Direction::Rgb2X || fwd.cfg.direction != Direction::X2Rgb)
        throw ConfigError("train_cycle: checkpoint directions wrong");
    if (inv.sched_T != fwd.sched_T || inv.beta_start != fwd.beta_start || inv.beta_end != fwd.beta_end)
        throw ConfigError("train_cycle: schedule mismatch between checkpoints");
    if (annotated.empty() && wild.empty()) throw ConfigError("train_cycle: no data");
    DiffusionSchedule sched = inv.schedule();
    validate_schedule(sched);

    const int block = cfg.mix_annotated + cfg.mix_wild;
    long start = std::max(inv.step, fwd.step);
    for (long step = start; step < cfg.steps; ++step) {
        bool wild_step = !wild.empty() && (annotated.empty() || (step % block) >= cfg.mix_annotated);
        const auto& pool = wild_step ? wild : annotated;
        inv.model.zero_grad();
        fwd.model.zero_grad();
        std::uint64_t ex_seed = mix_seed(cfg.seed, 0xcc00ull + std::uint64_t(step));
        const DatasetRecord& rec = pool[ex_seed % pool.size()];
        LossBreakdown lb = cycle_example(inv, fwd, rec, wild_step, cfg, sched, ex_seed);
        if (!std::isfinite(lb.total)) throw TrainAbort("train_cycle: non-finite loss at step " + std::to_string(step));
        inv.opt.step(inv.model.params());
        fwd.opt.step(fwd.model.params());
        inv.step = fwd.step = step + 1;
        append_log(log, {step + 1, wild_step ? "cycle-wild" : "cycle-annotated", lb});
        maybe_checkpoint(inv, cfg, "cycle_rgb2x");
        maybe_checkpoint(fwd, cfg, "cycle_x2rgb");
    }
    return {std::move(inv), std::move(fwd)};
}

// Composition diagnostic used by the cycle-improvement comparison: run
// I -> X_hat -> I_tilde with both models (inference style) and return the
// image cycle loss.
inline double cycle_i_metric(Checkpoint& inv, Checkpoint& fwd, const DatasetRecord& rec, std::uint64_t seed) {
    DiffusionSchedule sched = inv.schedule();
    TensorF condI = latent_from_rgb(rec.rgb.data);
    std::array<TensorF, 5> xhat;
    for (Channel c : kAllChannels) {
        TensorF eps = multires_noise<float>(condI.h, condI.w, 3, inv.noise, mix_seed(seed, 600 + int(c)));
        TensorF v = inv.model.forward(concat_channels(eps, condI), Token{TaskToken(c)}, nullptr);
        xhat[int(c)] = v_to_z0(eps, v, sched);
    }
    TensorF cond = condition_from_latents(xhat);
    TensorF eps = multires_noise<float>(condI.h, condI.w, 3, fwd.noise, mix_seed(seed, 700));
    TensorF v = fwd.model.forward(concat_channels(eps, cond), Token{Caption{"a photo"}}, nullptr);
    TensorF itilde = rgb_from_latent(v_to_z0(eps, v, sched));
    return loss_mse<float>(rec.rgb.data, itilde);
}

}  // namespace ouro
