#pragma once

// The trainable v-predictor: a small conditional encoder-decoder with skip
// connections, one self-attention block at the deepest stage, token/caption
// embedding injected at the bottleneck, and a pseudo-3D video mode that
// reuses the 2D weights (temporal kernel extent 1, attention flattened
// across frames). There is no timestep embedding: t is always T.

#include <atomic>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ouro/diffusion.hpp"
#include "ouro/nn.hpp"

namespace ouro {

enum class Direction { Rgb2X, X2Rgb };

inline const char* direction_name(Direction d) { return d == Direction::Rgb2X ? "rgb2x" : "x2rgb"; }
inline std::optional<Direction> direction_from_name(const std::string& s) {
    if (s == "rgb2x") return Direction::Rgb2X;
    if (s == "x2rgb") return Direction::X2Rgb;
    return std::nullopt;
}

constexpr int kLatentPlanes = 3;

struct ModelConfig {
    Direction direction = Direction::Rgb2X;
    int base_width = 16;
    int depth = 2;  // number of 2x down/up stages; attention sits at the deepest
    int embed_dim = 32;
    int caption_buckets = 32;

    int cond_channels() const { return direction == Direction::Rgb2X ? 3 : kConditionPlanes; }
    int in_channels() const { return kLatentPlanes + cond_channels(); }
    int width_at(int level) const {  // level 0 = full resolution
        return std::min(base_width << level, base_width * 4);
    }
    int bottleneck_width() const { return width_at(depth); }

    void validate() const {
        if (depth < 2) throw ConfigError("model: depth must be >= 2");
        if (base_width < 4) throw ConfigError("model: base_width must be >= 4");
        if (embed_dim < 1 || caption_buckets < 1) throw ConfigError("model: embedding dims invalid");
    }
};

enum class ModelMode { Image, Video };

// Denoiser evaluations so far (one per forward call); backs the
// one-evaluation-per-output-map invariant.
inline std::atomic<long>& eval_counter() {
    static std::atomic<long> c{0};
    return c;
}

template <typename S>
struct DenoiserModel {
    ModelConfig cfg;
    ModelMode mode = ModelMode::Image;

    nn::Conv2d<S> stem;
    std::vector<nn::Conv2d<S>> enc, dec;
    nn::Conv2d<S> mid1, mid2, head;
    nn::SelfAttention<S> attn;
    nn::Param<S> task_table;     // 5 x embed_dim      (rgb2x switch)
    nn::Param<S> caption_table;  // buckets x embed_dim (x2rgb bag of hashed words)
    nn::Linear<S> token_proj;    // embed_dim -> bottleneck width

    std::vector<nn::Param<S>*> params() {
        std::vector<nn::Param<S>*> ps;
        auto app = [&](std::vector<nn::Param<S>*> v) { ps.insert(ps.end(), v.begin(), v.end()); };
        app(stem.params());
        for (auto& e : enc) app(e.params());
        app(mid1.params());
        ps.push_back(cfg.direction == Direction::Rgb2X ? &task_table : &caption_table);
        app(token_proj.params());
        app(attn.params());
        app(mid2.params());
        for (auto& d : dec) app(d.params());
        app(head.params());
        return ps;
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for (auto* p : params()) n += p->size();
        return n;
    }

    void zero_grad() {
        for (auto* p : params()) p->zero_grad();
    }

    // ---- token embedding ----

    std::vector<int> token_rows(const Token& token) const {
        if (cfg.direction == Direction::Rgb2X) {
            if (!std::holds_alternative<TaskToken>(token))
                throw std::invalid_argument("rgb2x model expects a task token");
            return {int(std::get<TaskToken>(token))};
        }
        if (!std::holds_alternative<Caption>(token)) throw std::invalid_argument("x2rgb model expects a caption");
        std::vector<int> rows;
        std::string word;
        auto flush = [&] {
            if (word.empty()) return;
            std::uint64_t h = 1469598103934665603ull;
            for (char ch : word) h = (h ^ std::uint64_t(std::uint8_t(std::tolower(ch)))) * 1099511628211ull;
            rows.push_back(int(h % std::uint64_t(cfg.caption_buckets)));
            word.clear();
        };
        for (char ch : std::get<Caption>(token).text) {
            if (std::isalnum(std::uint8_t(ch)))
                word += ch;
            else
                flush();
        }
        flush();
        return rows;
    }

    std::vector<S> embed(const std::vector<int>& rows) const {
        const nn::Param<S>& table = cfg.direction == Direction::Rgb2X ? task_table : caption_table;
        std::vector<S> e(cfg.embed_dim, S(0));
        for (int r : rows)
            for (int i = 0; i < cfg.embed_dim; ++i) e[i] += table.v[std::size_t(r) * cfg.embed_dim + i];
        if (!rows.empty())
            for (auto& x : e) x /= S(rows.size());
        return e;
    }

    void check_input(const Tensor<S>& input) const {
        if (input.c != cfg.in_channels())
            throw std::invalid_argument("denoiser: expected " + std::to_string(cfg.in_channels()) +
                                        " input channels, got " + std::to_string(input.c));
        int div = 1 << cfg.depth;
        if (input.h % div != 0 || input.w % div != 0 || input.h < div || input.w < div)
            throw ConfigError("denoiser: resolution must be divisible by 2^depth");
    }

    // ---- encoder/decoder halves (shared by image and video modes) ----

    // Runs stem + encoder + mid1 + token add; returns bottleneck features and
    // fills `skips` (pre-pool activations, shallowest first).
    Tensor<S> encode_half(const Tensor<S>& input, const std::vector<S>& proj, std::vector<Tensor<S>>& skips,
                          nn::Tape<S>* tape) const {
        Tensor<S> h = nn::silu(stem.forward(input, tape), tape);
        for (int d = 0; d < cfg.depth; ++d) {
            Tensor<S> sd = nn::silu(enc[d].forward(h, tape), tape);
            skips.push_back(sd);
            h = nn::avgpool2(sd);
        }
        h = nn::silu(mid1.forward(h, tape), tape);
        for (int y = 0; y < h.h; ++y)
            for (int x = 0; x < h.w; ++x)
                for (int c = 0; c < h.c; ++c) h.at(y, x, c) += proj[c];
        return h;
    }

    Tensor<S> decode_half(Tensor<S> h, const std::vector<Tensor<S>>& skips, nn::Tape<S>* tape) const {
        h = nn::silu(mid2.forward(h, tape), tape);
        for (int d = cfg.depth - 1; d >= 0; --d) {
            Tensor<S> cat = concat_channels(nn::upsample2(h), skips[d]);
            h = nn::silu(dec[d].forward(cat, tape), tape);
        }
        return head.forward(h, tape);
    }

    // ---- image mode ----

    Tensor<S> forward(const Tensor<S>& input, const Token& token, nn::Tape<S>* tape = nullptr) const {
        check_input(input);
        eval_counter().fetch_add(1, std::memory_order_relaxed);
        std::vector<int> rows = token_rows(token);
        std::vector<S> emb = embed(rows);
        std::vector<S> proj = token_proj.forward(emb, nullptr);
        std::vector<Tensor<S>> skips;
        Tensor<S> h = encode_half(input, proj, skips, tape);
        if (tape) {
            // saved token state goes on the tape here: backward consumes it
            // between the attention block and mid1 (strict LIFO order)
            Tensor<S> idx(1, std::max<std::size_t>(1, rows.size()), 1);
            idx.fill(S(-1));
            for (std::size_t i = 0; i < rows.size(); ++i) idx.v[i] = S(rows[i]);
            tape->push(std::move(idx));
            Tensor<S> saved(1, cfg.embed_dim, 1);
            saved.v.assign(emb.begin(), emb.end());
            tape->push(std::move(saved));
        }
        h = attn.forward(h, tape);
        return decode_half(std::move(h), skips, tape);
    }

    // Backward through a taped forward; accumulates parameter gradients and
    // returns the gradient w.r.t. the full input stack.
    Tensor<S> backward(const Tensor<S>& dout, nn::Tape<S>& tape) {
        Tensor<S> dh = head.backward(dout, tape);
        std::vector<Tensor<S>> dskips(cfg.depth);
        for (int d = 0; d < cfg.depth; ++d) {
            Tensor<S> dt = nn::silu_backward(dh, tape);
            Tensor<S> dcat = dec[d].backward(dt, tape);
            int up_c = dcat.c - skip_width(d);
            dskips[d] = slice_channels(dcat, up_c, skip_width(d));
            dh = nn::upsample2_backward(slice_channels(dcat, 0, up_c));
        }
        dh = mid2.backward(nn::silu_backward(dh, tape), tape);
        dh = attn.backward(dh, tape);

        // broadcast token add: pass-through to features, pooled to projection
        std::vector<S> dproj(cfg.bottleneck_width(), S(0));
        for (int y = 0; y < dh.h; ++y)
            for (int x = 0; x < dh.w; ++x)
                for (int c = 0; c < dh.c; ++c) dproj[c] += dh.at(y, x, c);
        std::vector<S> demb = token_proj.backward(dproj, tape);
        Tensor<S> idx = tape.pop();
        std::vector<int> rows;
        for (S x : idx.v)
            if (x >= S(0)) rows.push_back(int(x));
        nn::Param<S>& table = cfg.direction == Direction::Rgb2X ? task_table : caption_table;
        for (int r : rows)
            for (int i = 0; i < cfg.embed_dim; ++i)
                table.g[std::size_t(r) * cfg.embed_dim + i] += demb[i] / S(rows.size());

        dh = mid1.backward(nn::silu_backward(dh, tape), tape);
        for (int d = cfg.depth - 1; d >= 0; --d) {
            Tensor<S> dsd = nn::avgpool2_backward(dh);
            dsd += dskips[d];
            dh = enc[d].backward(nn::silu_backward(dsd, tape), tape);
        }
        return stem.backward(nn::silu_backward(dh, tape), tape);
    }

    int skip_width(int d) const { return cfg.width_at(d + 1); }

    // ---- video mode ----

    DenoiserModel inflated() const {
        if (mode == ModelMode::Video) throw ConfigError("inflate_temporal: model already inflated");
        DenoiserModel m = *this;
        m.mode = ModelMode::Video;
        return m;
    }

    // Pseudo-3D forward: convolutions act per frame (1x3x3), the attention
    // block flattens tokens across space and time. Inference only.
    std::vector<Tensor<S>> forward_video(const std::vector<Tensor<S>>& inputs, const Token& token) const {
        if (mode != ModelMode::Video) throw ConfigError("forward_video: model not inflated");
        if (inputs.empty()) throw std::invalid_argument("forward_video: no frames");
        eval_counter().fetch_add(1, std::memory_order_relaxed);
        std::vector<S> proj = token_proj.forward(embed(token_rows(token)), nullptr);

        const int F = int(inputs.size());
        std::vector<std::vector<Tensor<S>>> skips(F);
        std::vector<Tensor<S>> mids(F);
        for (int f = 0; f < F; ++f) {
            check_input(inputs[f]);
            if (!inputs[f].same_shape(inputs[0]))
                throw std::invalid_argument("forward_video: frame resolution mismatch");
            mids[f] = encode_half(inputs[f], proj, skips[f], nullptr);
        }

        // joint attention over all frames' tokens
        const int n_tok = mids[0].h * mids[0].w, d = mids[0].c;
        nn::RMat<S> X(F * n_tok, d);
        for (int f = 0; f < F; ++f)
            X.middleRows(f * n_tok, n_tok) = Eigen::Map<const nn::RMat<S>>(mids[f].v.data(), n_tok, d);
        nn::RMat<S> Y = attn.forward_tokens(X, nullptr);

        std::vector<Tensor<S>> outs(F);
        for (int f = 0; f < F; ++f) {
            Tensor<S> h(mids[f].h, mids[f].w, d);
            Eigen::Map<nn::RMat<S>>(h.v.data(), n_tok, d) = Y.middleRows(f * n_tok, n_tok);
            outs[f] = decode_half(std::move(h), skips[f], nullptr);
        }
        return outs;
    }
};

template <typename S>
DenoiserModel<S> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    DenoiserModel<S> m;
    m.cfg = cfg;
    m.stem = nn::Conv2d<S>("stem", cfg.in_channels(), cfg.base_width, 3);
    for (int d = 0; d < cfg.depth; ++d)
        m.enc.emplace_back("enc" + std::to_string(d), cfg.width_at(d), cfg.width_at(d + 1), 3);
    int bw = cfg.bottleneck_width();
    m.mid1 = nn::Conv2d<S>("mid1", bw, bw, 3);
    m.mid2 = nn::Conv2d<S>("mid2", bw, bw, 3);
    m.attn = nn::SelfAttention<S>("attn", bw);
    for (int d = 0; d < cfg.depth; ++d)
        m.dec.emplace_back("dec" + std::to_string(d), cfg.width_at(d + 1) + cfg.width_at(d + 1), cfg.width_at(d), 3);
    m.head = nn::Conv2d<S>("head", cfg.base_width, kLatentPlanes, 3);
    m.task_table = nn::Param<S>("task_table", {5, cfg.embed_dim});
    m.caption_table = nn::Param<S>("caption_table", {cfg.caption_buckets, cfg.embed_dim});
    m.token_proj = nn::Linear<S>("token_proj", cfg.embed_dim, bw);

    std::mt19937_64 rng(mix_seed(seed, 0xde4015eedull));
    std::normal_distribution<double> nd(0.0, 0.5);
    m.stem.init(rng);
    for (auto& e : m.enc) e.init(rng);
    m.mid1.init(rng);
    m.mid2.init(rng);
    m.attn.init(rng);
    for (auto& d : m.dec) d.init(rng);
    m.head.init(rng, 0.1);  // small head keeps initial v-hat near zero
    for (auto& x : m.task_table.v) x = S(nd(rng));
    for (auto& x : m.caption_table.v) x = S(nd(rng));
    m.token_proj.init(rng);
    return m;
}

}  // namespace ouro
