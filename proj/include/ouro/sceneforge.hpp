#pragma once

// Procedural toy scenes plus an analytic forward renderer. Acts as ground
// truth for training data, cycle tests and metrics.
//
// Shading, per pixel (orthographic camera looking down -z, view v = (0,0,1)):
//   E   = ambient + sum_i intensity_i * max(0, n.l_i)
//   spec= sum_i intensity_i * (0.04*(1-m) + a*m) * max(0, n.h_i)^(2 / max(r,0.05)^2)
//   rgb = clamp(a * E * (1-m) + spec, 0, 1)
// E is diffuse-only, so rgb != a*E exactly and inversion stays nontrivial.

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ouro/core.hpp"

namespace ouro {

enum class ShapeKind { Sphere = 0, Box, Plane };

inline const char* shape_name(ShapeKind s) {
    switch (s) {
        case ShapeKind::Sphere: return "sphere";
        case ShapeKind::Box: return "box";
        case ShapeKind::Plane: return "plane";
    }
    return "?";
}

struct SceneObject {
    ShapeKind shape = ShapeKind::Sphere;
    float cx = 0.5f, cy = 0.5f, cz = 0.0f;  // scene coords in [0,1]^2, depth along z
    float size = 0.2f;                      // radius / half-extent; planes ignore it
    float albedo[3] = {0.5f, 0.5f, 0.5f};
    float roughness = 0.5f;
    float metallicity = 0.0f;
};

struct SceneLight {
    float dir[3] = {0, 0, 1};  // unit, surface-to-light, dz > 0
    float intensity[3] = {1, 1, 1};
};

struct SceneSpec {
    std::vector<SceneObject> objects;  // 1..6, last-listed backdrop plane guaranteed by sampler
    std::vector<SceneLight> lights;    // 1..3
    float ambient[3] = {0.1f, 0.1f, 0.1f};
};

struct SceneConfig {
    int min_objects = 2, max_objects = 5;  // including the backdrop plane
    int min_lights = 1, max_lights = 3;
    float max_intensity = 0.9f;
    float max_ambient = 0.3f;
    // sampled lower bound; keeps the specular exponent mild so that re-shading
    // float32-stored normals stays within 1e-5 of the stored image
    float min_roughness = 0.3f;
};

struct RenderOutput {
    ImageTensor rgb;
    IntrinsicSet intrinsics;  // full mask
};

inline SceneSpec sample_scene(std::uint64_t seed, const SceneConfig& cfg = {}) {
    if (cfg.min_objects < 1 || cfg.max_objects > 6 || cfg.min_objects > cfg.max_objects ||
        cfg.min_lights < 1 || cfg.max_lights > 3 || cfg.min_lights > cfg.max_lights)
        throw std::invalid_argument("sample_scene: config bounds invalid");
    std::mt19937_64 rng(mix_seed(seed, 0x5ce9ef0a6eull));
    auto uni = [&](float lo, float hi) { return std::uniform_real_distribution<float>(lo, hi)(rng); };
    auto uni_i = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

    SceneSpec s;
    int n_obj = uni_i(cfg.min_objects, cfg.max_objects);
    for (int i = 0; i + 1 < n_obj; ++i) {
        SceneObject o;
        o.shape = (uni(0, 1) < 0.6f) ? ShapeKind::Sphere : ShapeKind::Box;
        o.cx = uni(0.15f, 0.85f);
        o.cy = uni(0.15f, 0.85f);
        o.cz = uni(0.1f, 0.5f);
        o.size = uni(0.08f, 0.3f);
        for (int c = 0; c < 3; ++c) o.albedo[c] = uni(0.1f, 0.95f);
        o.roughness = uni(cfg.min_roughness, 1.0f);
        o.metallicity = (uni(0, 1) < 0.3f) ? uni(0.5f, 1.0f) : uni(0.0f, 0.2f);
        s.objects.push_back(o);
    }
    // backdrop plane at z=0 so every pixel is covered
    SceneObject back;
    back.shape = ShapeKind::Plane;
    back.cz = 0.0f;
    for (int c = 0; c < 3; ++c) back.albedo[c] = uni(0.2f, 0.8f);
    back.roughness = uni(std::max(0.4f, cfg.min_roughness), 1.0f);
    back.metallicity = uni(0.0f, 0.1f);
    s.objects.push_back(back);

    int n_lights = uni_i(cfg.min_lights, cfg.max_lights);
    for (int i = 0; i < n_lights; ++i) {
        SceneLight l;
        float dx = uni(-0.7f, 0.7f), dy = uni(-0.7f, 0.7f), dz = uni(0.4f, 1.0f);
        float len = std::sqrt(dx * dx + dy * dy + dz * dz);
        l.dir[0] = dx / len;
        l.dir[1] = dy / len;
        l.dir[2] = dz / len;
        for (int c = 0; c < 3; ++c) l.intensity[c] = uni(0.1f, cfg.max_intensity);
        s.lights.push_back(l);
    }
    for (int c = 0; c < 3; ++c) s.ambient[c] = uni(0.02f, cfg.max_ambient);
    return s;
}

namespace detail {
struct Hit {
    bool ok = false;
    float z = -1e30f;  // hit depth; rays travel along -z so larger z wins
    float n[3] = {0, 0, 1};
    const SceneObject* obj = nullptr;
};

// Orthographic ray through (px, py) along -z.
inline Hit intersect(const SceneSpec& s, float px, float py) {
    Hit best;
    for (const auto& o : s.objects) {
        Hit h;
        if (o.shape == ShapeKind::Plane) {
            h.ok = true;
            h.z = o.cz;
            h.n[0] = 0; h.n[1] = 0; h.n[2] = 1;
        } else if (o.shape == ShapeKind::Sphere) {
            float dx = px - o.cx, dy = py - o.cy;
            float d2 = dx * dx + dy * dy;
            float r2 = o.size * o.size;
            if (d2 > r2) continue;
            float dz = std::sqrt(r2 - d2);
            h.ok = true;
            h.z = o.cz + dz;
            h.n[0] = dx / o.size;
            h.n[1] = dy / o.size;
            h.n[2] = dz / o.size;
        } else {  // box: axis-aligned, top (+z) face visible
            if (std::abs(px - o.cx) > o.size || std::abs(py - o.cy) > o.size) continue;
            h.ok = true;
            h.z = o.cz + o.size;
            h.n[0] = 0; h.n[1] = 0; h.n[2] = 1;
        }
        if (h.ok && (!best.ok || h.z > best.z)) {
            best = h;
            best.obj = &o;
        }
    }
    return best;
}
}  // namespace detail

// Shade one pixel from intrinsic values; shared by the renderer and the
// self-consistency check.
inline void shade_pixel(const float n[3], const float a[3], float r, float m, const SceneSpec& s, float rgb_out[3],
                        float irr_out[3]) {
    float exponent = 2.0f / (std::max(r, 0.05f) * std::max(r, 0.05f));
    float E[3] = {s.ambient[0], s.ambient[1], s.ambient[2]};
    float spec[3] = {0, 0, 0};
    for (const auto& l : s.lights) {
        float ndl = std::max(0.0f, n[0] * l.dir[0] + n[1] * l.dir[1] + n[2] * l.dir[2]);
        // half vector with view v = (0,0,1)
        float hx = l.dir[0], hy = l.dir[1], hz = l.dir[2] + 1.0f;
        float hl = std::sqrt(hx * hx + hy * hy + hz * hz);
        float ndh = std::max(0.0f, (n[0] * hx + n[1] * hy + n[2] * hz) / hl);
        float ph = std::pow(ndh, exponent);
        for (int c = 0; c < 3; ++c) {
            E[c] += l.intensity[c] * ndl;
            spec[c] += l.intensity[c] * (0.04f * (1.0f - m) + a[c] * m) * ph;
        }
    }
    for (int c = 0; c < 3; ++c) {
        irr_out[c] = E[c];
        rgb_out[c] = std::clamp(a[c] * E[c] * (1.0f - m) + spec[c], 0.0f, 1.0f);
    }
}

inline RenderOutput render_gbuffer(const SceneSpec& s, int resolution) {
    if (resolution < 16) throw std::invalid_argument("render_gbuffer: resolution must be >= 16");
    const int H = resolution, W = resolution;
    RenderOutput out;
    out.rgb.data = TensorF(H, W, 3);
    out.rgb.colorspace = Colorspace::UnitEncoded;
    out.intrinsics = IntrinsicSet::zeros(H, W);
    out.intrinsics.mask = ChannelMask::all();

    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            float px = (x + 0.5f) / W, py = (y + 0.5f) / H;
            auto hit = detail::intersect(s, px, py);
            // sampler guarantees a backdrop plane, so hit.ok always holds for
            // sampled scenes; fall back to the backdrop material otherwise
            const SceneObject* o = hit.ok ? hit.obj : &s.objects.back();
            float n[3] = {hit.n[0], hit.n[1], hit.n[2]};
            float rgb[3], irr[3];
            shade_pixel(n, o->albedo, o->roughness, o->metallicity, s, rgb, irr);
            for (int c = 0; c < 3; ++c) {
                out.rgb.data.at(y, x, c) = rgb[c];
                out.intrinsics.normal.at(y, x, c) = n[c];
                out.intrinsics.albedo.at(y, x, c) = o->albedo[c];
                out.intrinsics.irradiance.at(y, x, c) = irr[c];
            }
            out.intrinsics.roughness.at(y, x, 0) = o->roughness;
            out.intrinsics.metallicity.at(y, x, 0) = o->metallicity;
        }
    return out;
}

// Re-shade stored intrinsics; used by the oracle self-consistency check.
inline TensorF reshade(const IntrinsicSet& g, const SceneSpec& s) {
    TensorF rgb(g.normal.h, g.normal.w, 3);
    for (int y = 0; y < rgb.h; ++y)
        for (int x = 0; x < rgb.w; ++x) {
            float n[3] = {g.normal.at(y, x, 0), g.normal.at(y, x, 1), g.normal.at(y, x, 2)};
            float a[3] = {g.albedo.at(y, x, 0), g.albedo.at(y, x, 1), g.albedo.at(y, x, 2)};
            float out[3], irr[3];
            shade_pixel(n, a, g.roughness.at(y, x, 0), g.metallicity.at(y, x, 0), s, out, irr);
            for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = out[c];
        }
    return rgb;
}

inline std::string color_word(const float a[3]) {
    float r = a[0], g = a[1], b = a[2];
    float mx = std::max({r, g, b}), mn = std::min({r, g, b});
    if (mx - mn < 0.12f) return mx > 0.7f ? "white" : (mx < 0.25f ? "dark" : "gray");
    if (r >= g && r >= b) return g > 0.6f * r ? "yellow" : "red";
    if (g >= r && g >= b) return b > 0.6f * g ? "cyan" : "green";
    return r > 0.6f * b ? "purple" : "blue";
}

inline Caption caption(const SceneSpec& s) {
    std::string text;
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
        if (i > 0) text += " and ";
        text += "a " + color_word(s.objects[i].albedo) + " " + shape_name(s.objects[i].shape);
    }
    text += " under " + std::to_string(s.lights.size()) + " lights";
    if (text.size() > 256) text.resize(256);
    return Caption{text};
}

struct ManifestEntry {
    std::string id;
    std::uint64_t seed = 0;
    Profile profile = Profile::Wild;
};

inline DatasetRecord make_record(std::uint64_t record_seed, Profile profile, int resolution,
                                 const SceneConfig& cfg = {}) {
    SceneSpec spec = sample_scene(record_seed, cfg);
    RenderOutput ro = render_gbuffer(spec, resolution);
    DatasetRecord r;
    r.scene_seed = record_seed;
    r.rgb = ro.rgb;
    r.intrinsics = ro.intrinsics;
    r.intrinsics.mask = expected_mask(profile);
    // absent channels are stored as zeros
    for (Channel c : kAllChannels)
        if (!r.intrinsics.mask.has(c)) r.intrinsics.channel(c).fill(0.0f);
    r.caption = caption(spec);
    if (profile == Profile::Wild) r.caption = Caption{"a photo"};
    r.profile = profile;
    return r;
}

inline std::vector<ManifestEntry> build_dataset(int n, std::uint64_t seed, const std::filesystem::path& out_root,
                                                Profile profile, int resolution = 64, const SceneConfig& cfg = {},
                                                const std::string& split = "train") {
    std::vector<ManifestEntry> manifest;
    std::filesystem::create_directories(out_root / split);
    for (int i = 0; i < n; ++i) {
        std::uint64_t rec_seed = mix_seed(seed, std::uint64_t(i));
        char idbuf[64];
        std::snprintf(idbuf, sizeof idbuf, "%s_%05d", profile_name(profile), i);
        DatasetRecord r = make_record(rec_seed, profile, resolution, cfg);
        r.id = idbuf;
        try {
            save_record(r, out_root / split / r.id);
        } catch (const std::exception& e) {
            throw std::runtime_error("build_dataset: record " + r.id + ": " + e.what());
        }
        manifest.push_back({r.id, rec_seed, profile});
    }
    nlohmann::json j = nlohmann::json::array();
    for (const auto& m : manifest)
        j.push_back({{"id", m.id}, {"seed", m.seed}, {"profile", profile_name(m.profile)}});
    std::ofstream f(out_root / split / "manifest.json");
    f << j.dump(2) << "\n";
    return manifest;
}

}  // namespace ouro
