#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ouro/otns.hpp"
#include "ouro/tensor.hpp"

namespace ouro {

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Colorspace { Linear, UnitEncoded };

struct ImageTensor {
    TensorF data;
    Colorspace colorspace = Colorspace::UnitEncoded;
};

enum class Channel { Normal = 0, Albedo, Roughness, Metallicity, Irradiance };
// Task tokens are the channel switch for RGB->X inference.
using TaskToken = Channel;

constexpr std::array<Channel, 5> kAllChannels = {Channel::Normal, Channel::Albedo, Channel::Roughness,
                                                 Channel::Metallicity, Channel::Irradiance};

inline const char* channel_name(Channel c) {
    switch (c) {
        case Channel::Normal: return "normal";
        case Channel::Albedo: return "albedo";
        case Channel::Roughness: return "roughness";
        case Channel::Metallicity: return "metallicity";
        case Channel::Irradiance: return "irradiance";
    }
    return "?";
}

inline std::optional<Channel> channel_from_name(const std::string& s) {
    for (Channel c : kAllChannels)
        if (s == channel_name(c)) return c;
    return std::nullopt;
}

inline int channel_planes(Channel c) {
    return (c == Channel::Roughness || c == Channel::Metallicity) ? 1 : 3;
}

struct ChannelMask {
    std::array<bool, 5> present = {false, false, false, false, false};

    bool has(Channel c) const { return present[int(c)]; }
    void set(Channel c, bool v = true) { present[int(c)] = v; }
    bool none() const {
        for (bool b : present)
            if (b) return false;
        return true;
    }
    int count() const {
        int n = 0;
        for (bool b : present) n += b;
        return n;
    }
    bool operator==(const ChannelMask&) const = default;

    static ChannelMask all() { return ChannelMask{{true, true, true, true, true}}; }
    static ChannelMask of(std::initializer_list<Channel> cs) {
        ChannelMask m;
        for (Channel c : cs) m.set(c);
        return m;
    }
};

struct Caption {
    std::string text;
};

enum class Profile { IndoorLike, CityLike, Wild };

inline const char* profile_name(Profile p) {
    switch (p) {
        case Profile::IndoorLike: return "indoor-like";
        case Profile::CityLike: return "city-like";
        case Profile::Wild: return "wild";
    }
    return "?";
}

inline std::optional<Profile> profile_from_name(const std::string& s) {
    if (s == "indoor-like") return Profile::IndoorLike;
    if (s == "city-like") return Profile::CityLike;
    if (s == "wild") return Profile::Wild;
    return std::nullopt;
}

inline ChannelMask expected_mask(Profile p) {
    switch (p) {
        case Profile::IndoorLike: return ChannelMask::of({Channel::Albedo, Channel::Normal, Channel::Irradiance});
        case Profile::CityLike:
            return ChannelMask::of({Channel::Albedo, Channel::Normal, Channel::Roughness, Channel::Metallicity});
        case Profile::Wild: return ChannelMask{};
    }
    return ChannelMask{};
}

struct IntrinsicSet {
    TensorF normal;       // H x W x 3, unit vectors (raw, not encoded)
    TensorF albedo;       // H x W x 3 in [0,1]
    TensorF roughness;    // H x W x 1 in [0,1]
    TensorF metallicity;  // H x W x 1 in [0,1]
    TensorF irradiance;   // H x W x 3, >= 0
    ChannelMask mask;

    const TensorF& channel(Channel c) const {
        switch (c) {
            case Channel::Normal: return normal;
            case Channel::Albedo: return albedo;
            case Channel::Roughness: return roughness;
            case Channel::Metallicity: return metallicity;
            case Channel::Irradiance: return irradiance;
        }
        return normal;
    }
    TensorF& channel(Channel c) { return const_cast<TensorF&>(std::as_const(*this).channel(c)); }

    static IntrinsicSet zeros(int h, int w) {
        IntrinsicSet s;
        s.normal = TensorF(h, w, 3);
        s.albedo = TensorF(h, w, 3);
        s.roughness = TensorF(h, w, 1);
        s.metallicity = TensorF(h, w, 1);
        s.irradiance = TensorF(h, w, 3);
        return s;
    }
};

struct DatasetRecord {
    std::string id;
    ImageTensor rgb;
    IntrinsicSet intrinsics;
    Caption caption;
    Profile profile = Profile::Wild;
    std::uint64_t scene_seed = 0;
};

// ---- normal map encoding -------------------------------------------------

constexpr float kUnitNormTol = 1e-4f;

// (n+1)/2 storage encoding. Input vectors must be unit length within tolerance.
inline ImageTensor encode_normal(const TensorF& n) {
    if (n.c != 3) throw std::invalid_argument("encode_normal: expects 3 channels");
    ImageTensor out;
    out.colorspace = Colorspace::UnitEncoded;
    out.data = TensorF(n.h, n.w, 3);
    for (int y = 0; y < n.h; ++y)
        for (int x = 0; x < n.w; ++x) {
            float len = std::sqrt(n.at(y, x, 0) * n.at(y, x, 0) + n.at(y, x, 1) * n.at(y, x, 1) +
                                  n.at(y, x, 2) * n.at(y, x, 2));
            if (std::abs(len - 1.0f) > kUnitNormTol)
                throw ValidationError("encode_normal: non-unit vector at pixel (" + std::to_string(y) + "," +
                                      std::to_string(x) + "), length " + std::to_string(len));
            for (int ch = 0; ch < 3; ++ch) out.data.at(y, x, ch) = (n.at(y, x, ch) + 1.0f) * 0.5f;
        }
    return out;
}

// normalize(2*img - 1); zero-length vectors decode to (0,0,1).
inline TensorF decode_normal(const ImageTensor& img) {
    if (img.data.c != 3) throw std::invalid_argument("decode_normal: expects 3 channels");
    TensorF out(img.data.h, img.data.w, 3);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
            float vx = 2.0f * img.data.at(y, x, 0) - 1.0f;
            float vy = 2.0f * img.data.at(y, x, 1) - 1.0f;
            float vz = 2.0f * img.data.at(y, x, 2) - 1.0f;
            float len = std::sqrt(vx * vx + vy * vy + vz * vz);
            if (len < 1e-8f) {
                out.at(y, x, 0) = 0;
                out.at(y, x, 1) = 0;
                out.at(y, x, 2) = 1;
            } else {
                out.at(y, x, 0) = vx / len;
                out.at(y, x, 1) = vy / len;
                out.at(y, x, 2) = vz / len;
            }
        }
    return out;
}

// ---- record validation ---------------------------------------------------

inline std::vector<std::string> validate_record(const DatasetRecord& r) {
    std::vector<std::string> report;
    auto add = [&](const std::string& s) { report.push_back(r.id + ": " + s); };

    const TensorF& rgb = r.rgb.data;
    if (rgb.h < 8 || rgb.w < 8) add("rgb smaller than 8x8");
    if (rgb.c != 3) add("rgb must have 3 channels");
    if (!rgb.all_finite()) add("rgb has non-finite values");
    for (float x : rgb.v)
        if (x < 0.0f || x > 1.0f) {
            add("rgb values outside [0,1]");
            break;
        }

    if (r.intrinsics.mask != expected_mask(r.profile)) add("profile/mask mismatch");

    const int H = rgb.h, W = rgb.w;
    for (Channel c : kAllChannels) {
        const TensorF& t = r.intrinsics.channel(c);
        std::string nm = channel_name(c);
        if (t.h != H || t.w != W) add(nm + " dims differ from rgb");
        if (t.c != channel_planes(c)) add(nm + " has wrong channel count");
        if (!t.all_finite()) add(nm + " has non-finite values");
        if (!r.intrinsics.mask.has(c)) {
            for (float x : t.v)
                if (x != 0.0f) {
                    add(nm + " absent per mask but non-zero");
                    break;
                }
            continue;
        }
        if (c == Channel::Normal) {
            bool bad = false;
            for (int y = 0; y < t.h && !bad; ++y)
                for (int x = 0; x < t.w && !bad; ++x) {
                    float len = std::sqrt(t.at(y, x, 0) * t.at(y, x, 0) + t.at(y, x, 1) * t.at(y, x, 1) +
                                          t.at(y, x, 2) * t.at(y, x, 2));
                    if (std::abs(len - 1.0f) > kUnitNormTol) {
                        add("normal has non-unit vector (length " + std::to_string(len) + ")");
                        bad = true;
                    }
                }
        } else if (c == Channel::Irradiance) {
            for (float x : t.v)
                if (x < 0.0f) {
                    add("irradiance has negative values");
                    break;
                }
        } else {
            for (float x : t.v)
                if (x < 0.0f || x > 1.0f) {
                    add(nm + " values outside [0,1]");
                    break;
                }
        }
    }

    if (r.profile != Profile::Wild && r.caption.text.empty()) add("caption empty");
    if (r.caption.text.size() > 256) add("caption longer than 256 chars");
    return report;
}

// ---- on-disk layout ------------------------------------------------------
// <root>/<split>/<id>/{rgb.otns, normal.otns, albedo.otns, roughness.otns,
//                      metallicity.otns, irradiance.otns, meta.json}
// Normals are stored in encoded (n+1)/2 form; absent channels as zeros.

inline void save_record(const DatasetRecord& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_tensor(r.rgb.data, "rgb", dir / "rgb.otns");
    TensorF enc_normal(r.rgb.data.h, r.rgb.data.w, 3);
    if (r.intrinsics.mask.has(Channel::Normal)) enc_normal = encode_normal(r.intrinsics.normal).data;
    write_tensor(enc_normal, "normal", dir / "normal.otns");
    write_tensor(r.intrinsics.albedo, "albedo", dir / "albedo.otns");
    write_tensor(r.intrinsics.roughness, "roughness", dir / "roughness.otns");
    write_tensor(r.intrinsics.metallicity, "metallicity", dir / "metallicity.otns");
    write_tensor(r.intrinsics.irradiance, "irradiance", dir / "irradiance.otns");

    nlohmann::json meta;
    meta["id"] = r.id;
    meta["profile"] = profile_name(r.profile);
    meta["caption"] = r.caption.text;
    meta["scene_seed"] = r.scene_seed;
    nlohmann::json mask;
    for (Channel c : kAllChannels) mask[channel_name(c)] = r.intrinsics.mask.has(c);
    meta["mask"] = mask;
    std::ofstream f(dir / "meta.json");
    if (!f) throw std::runtime_error("cannot write " + (dir / "meta.json").string());
    f << meta.dump(2) << "\n";
}

inline DatasetRecord load_record(const std::filesystem::path& dir) {
    DatasetRecord r;
    std::ifstream f(dir / "meta.json");
    if (!f) throw std::runtime_error("cannot read " + (dir / "meta.json").string());
    nlohmann::json meta = nlohmann::json::parse(f);
    r.id = meta.at("id").get<std::string>();
    auto p = profile_from_name(meta.at("profile").get<std::string>());
    if (!p) throw ValidationError("unknown profile in " + dir.string());
    r.profile = *p;
    r.caption.text = meta.at("caption").get<std::string>();
    r.scene_seed = meta.value("scene_seed", std::uint64_t(0));
    for (Channel c : kAllChannels) r.intrinsics.mask.set(c, meta.at("mask").at(channel_name(c)).get<bool>());

    r.rgb.data = read_tensor_hwc(dir / "rgb.otns");
    r.rgb.colorspace = Colorspace::UnitEncoded;
    TensorF enc_normal = read_tensor_hwc(dir / "normal.otns");
    if (r.intrinsics.mask.has(Channel::Normal))
        r.intrinsics.normal = decode_normal(ImageTensor{enc_normal, Colorspace::UnitEncoded});
    else
        r.intrinsics.normal = TensorF(enc_normal.h, enc_normal.w, 3);
    r.intrinsics.albedo = read_tensor_hwc(dir / "albedo.otns");
    r.intrinsics.roughness = read_tensor_hwc(dir / "roughness.otns");
    r.intrinsics.metallicity = read_tensor_hwc(dir / "metallicity.otns");
    r.intrinsics.irradiance = read_tensor_hwc(dir / "irradiance.otns");
    return r;
}

}  // namespace ouro
