#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "ouro/core.hpp"

using namespace ouro;
namespace fs = std::filesystem;

namespace {
TensorF unit_normals(int h, int w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd;
    TensorF t(h, w, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float a = nd(rng), b = nd(rng), c = nd(rng);
            float len = std::sqrt(a * a + b * b + c * c);
            if (len < 1e-3f) {
                a = 0;
                b = 0;
                c = 1;
                len = 1;
            }
            t.at(y, x, 0) = a / len;
            t.at(y, x, 1) = b / len;
            t.at(y, x, 2) = c / len;
        }
    return t;
}

DatasetRecord make_valid_record(int h = 8, int w = 8) {
    DatasetRecord r;
    r.id = "rec";
    r.profile = Profile::IndoorLike;
    r.caption.text = "a room";
    r.rgb.data = TensorF(h, w, 3, 0.5f);
    r.intrinsics = IntrinsicSet::zeros(h, w);
    r.intrinsics.mask = expected_mask(Profile::IndoorLike);
    r.intrinsics.normal = unit_normals(h, w, 3);
    r.intrinsics.albedo = TensorF(h, w, 3, 0.25f);
    r.intrinsics.irradiance = TensorF(h, w, 3, 1.5f);
    return r;
}
}  // namespace

TEST_CASE("encode_normal canonical examples") {
    TensorF n(1, 2, 3);
    n.at(0, 0, 0) = 0;
    n.at(0, 0, 1) = 0;
    n.at(0, 0, 2) = 1;
    n.at(0, 1, 0) = -1;
    n.at(0, 1, 1) = 0;
    n.at(0, 1, 2) = 0;
    ImageTensor e = encode_normal(n);
    REQUIRE(e.data.at(0, 0, 0) == Catch::Approx(0.5));
    REQUIRE(e.data.at(0, 0, 1) == Catch::Approx(0.5));
    REQUIRE(e.data.at(0, 0, 2) == Catch::Approx(1.0));
    REQUIRE(e.data.at(0, 1, 0) == Catch::Approx(0.0));
    REQUIRE(e.data.at(0, 1, 1) == Catch::Approx(0.5));
    REQUIRE(e.data.at(0, 1, 2) == Catch::Approx(0.5));
}

TEST_CASE("encode_normal rejects non-unit vectors") {
    TensorF n(1, 1, 3);
    n.at(0, 0, 2) = 1.01f;
    REQUIRE_THROWS_AS(encode_normal(n), ValidationError);
}

TEST_CASE("decode_normal maps degenerate pixels to (0,0,1)") {
    ImageTensor img;
    img.data = TensorF(1, 1, 3, 0.5f);  // encodes the zero vector
    TensorF n = decode_normal(img);
    REQUIRE(n.at(0, 0, 0) == 0.0f);
    REQUIRE(n.at(0, 0, 1) == 0.0f);
    REQUIRE(n.at(0, 0, 2) == 1.0f);
}

TEST_CASE("decode_normal renormalizes") {
    ImageTensor img;
    img.data = TensorF(1, 1, 3);
    img.data.at(0, 0, 0) = 1.0f;  // encodes (1, -1, -1)
    TensorF n = decode_normal(img);
    float len = std::sqrt(n.at(0, 0, 0) * n.at(0, 0, 0) + n.at(0, 0, 1) * n.at(0, 0, 1) + n.at(0, 0, 2) * n.at(0, 0, 2));
    REQUIRE(len == Catch::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("normal encode/decode round trip within 1e-5") {
    TensorF n = unit_normals(16, 16, 99);
    TensorF r = decode_normal(encode_normal(n));
    REQUIRE(max_abs_diff(n, r) < 1e-5);
}

TEST_CASE("expected_mask per profile") {
    ChannelMask in = expected_mask(Profile::IndoorLike);
    REQUIRE(in.has(Channel::Normal));
    REQUIRE(in.has(Channel::Albedo));
    REQUIRE(in.has(Channel::Irradiance));
    REQUIRE_FALSE(in.has(Channel::Roughness));
    REQUIRE_FALSE(in.has(Channel::Metallicity));

    ChannelMask city = expected_mask(Profile::CityLike);
    REQUIRE(city.has(Channel::Normal));
    REQUIRE(city.has(Channel::Albedo));
    REQUIRE(city.has(Channel::Roughness));
    REQUIRE(city.has(Channel::Metallicity));
    REQUIRE_FALSE(city.has(Channel::Irradiance));

    REQUIRE(expected_mask(Profile::Wild).none());
}

TEST_CASE("validate_record accepts a well-formed record") {
    REQUIRE(validate_record(make_valid_record()).empty());
}

TEST_CASE("validate_record flags specific defects") {
    SECTION("rgb out of range") {
        auto r = make_valid_record();
        r.rgb.data.at(0, 0, 0) = 1.5f;
        auto rep = validate_record(r);
        REQUIRE(rep.size() == 1);
        REQUIRE(rep[0].find("rgb values outside [0,1]") != std::string::npos);
    }
    SECTION("profile/mask mismatch") {
        auto r = make_valid_record();
        r.intrinsics.mask.set(Channel::Roughness);
        auto rep = validate_record(r);
        bool found = false;
        for (auto& s : rep) found = found || s.find("profile/mask mismatch") != std::string::npos;
        REQUIRE(found);
    }
    SECTION("non-unit normal") {
        auto r = make_valid_record();
        r.intrinsics.normal.at(0, 0, 0) = 0.5f;
        auto rep = validate_record(r);
        bool found = false;
        for (auto& s : rep) found = found || s.find("non-unit") != std::string::npos;
        REQUIRE(found);
    }
    SECTION("negative irradiance") {
        auto r = make_valid_record();
        r.intrinsics.irradiance.at(0, 0, 0) = -0.1f;
        auto rep = validate_record(r);
        REQUIRE(rep.size() == 1);
        REQUIRE(rep[0].find("irradiance has negative") != std::string::npos);
    }
    SECTION("absent channel must be zero") {
        auto r = make_valid_record();
        r.intrinsics.roughness.at(0, 0, 0) = 0.2f;
        auto rep = validate_record(r);
        REQUIRE(rep.size() == 1);
        REQUIRE(rep[0].find("absent per mask but non-zero") != std::string::npos);
    }
    SECTION("empty caption on annotated profile") {
        auto r = make_valid_record();
        r.caption.text.clear();
        auto rep = validate_record(r);
        REQUIRE(rep.size() == 1);
        REQUIRE(rep[0].find("caption empty") != std::string::npos);
    }
    SECTION("too small") {
        auto r = make_valid_record();
        r.rgb.data = TensorF(4, 4, 3, 0.5f);
        auto rep = validate_record(r);
        bool found = false;
        for (auto& s : rep) found = found || s.find("smaller than 8x8") != std::string::npos;
        REQUIRE(found);
    }
}

TEST_CASE("save/load record round trip") {
    auto r = make_valid_record(12, 10);
    fs::path dir = fs::temp_directory_path() / "core_test" / "rec";
    save_record(r, dir);
    DatasetRecord q = load_record(dir);
    REQUIRE(q.id == r.id);
    REQUIRE(q.profile == r.profile);
    REQUIRE(q.caption.text == r.caption.text);
    REQUIRE(q.intrinsics.mask == r.intrinsics.mask);
    REQUIRE(max_abs_diff(q.rgb.data, r.rgb.data) == 0.0);
    REQUIRE(max_abs_diff(q.intrinsics.albedo, r.intrinsics.albedo) == 0.0);
    REQUIRE(max_abs_diff(q.intrinsics.irradiance, r.intrinsics.irradiance) == 0.0);
    // normals pass through the (n+1)/2 encoding, so allow float rounding
    REQUIRE(max_abs_diff(q.intrinsics.normal, r.intrinsics.normal) < 1e-5);
    REQUIRE(validate_record(q).empty());
}

TEST_CASE("channel helpers") {
    REQUIRE(channel_planes(Channel::Roughness) == 1);
    REQUIRE(channel_planes(Channel::Normal) == 3);
    REQUIRE(channel_from_name("albedo") == Channel::Albedo);
    REQUIRE_FALSE(channel_from_name("specular").has_value());
    REQUIRE(std::string(channel_name(Channel::Irradiance)) == "irradiance");
}
