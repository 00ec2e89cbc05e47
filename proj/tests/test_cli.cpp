#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    std::string cmd = std::string(OURO_BIN) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path work() {
    static fs::path p = [] {
        fs::path d = fs::temp_directory_path() / "cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return p;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_tiny_config(const fs::path& p) {
    nlohmann::json j;
    j["base_width"] = 4;
    j["depth"] = 2;
    j["embed_dim"] = 8;
    j["caption_buckets"] = 16;
    j["checkpoint_every"] = 0;
    std::ofstream f(p);
    f << j.dump(2);
}

}  // namespace

TEST_CASE("usage and argument errors exit with code 1") {
    REQUIRE(run("--help") == 0);
    REQUIRE(run("--no-such-flag") == 1);
    REQUIRE(run("infer --ckpt x") == 1);  // missing required --input/--out
}

TEST_CASE("runtime failures exit with code 2") {
    REQUIRE(run("infer --ckpt " + q(work() / "missing_ckpt") + " --input " + q(work() / "missing.png") + " --out " +
                q(work() / "o")) == 2);
}

TEST_CASE("gen-data produces loadable records and provenance") {
    fs::path data = work() / "data";
    REQUIRE(run("--seed 3 gen-data --profile indoor-like --count 2 --res 16 --out " + q(data)) == 0);
    REQUIRE(fs::exists(data / "train" / "indoor-like_00000" / "meta.json"));
    REQUIRE(fs::exists(data / "train" / "indoor-like_00000" / "rgb.otns"));
    REQUIRE(fs::exists(data / "train" / "manifest.json"));
    REQUIRE(fs::exists(data / "train" / "provenance.json"));
    auto prov = nlohmann::json::parse(read_file(data / "train" / "provenance.json"));
    REQUIRE(prov.at("command") == "gen-data");
    REQUIRE(prov.at("seed").get<std::uint64_t>() == 3);
}

TEST_CASE("training rejects unknown config keys") {
    fs::path cfgp = work() / "bad.json";
    nlohmann::json j;
    j["base_width"] = 4;
    j["learning_rate"] = 0.1;  // not a recognized key
    std::ofstream(cfgp) << j.dump();
    fs::path data = work() / "data" / "train";
    REQUIRE(run("train --direction rgb2x --config " + q(cfgp) + " --data " + q(data) + " --out " +
                q(work() / "ck_bad") + " --steps 1") == 1);
}

TEST_CASE("train, infer and eval round trip") {
    fs::path data = work() / "data" / "train";
    fs::path cfgp = work() / "tiny.json";
    write_tiny_config(cfgp);

    fs::path ck = work() / "ck_inv";
    REQUIRE(run("--seed 5 train --direction rgb2x --config " + q(cfgp) + " --data " + q(data) + " --out " + q(ck) +
                " --steps 2") == 0);
    REQUIRE(fs::exists(ck / "final" / "meta.json"));
    REQUIRE(fs::exists(ck / "train_log.jsonl"));
    REQUIRE(fs::exists(ck / "provenance.json"));

    // inference from a record directory writes a record-shaped prediction
    fs::path pred = work() / "pred";
    REQUIRE(run("--seed 9 infer --ckpt " + q(ck / "final") + " --input " + q(data / "indoor-like_00000") +
                " --tasks n,a,E --out " + q(pred)) == 0);
    fs::path rec = pred / "indoor-like_00000";
    REQUIRE(fs::exists(rec / "meta.json"));
    REQUIRE(fs::exists(rec / "normal.otns"));
    REQUIRE(fs::exists(rec / "albedo.otns"));

    // same seed reproduces the prediction bit for bit
    fs::path pred2 = work() / "pred_again";
    REQUIRE(run("--seed 9 infer --ckpt " + q(ck / "final") + " --input " + q(data / "indoor-like_00000") +
                " --tasks n,a,E --out " + q(pred2)) == 0);
    REQUIRE(read_file(rec / "albedo.otns") == read_file(pred2 / "indoor-like_00000" / "albedo.otns"));

    // a different seed changes it
    fs::path pred3 = work() / "pred_seed";
    REQUIRE(run("--seed 10 infer --ckpt " + q(ck / "final") + " --input " + q(data / "indoor-like_00000") +
                " --tasks n,a,E --out " + q(pred3)) == 0);
    REQUIRE(read_file(rec / "albedo.otns") != read_file(pred3 / "indoor-like_00000" / "albedo.otns"));

    // eval the ground truth against itself: capped scores
    fs::path rpt = work() / "report.json";
    REQUIRE(run("eval --pred " + q(data) + " --gt " + q(data) + " --channels n,a,E,rgb --out " + q(rpt)) == 0);
    auto j = nlohmann::json::parse(read_file(rpt));
    REQUIRE(j.at("channels").at("rgb").at("metrics").at("psnr").get<double>() == 99.0);
    REQUIRE(j.at("channels").at("rgb").at("metrics").at("lpips") == "unavailable");

    REQUIRE(run("report " + q(rpt)) == 0);
}

TEST_CASE("eval refuses unpaired predictions without the override") {
    fs::path data = work() / "data" / "train";
    fs::path partial = work() / "partial";
    fs::create_directories(partial / "other_id");
    fs::copy(data / "indoor-like_00000", partial / "other_id", fs::copy_options::recursive |
                                                                   fs::copy_options::overwrite_existing);
    REQUIRE(run("eval --pred " + q(partial) + " --gt " + q(data) + " --channels rgb") == 1);
    REQUIRE(run("eval --pred " + q(partial) + " --gt " + q(data) + " --channels rgb --allow-unpaired") == 0);
}
