// Integration tests driving the actual CLI binary.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "ddic/io.hpp"

using namespace ddic;
namespace fs = std::filesystem;

#ifndef DDIC_CLI_PATH
#error "DDIC_CLI_PATH must be defined by the build"
#endif

namespace {

const fs::path cli = DDIC_CLI_PATH;

int run(const std::string& args) {
    const std::string cmd = cli.string() + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

json base_config(const fs::path& root) {
    json cfg;
    cfg["seed"] = 5;
    cfg["phantom_gen"] = {{"count", 8}, {"test_count", 3}, {"size", 32}};
    cfg["train"] = {{"images_dir", (root / "ph/a_train").string()},
                    {"schedule", {{"steps", 15}, {"offset", 0.008}}},
                    {"arch",
                     {{"base_channels", 8}, {"channel_mults", {1, 2}}, {"time_dim", 16}, {"groups", 4}}},
                    {"batch_size", 2},
                    {"learning_rate", 1e-3},
                    {"steps", 10},
                    {"checkpoint_interval", 4}};
    cfg["translate"] = {{"inputs", (root / "ph/a_test").string()},
                        {"source_checkpoint", (root / "ck_a/checkpoint_10.ddck").string()},
                        {"target_checkpoint", (root / "ck_b/checkpoint_10.ddck").string()},
                        {"method", "ddic"},
                        {"lr", 2.0},
                        {"median_kernel", 3}};
    cfg["evaluate"] = {{"source", (root / "ph/a_test").string()},
                       {"methods", {{"ddic", (root / "t_ddic").string()}}},
                       {"rois", (root / "ph/rois.json").string()}};
    return cfg;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_CASE("cli end-to-end pipeline with determinism and reduction properties") {
    TempDir tmp("ddic_cli_e2e");
    const fs::path root = tmp.path;
    const fs::path cfg_path = root / "config.json";
    json cfg = base_config(root);
    write_json_file(cfg_path, cfg);
    const std::string C = " --config " + cfg_path.string();

    REQUIRE(run("phantom-gen" + C + " --out " + (root / "ph").string() + " --jobs 2") == 0);
    CHECK(fs::exists(root / "ph/rois.json"));
    CHECK(fs::exists(root / "ph/manifest.json"));

    // phantom-gen rerun without --force refuses and preserves outputs
    CHECK(run("phantom-gen" + C + " --out " + (root / "ph").string()) != 0);

    REQUIRE(run("train" + C + " --out " + (root / "ck_a").string()) == 0);
    json cfg_b = cfg;
    cfg_b["train"]["images_dir"] = (root / "ph/b_train").string();
    write_json_file(root / "config_b.json", cfg_b);
    REQUIRE(run("train --config " + (root / "config_b.json").string() + " --out " +
                (root / "ck_b").string()) == 0);

    // translate determinism: rerun is bit-identical regardless of --jobs
    REQUIRE(run("translate" + C + " --out " + (root / "t_ddic").string() + " --jobs 2") == 0);
    REQUIRE(run("translate" + C + " --out " + (root / "t_ddic2").string() + " --jobs 1") == 0);
    for (const auto& e : fs::directory_iterator(root / "t_ddic")) {
        if (e.path().filename() == "manifest.json") continue;
        CHECK(file_bytes(e.path()) == file_bytes(root / "t_ddic2" / e.path().filename()));
    }
    const json m1 = read_json_file(root / "t_ddic/manifest.json");
    const json m2 = read_json_file(root / "t_ddic2/manifest.json");
    CHECK(m1.at("outputs") == m2.at("outputs"));
    CHECK(m1.at("inputs") == m2.at("inputs"));

    // ddic with lr 0 bit-equals ddib
    REQUIRE(run("translate" + C + " --out " + (root / "t_lr0").string() +
                " --method ddic --lr 0") == 0);
    REQUIRE(run("translate" + C + " --out " + (root / "t_ddib").string() + " --method ddib") == 0);
    for (const auto& e : fs::directory_iterator(root / "t_lr0")) {
        if (e.path().extension() != ".pgm") continue;
        CHECK(file_bytes(e.path()) == file_bytes(root / "t_ddib" / e.path().filename()));
    }

    // evaluate produces a consistent report
    REQUIRE(run("evaluate" + C + " --out " + (root / "ev").string()) == 0);
    const json report = read_json_file(root / "ev/report.json");
    CHECK(report.at("per_image").size() == 3);
    CHECK(report.at("set_level").contains("fid"));
    CHECK(fs::exists(root / "ev/report.csv"));
    CHECK(fs::exists(root / "ev/mi.svg"));

    // self-comparison: translated dir == source dir
    json cfg_self = cfg;
    cfg_self["evaluate"]["methods"] = {{"self", (root / "ph/a_test").string()}};
    write_json_file(root / "config_self.json", cfg_self);
    REQUIRE(run("evaluate --config " + (root / "config_self.json").string() + " --out " +
                (root / "ev_self").string()) == 0);
    const json self_report = read_json_file(root / "ev_self/report.json");
    for (const auto& row : self_report.at("per_image"))
        CHECK(row.at("psnr") == json("inf"));
    CHECK(self_report.at("set_level").at("fid").at("self").get<double>() < 1e-6);
}

TEST_CASE("cli train resume reproduces the uninterrupted run bit-exactly") {
    TempDir tmp("ddic_cli_resume");
    const fs::path root = tmp.path;
    json cfg = base_config(root);
    cfg["phantom_gen"]["count"] = 4;
    cfg["phantom_gen"]["test_count"] = 0;
    const fs::path cfg_path = root / "config.json";
    write_json_file(cfg_path, cfg);
    const std::string C = " --config " + cfg_path.string();
    REQUIRE(run("phantom-gen" + C + " --out " + (root / "ph").string()) == 0);

    // full run to step 10
    REQUIRE(run("train" + C + " --out " + (root / "full").string()) == 0);

    // interrupted: run to step 4 (checkpoint), then resume to 10
    json cfg_half = cfg;
    cfg_half["train"]["steps"] = 4;
    write_json_file(root / "config_half.json", cfg_half);
    REQUIRE(run("train --config " + (root / "config_half.json").string() + " --out " +
                (root / "part").string()) == 0);
    REQUIRE(run("train" + C + " --out " + (root / "part").string() + " --resume") == 0);

    CHECK(file_bytes(root / "full/checkpoint_10.ddck") ==
          file_bytes(root / "part/checkpoint_10.ddck"));
}

TEST_CASE("cli rejects invalid configurations before doing work") {
    TempDir tmp("ddic_cli_invalid");
    const fs::path root = tmp.path;

    SUBCASE("unknown config key") {
        json cfg = base_config(root);
        cfg["train"]["unexpected_key"] = 1;
        write_json_file(root / "c.json", cfg);
        CHECK(run("train --config " + (root / "c.json").string() + " --out " +
                  (root / "o").string()) != 0);
        CHECK(!fs::exists(root / "o/checkpoint_10.ddck"));
    }
    SUBCASE("invalid schedule section") {
        json cfg = base_config(root);
        cfg["train"]["schedule"]["steps"] = 0;
        write_json_file(root / "c.json", cfg);
        CHECK(run("train --config " + (root / "c.json").string() + " --out " +
                  (root / "o").string()) != 0);
    }
    SUBCASE("missing annotations file") {
        json cfg;
        cfg["preprocess"] = {{"annotations", (root / "none.json").string()}};
        write_json_file(root / "c.json", cfg);
        CHECK(run("preprocess --config " + (root / "c.json").string() + " --out " +
                  (root / "o").string()) != 0);
    }
}

TEST_CASE("cli preprocess on a small annotated dataset") {
    TempDir tmp("ddic_cli_pre");
    const fs::path root = tmp.path;
    fs::create_directories(root / "data");

    // two annotated images, one without HC (excluded), plus masks
    for (int i = 0; i < 3; ++i) {
        ImageGrid img(40, 40, 0.0);
        for (int r = 10; r < 30; ++r)
            for (int c = 10; c < 30; ++c) img.at(r, c) = 0.8;
        img.range_hi = 1.0;
        write_pgm(root / "data" / ("img" + std::to_string(i) + ".pgm"), img, 255, 0.0, 1.0);
        ImageGrid mask(40, 40, 1.0);
        write_pgm(root / "data" / ("mask" + std::to_string(i) + ".pgm"), mask, 255, 0.0, 1.0);
    }
    json ann;
    ann["images"] = json::array();
    for (int i = 0; i < 3; ++i) {
        json rec{{"file", "img" + std::to_string(i) + ".pgm"},
                 {"pixel_size_mm", 0.5},
                 {"center", {19.5, 19.5}},
                 {"angle_deg", 0.0},
                 {"mask", "mask" + std::to_string(i) + ".pgm"}};
        if (i != 1) rec["hc_mm"] = 200.0 + i;
        ann["images"].push_back(rec);
    }
    write_json_file(root / "data/annotations.json", ann);

    json cfg;
    cfg["seed"] = 3;
    cfg["preprocess"] = {{"annotations", (root / "data/annotations.json").string()},
                         {"hc_range", {170.0, 350.0}},
                         {"output_size", {32, 32}},
                         {"pixel_size_mm", 1.0},
                         {"apply_mask", true},
                         {"train_fraction", 0.5}};
    write_json_file(root / "c.json", cfg);
    REQUIRE(run("preprocess --config " + (root / "c.json").string() + " --out " +
                (root / "o").string()) == 0);
    const json manifest = read_json_file(root / "o/manifest.json");
    CHECK(manifest.at("resolved_config").at("kept").get<int>() == 2);
    CHECK(manifest.at("resolved_config").at("excluded_missing_hc").get<int>() == 1);
    CHECK(fs::exists(root / "o/images/img0.pgm"));
    CHECK(fs::exists(root / "o/images/img2.pgm"));
    CHECK(!fs::exists(root / "o/images/img1.pgm"));
    // manifest lists every input image it produced
    CHECK(manifest.at("outputs").size() == 2);
}
