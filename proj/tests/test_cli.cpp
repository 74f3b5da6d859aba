#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "veloform/geometry.hpp"
#include "veloform/io.hpp"
#include "veloform/util.hpp"

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace veloform;

namespace {

const std::string kBin = VELOFORM_BIN_PATH;

int run(const std::string& args) {
    const std::string cmd = kBin + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "veloform_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

}  // namespace

TEST_CASE("gen-data writes the pair files and is deterministic per seed") {
    const std::string out1 = scratch("gen1");
    const std::string out2 = scratch("gen2");
    const std::string flags =
        "gen-data --scene translation --v 0.3,0,0 --points 400 --matches 80 --seed 7 --out ";
    CHECK(run(flags + out1) == 0);
    CHECK(fs::exists(fs::path(out1) / "source.ply"));
    CHECK(fs::exists(fs::path(out1) / "target.ply"));
    CHECK(fs::exists(fs::path(out1) / "matches.txt"));
    CHECK(fs::exists(fs::path(out1) / "pair_manifest.json"));
    CHECK(fs::exists(fs::path(out1) / "run_manifest.json"));

    CHECK(run(flags + out2) == 0);
    for (const char* f : {"source.ply", "target.ply", "matches.txt"}) {
        CHECK(file_digest((fs::path(out1) / f).string()) ==
              file_digest((fs::path(out2) / f).string()));
    }
    const PointCloud src = load_point_cloud((fs::path(out1) / "source.ply").string());
    CHECK(src.size() == 400);
    CHECK(src.has_normals());
    CHECK(load_matches((fs::path(out1) / "matches.txt").string()).size() == 80);
}

TEST_CASE("gen-data usage errors") {
    const std::string out = scratch("gen_err");
    CHECK(run("gen-data --scene warp --out " + out) == 1);
    CHECK(run("gen-data --scene translation --points 100 --matches 9999 --out " + out) == 1);
    CHECK(run("gen-data --out " + out) == 1);  // missing required --scene
}

TEST_CASE("train/interpolate/evaluate pipeline" * doctest::timeout(900)) {
    const std::string data = scratch("pipe_data");
    const std::string runa = scratch("pipe_runa");
    const std::string runb = scratch("pipe_runb");
    const std::string interp = scratch("pipe_interp");
    const std::string eval = scratch("pipe_eval");

    REQUIRE(run("gen-data --scene translation --v 0.4,0,0 --points 800 --matches 200 --seed 3 "
                "--out " + data) == 0);

    const std::string train_flags =
        " --set hidden_layers=2 --set width=24 --set latent_dim=4 --set omega0=8"
        " --set steps_per_pair=120 --set lr_fields=1e-3 --set time_steps=3"
        " --set surface_batch=48 --set volume_batch=64 --set match_batch=24"
        " --set substeps=4 --set lambda_i=10 --set checkpoint_interval=60 --set seed=5";

    SUBCASE("bad config key is reported before training") {
        CHECK(run("train --data " + data + "/pair_manifest.json --set bogus_key=1 --out " + runa) ==
              1);
    }
    SUBCASE("missing correspondences stop an attended matching term") {
        const std::string empty = scratch("pipe_empty");
        write_text_file(empty + "/m.txt", "");
        CHECK(run("train --pair " + data + "/source.ply," + data + "/target.ply," + empty +
                  "/m.txt --out " + runa) == 1);
    }
    SUBCASE("training produces checkpoints, logs, and a deterministic resume") {
        REQUIRE(run("train --data " + data + "/pair_manifest.json" + train_flags + " --out " +
                    runa) == 0);
        CHECK(fs::exists(fs::path(runa) / "model.vfc"));
        CHECK(fs::exists(fs::path(runa) / "checkpoint_latest.vfc"));
        CHECK(fs::exists(fs::path(runa) / "train_log.jsonl"));
        // log records carry the full per-term breakdown
        std::istringstream log(read_text_file((fs::path(runa) / "train_log.jsonl").string()));
        std::string first;
        std::getline(log, first);
        const json rec = json::parse(first);
        for (const char* key : {"step", "pair_id", "L_i", "L_m", "L_s", "L_v", "L_st", "L_d",
                                "L_n", "L_recon", "total"})
            CHECK(rec.contains(key));

        // interrupted run + resume equals the uninterrupted run
        REQUIRE(run("train --data " + data + "/pair_manifest.json" + train_flags +
                    " --set steps_per_pair=60 --out " + runb) == 0);
        REQUIRE(run("train --data " + data + "/pair_manifest.json" + train_flags +
                    " --resume --out " + runb) == 0);
        CHECK(file_digest((fs::path(runa) / "model.vfc").string()) ==
              file_digest((fs::path(runb) / "model.vfc").string()));

        // interpolation: meshes + sidecar + advected external clouds
        REQUIRE(run("interpolate --checkpoint " + runa + "/model.vfc --times 0,0.5,1 "
                    "--resolution 48 --external-cloud " + data + "/source.ply --substeps 4 "
                    "--out " + interp) == 0);
        for (const char* f : {"frame_0000.obj", "frame_0001.obj", "frame_0002.obj",
                              "cloud_0000.ply", "cloud_0001.ply", "cloud_0002.ply", "frames.json"})
            CHECK(fs::exists(fs::path(interp) / f));
        const json sidecar = json::parse(read_text_file((fs::path(interp) / "frames.json").string()));
        CHECK(sidecar.at("grid").size() == 3);
        CHECK(sidecar.contains("sa_sigma"));

        // unknown pair id lists the known ones
        CHECK(run("interpolate --checkpoint " + runa + "/model.vfc --pair 9 --frames 2 "
                  "--resolution 48 --out " + scratch("pipe_badpair")) == 1);
        // extrapolated stamps need the flag
        CHECK(run("interpolate --checkpoint " + runa + "/model.vfc --times 0,1.2 "
                  "--resolution 48 --out " + scratch("pipe_noflag")) == 1);
        CHECK(run("interpolate --checkpoint " + runa + "/model.vfc --times 0,1.2 --extrapolate "
                  "--resolution 32 --out " + scratch("pipe_flag")) == 0);

        // evaluate against itself: all distances zero
        REQUIRE(run("evaluate --pred-dir " + interp + " --gt-dir " + interp + " --out " + eval) ==
                0);
        const json report = json::parse(read_text_file((fs::path(eval) / "report.json").string()));
        CHECK(report.at("cd_mean").get<double>() == 0.0);
        CHECK(report.at("hd_mean").get<double>() == 0.0);
        CHECK(report.contains("p_rmse"));  // clouds present on both sides

        // frame-count mismatch is a usage error
        const std::string fewer = scratch("pipe_fewer");
        fs::copy(fs::path(interp) / "frame_0000.obj", fs::path(fewer) / "frame_0000.obj");
        CHECK(run("evaluate --pred-dir " + interp + " --gt-dir " + fewer + " --out " +
                  scratch("pipe_eval2")) == 1);

        // analytic ground truth via the scene flags; P-RMSE absent without
        // aligned clouds
        const std::string eval3 = scratch("pipe_eval3");
        REQUIRE(run("evaluate --pred-dir " + interp + " --scene translation --v 0.4,0,0 "
                    "--resolution 48 --out " + eval3) == 0);
        const json r3 = json::parse(read_text_file((fs::path(eval3) / "report.json").string()));
        CHECK(!r3.contains("p_rmse"));
        CHECK(r3.at("per_frame").size() == 3);
    }
}

TEST_CASE("check-grads passes on the probe net" * doctest::timeout(600)) {
    const std::string out = scratch("grads");
    CHECK(run("check-grads --probes 20 --out " + out) == 0);
    const json report = json::parse(read_text_file((fs::path(out) / "report.json").string()));
    CHECK(report.size() >= 13);
    for (const auto& e : report) CHECK(e.at("pass").get<bool>());
}
