// veloform: velocity-field shape interpolation between point clouds.
//
// Subcommands: gen-data, train, interpolate, evaluate, check-grads.
// Exit codes: 0 success, 1 usage error, 2 numerical failure.

#include "veloform/config.hpp"
#include "veloform/gradcheck.hpp"
#include "veloform/inference.hpp"
#include "veloform/io.hpp"
#include "veloform/synthdata.hpp"
#include "veloform/training.hpp"
#include "veloform/util.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace veloform;

namespace {

// Every run writes one manifest beside its outputs: the resolved settings,
// input digests, seed, and wall-clock timing.
class RunManifest {
public:
    RunManifest(std::string command, const std::string& out_dir)
        : out_dir_(out_dir), start_(std::chrono::steady_clock::now()) {
        j_["command"] = std::move(command);
        j_["version"] = kToolVersion;
        j_["inputs"] = json::object();
    }
    void input(const std::string& path) { j_["inputs"][path] = file_digest(path); }
    json& data() { return j_; }
    void write() {
        j_["wall_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        atomic_write_file((fs::path(out_dir_) / "run_manifest.json").string(), j_.dump(2) + "\n");
    }

private:
    std::string out_dir_;
    json j_;
    std::chrono::steady_clock::time_point start_;
};

Vec3 parse_vec3(const std::string& csv) {
    Vec3 v;
    if (std::sscanf(csv.c_str(), "%lf,%lf,%lf", &v.x(), &v.y(), &v.z()) != 3)
        throw std::invalid_argument("expected three comma-separated numbers, got: " + csv);
    return v;
}

std::vector<double> parse_times(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) out.push_back(std::stod(tok));
    }
    if (out.empty()) throw std::invalid_argument("no time values in: " + csv);
    return out;
}

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw std::invalid_argument("input file not found: " + path);
}

std::string frame_name(const char* stem, int index, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%04d.%s", stem, index, ext);
    return buf;
}

// ---- scene construction shared by gen-data and evaluate ----------------------

struct SceneFlags {
    std::string name;
    std::string v = "0.4,0,0";
    std::string omega = "0,0,1";
    double rate = 0.5;
    double radius = 0.35;
    double amplitude = 0.8;
};

void add_scene_flags(CLI::App* cmd, SceneFlags& flags, bool required) {
    auto* opt = cmd->add_option("--scene", flags.name,
                                "analytic scene: translation|rotation|scaling|bending");
    if (required) opt->required();
    cmd->add_option("--v", flags.v, "translation velocity x,y,z");
    cmd->add_option("--omega", flags.omega, "rotation angular velocity x,y,z");
    cmd->add_option("--rate", flags.rate, "scaling rate k");
    cmd->add_option("--radius", flags.radius, "base radius");
    cmd->add_option("--amplitude", flags.amplitude, "bending twist amplitude");
}

AnalyticScene build_scene(const SceneFlags& flags) {
    if (flags.name == "translation")
        return gen_translation_scene(parse_vec3(flags.v), flags.radius);
    if (flags.name == "rotation") {
        SphereWithBump shape;
        shape.radius = flags.radius;
        return gen_rotation_scene(parse_vec3(flags.omega), shape);
    }
    if (flags.name == "scaling") return gen_scaling_scene(flags.rate, flags.radius);
    if (flags.name == "bending") return gen_bending_scene(flags.amplitude);
    throw std::invalid_argument("unknown scene: " + flags.name +
                                " (expected translation|rotation|scaling|bending)");
}

// ---- gen-data -----------------------------------------------------------------

struct GenDataArgs {
    SceneFlags scene;
    int points = 5000;
    int matches = 500;
    double noise = 0.0;
    double drop = 0.0;
    std::uint64_t seed = 0;
    std::string out = ".";
};

int cmd_gen_data(const GenDataArgs& a) {
    fs::create_directories(a.out);
    RunManifest manifest("gen-data", a.out);
    const AnalyticScene scene = build_scene(a.scene);
    const CorrespondencePair pair = make_pair(scene, a.points, a.matches, a.noise, a.drop, a.seed);

    const fs::path out(a.out);
    save_point_cloud_ply((out / "source.ply").string(), pair.source);
    save_point_cloud_ply((out / "target.ply").string(), pair.target);
    save_matches((out / "matches.txt").string(), pair.matches);

    json pm;
    pm["source"] = "source.ply";
    pm["target"] = "target.ply";
    pm["matches"] = "matches.txt";
    pm["frame_0"] = 0;
    pm["frame_1"] = 1;
    pm["scene"] = scene.descriptor;
    pm["seed"] = a.seed;
    pm["points"] = a.points;
    pm["requested_matches"] = a.matches;
    pm["noise_sigma"] = a.noise;
    pm["drop_fraction"] = a.drop;
    atomic_write_file((out / "pair_manifest.json").string(), pm.dump(2) + "\n");

    manifest.data()["seed"] = a.seed;
    manifest.data()["scene"] = scene.descriptor;
    manifest.data()["outputs"] = {
        {"source.ply", file_digest((out / "source.ply").string())},
        {"target.ply", file_digest((out / "target.ply").string())},
        {"matches.txt", file_digest((out / "matches.txt").string())}};
    manifest.write();
    return 0;
}

// ---- train ----------------------------------------------------------------------

struct TrainArgs {
    std::string config_path;
    std::vector<std::string> pair_specs;  // SRC,TGT,MATCHES
    std::vector<std::string> data_manifests;
    std::vector<std::string> overrides;  // key=value
    std::string out;
    bool resume = false;
};

PairDataset load_dataset(const TrainArgs& a, const TrainConfig& cfg, RunManifest& manifest) {
    struct RawPair {
        std::string src, tgt, matches;
    };
    std::vector<RawPair> raw;
    for (const auto& spec : a.pair_specs) {
        RawPair rp;
        std::stringstream ss(spec);
        std::getline(ss, rp.src, ',');
        std::getline(ss, rp.tgt, ',');
        std::getline(ss, rp.matches, ',');
        if (rp.src.empty() || rp.tgt.empty())
            throw std::invalid_argument("--pair expects SRC,TGT[,MATCHES]: " + spec);
        raw.push_back(rp);
    }
    for (const auto& mpath : a.data_manifests) {
        require_file(mpath);
        manifest.input(mpath);
        const json pm = json::parse(read_text_file(mpath));
        const fs::path base = fs::path(mpath).parent_path();
        raw.push_back({(base / pm.at("source").get<std::string>()).string(),
                       (base / pm.at("target").get<std::string>()).string(),
                       (base / pm.at("matches").get<std::string>()).string()});
    }
    if (raw.empty()) throw std::invalid_argument("no training pairs; pass --pair or --data");

    // frame ids by first appearance of each distinct cloud path
    std::vector<std::string> frames;
    auto id_of = [&](const std::string& path) {
        for (std::size_t i = 0; i < frames.size(); ++i)
            if (frames[i] == path) return static_cast<int>(i);
        frames.push_back(path);
        return static_cast<int>(frames.size()) - 1;
    };

    PairDataset ds;
    std::map<std::string, PointCloud> cache;
    auto load_cached = [&](const std::string& path) {
        auto it = cache.find(path);
        if (it != cache.end()) return it->second;
        require_file(path);
        manifest.input(path);
        PointCloud c = load_point_cloud(path);
        cache[path] = c;
        return c;
    };
    for (const auto& rp : raw) {
        CorrespondencePair pair;
        pair.source = load_cached(rp.src);
        pair.source.frame_id = id_of(rp.src);
        pair.target = load_cached(rp.tgt);
        pair.target.frame_id = id_of(rp.tgt);
        if (!rp.matches.empty()) {
            if (!fs::exists(rp.matches) && cfg.weights.lambda_m > 0.0)
                throw std::invalid_argument("correspondence file not found: " + rp.matches);
            if (fs::exists(rp.matches)) {
                manifest.input(rp.matches);
                pair.matches = load_matches(rp.matches);
            }
        }
        if (pair.matches.empty()) {
            if (cfg.weights.lambda_m > 0.0)
                throw std::invalid_argument(
                    "pair has no correspondences (set lambda_m = 0 to train unsupervised): " +
                    rp.src);
            pair.unsupervised = true;
        }
        ds.pairs.push_back(std::move(pair));
    }

    // one shared normalization over every cloud
    std::vector<PointCloud> clouds;
    for (auto& p : ds.pairs) {
        clouds.push_back(p.source);
        clouds.push_back(p.target);
    }
    auto [normed, tf] = normalize_to_domain(clouds, cfg.domain);
    for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
        ds.pairs[i].source = normed[2 * i];
        ds.pairs[i].target = normed[2 * i + 1];
    }
    ds.normalization = tf;
    ds.sequence = true;
    for (const auto& p : ds.pairs)
        if (p.target.frame_id != p.source.frame_id + 1) ds.sequence = false;
    for (auto& p : ds.pairs) p.validate();
    return ds;
}

int cmd_train(const TrainArgs& a) {
    fs::create_directories(a.out);
    RunManifest manifest("train", a.out);
    const std::string ckpt = (fs::path(a.out) / "checkpoint_latest.vfc").string();

    // A resumed run continues under the checkpoint's config; only --set
    // overrides apply on top (e.g. to extend the step budget).
    TrainConfig cfg;
    TrainState state;
    if (a.resume) {
        if (!a.config_path.empty())
            throw std::invalid_argument("--config cannot be combined with --resume; use --set");
        require_file(ckpt);
        state = TrainState::load(ckpt);
        cfg = state.config;
    } else if (!a.config_path.empty()) {
        require_file(a.config_path);
        manifest.input(a.config_path);
        cfg = load_train_config(a.config_path);
    }
    for (const auto& kv : a.overrides) {  // flags win over the config file
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects key=value, got: " + kv);
        apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();

    PairDataset ds = load_dataset(a, cfg, manifest);

    std::ofstream log((fs::path(a.out) / "train_log.jsonl").string(),
                      a.resume ? std::ios::app : std::ios::trunc);
    StepLogger logger = [&](std::int64_t step, int pair_id, const LossBreakdown& b) {
        json rec = {{"step", step},        {"pair_id", pair_id}, {"L_i", b.li},
                    {"L_m", b.lm},         {"L_s", b.ls},        {"L_v", b.lv},
                    {"L_st", b.lst},       {"L_d", b.ld},        {"L_n", b.ln},
                    {"L_recon", b.lrecon}, {"total", b.total}};
        log << rec.dump() << "\n";
    };

    if (a.resume) {
        state.config = cfg;
        state = train_continue(std::move(state), ds, a.out, logger);
    } else {
        state = train(ds, cfg, a.out, logger);
    }
    state.save((fs::path(a.out) / "model.vfc").string(), "float64");

    manifest.data()["seed"] = cfg.seed;
    manifest.data()["config"] = to_json(cfg);
    manifest.data()["steps"] = state.step;
    manifest.data()["normalization"] = {
        {"scale", state.normalization.scale},
        {"translation",
         {state.normalization.translation.x(), state.normalization.translation.y(),
          state.normalization.translation.z()}}};
    manifest.write();
    return 0;
}

// ---- interpolate ------------------------------------------------------------------

struct InterpolateArgs {
    std::string checkpoint;
    int pair_id = 0;
    int frames = 0;
    std::string times;
    int resolution = 96;
    bool extrapolate = false;
    std::string external_cloud;
    std::string out;
    bool normalized = false;
    std::string integrator = "rk4";
    int substeps = 16;
};

int cmd_interpolate(const InterpolateArgs& a) {
    fs::create_directories(a.out);
    RunManifest manifest("interpolate", a.out);
    require_file(a.checkpoint);
    manifest.input(a.checkpoint);
    const TrainState state = TrainState::load(a.checkpoint);

    TimeGrid grid;
    grid.extrapolation = a.extrapolate;
    if (!a.times.empty()) {
        grid.values = parse_times(a.times);
    } else {
        grid.values = TimeGrid::uniform(a.frames > 0 ? a.frames : 11).values;
    }
    grid.validate();

    IntegratorConfig integ;
    integ.scheme =
        a.integrator == "euler" ? IntegratorConfig::Scheme::Euler : IntegratorConfig::Scheme::Rk4;
    integ.substeps_per_unit = a.substeps;
    integ.validate();

    const SimilarityTransform to_world = state.normalization.inverse();
    const bool world = !a.normalized;

    json sidecar;
    sidecar["grid"] = grid.values;
    sidecar["pair_id"] = a.pair_id;
    sidecar["resolution"] = a.resolution;
    sidecar["coordinates"] = world ? "world" : "normalized";

    std::vector<double> areas;
    const auto meshes = interpolate_sequence(state, a.pair_id, grid, a.resolution);
    for (std::size_t i = 0; i < meshes.size(); ++i) {
        TriMesh mesh = meshes[i];
        areas.push_back(surface_area(mesh));  // normalized-domain units
        if (world) mesh.vertices = to_world.apply(mesh.vertices);
        save_mesh_obj((fs::path(a.out) / frame_name("frame", static_cast<int>(i), "obj")).string(),
                      mesh);
    }
    sidecar["areas"] = areas;
    if (areas.size() >= 2) sidecar["sa_sigma"] = surface_area_std(areas);

    if (!a.external_cloud.empty()) {
        require_file(a.external_cloud);
        manifest.input(a.external_cloud);
        PointCloud external = load_point_cloud(a.external_cloud);
        if (world) external.points = state.normalization.apply(external.points);
        const UpsampleResult up = upsample_external_points(state, a.pair_id, external, grid, integ);
        for (std::size_t i = 0; i < up.frames.size(); ++i) {
            PointCloud frame = up.frames[i];
            if (world) frame.points = to_world.apply(frame.points);
            save_point_cloud_ply(
                (fs::path(a.out) / frame_name("cloud", static_cast<int>(i), "ply")).string(),
                frame);
        }
        sidecar["external_far_outside_points"] = up.far_outside_points;
    }

    atomic_write_file((fs::path(a.out) / "frames.json").string(), sidecar.dump(2) + "\n");
    manifest.data()["sidecar"] = sidecar;
    manifest.write();
    return 0;
}

// ---- evaluate ------------------------------------------------------------------------

struct EvaluateArgs {
    std::string pred_dir;
    std::string gt_dir;
    SceneFlags scene;
    std::string out;
    int resolution = 96;
};

std::vector<std::string> glob_frames(const std::string& dir, const char* stem, const char* ext) {
    std::vector<std::string> out;
    for (int i = 0;; ++i) {
        const fs::path p = fs::path(dir) / frame_name(stem, i, ext);
        if (!fs::exists(p)) break;
        out.push_back(p.string());
    }
    return out;
}

int cmd_evaluate(const EvaluateArgs& a) {
    fs::create_directories(a.out);
    RunManifest manifest("evaluate", a.out);

    const auto pred_meshes = glob_frames(a.pred_dir, "frame", "obj");
    if (pred_meshes.empty())
        throw std::invalid_argument("no frame_####.obj files under " + a.pred_dir);

    // ground truth: either a directory of frames or an analytic scene
    std::vector<TriMesh> gt;
    if (!a.gt_dir.empty()) {
        const auto gt_meshes = glob_frames(a.gt_dir, "frame", "obj");
        if (gt_meshes.size() != pred_meshes.size())
            throw std::invalid_argument(
                "frame-count mismatch: " + std::to_string(pred_meshes.size()) +
                " predictions vs " + std::to_string(gt_meshes.size()) + " ground-truth frames");
        for (const auto& p : gt_meshes) {
            manifest.input(p);
            gt.push_back(load_mesh_obj(p));
        }
    } else if (!a.scene.name.empty()) {
        const fs::path sidecar_path = fs::path(a.pred_dir) / "frames.json";
        require_file(sidecar_path.string());
        const json sidecar = json::parse(read_text_file(sidecar_path.string()));
        const std::vector<double> grid = sidecar.at("grid").get<std::vector<double>>();
        if (grid.size() != pred_meshes.size())
            throw std::invalid_argument("sidecar grid does not match the frame count");
        const AnalyticScene scene = build_scene(a.scene);
        for (double t : grid) gt.push_back(analytic_intermediate(scene, t, a.resolution));
    } else {
        throw std::invalid_argument("pass --gt-dir or --scene for ground truth");
    }

    json report;
    report["frames"] = pred_meshes.size();
    json per_frame = json::array();
    double cd_mean = 0.0, hd_mean = 0.0;
    std::vector<double> areas;
    for (std::size_t i = 0; i < pred_meshes.size(); ++i) {
        manifest.input(pred_meshes[i]);
        const TriMesh pred = load_mesh_obj(pred_meshes[i]);
        areas.push_back(surface_area(pred));
        PointCloud pc, gc;
        pc.points = pred.vertices;
        gc.points = gt[i].vertices;
        const double cd = chamfer_distance(pc, gc);
        const double hd = hausdorff_distance(pc, gc);
        cd_mean += cd;
        hd_mean += hd;
        per_frame.push_back({{"cd", cd}, {"hd", hd}, {"area", areas.back()}});
    }
    report["per_frame"] = per_frame;
    report["cd_mean"] = cd_mean / static_cast<double>(pred_meshes.size());
    report["hd_mean"] = hd_mean / static_cast<double>(pred_meshes.size());
    if (areas.size() >= 2) report["sa_sigma"] = surface_area_std(areas);

    // index-aligned clouds, when both sides provide them
    const auto pred_clouds = glob_frames(a.pred_dir, "cloud", "ply");
    const auto gt_clouds =
        a.gt_dir.empty() ? std::vector<std::string>{} : glob_frames(a.gt_dir, "cloud", "ply");
    if (!pred_clouds.empty() && pred_clouds.size() == gt_clouds.size()) {
        json prmse = json::array();
        for (std::size_t i = 0; i < pred_clouds.size(); ++i) {
            prmse.push_back(
                pointwise_rmse(load_point_cloud(pred_clouds[i]), load_point_cloud(gt_clouds[i])));
        }
        report["p_rmse"] = prmse;
    }

    atomic_write_file((fs::path(a.out) / "report.json").string(), report.dump(2) + "\n");
    std::cout << report.dump(2) << "\n";
    manifest.data()["report"] = report;
    manifest.write();
    return 0;
}

// ---- check-grads ----------------------------------------------------------------------

struct CheckGradsArgs {
    int probes = 100;
    std::uint64_t seed = 2024;
    std::string out;
};

int cmd_check_grads(const CheckGradsArgs& a) {
    GradCheckOptions opts;
    opts.probes = a.probes;
    opts.seed = a.seed;
    const GradCheckReport report = run_gradient_checks(opts);
    json jreport = json::array();
    for (const auto& e : report.entries) {
        std::printf("%-22s max_rel_err %.3e  tol %.0e  %s\n", e.name.c_str(), e.max_rel_err,
                    e.tolerance, e.pass ? "PASS" : "FAIL");
        jreport.push_back({{"name", e.name},
                           {"max_rel_err", e.max_rel_err},
                           {"tolerance", e.tolerance},
                           {"pass", e.pass}});
    }
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        RunManifest manifest("check-grads", a.out);
        manifest.data()["seed"] = a.seed;
        manifest.data()["probes"] = a.probes;
        manifest.data()["report"] = jreport;
        manifest.write();
        atomic_write_file((fs::path(a.out) / "report.json").string(), jreport.dump(2) + "\n");
    }
    return report.all_pass() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"velocity-field shape interpolation between point clouds"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate an analytic point-cloud pair");
    add_scene_flags(gen_cmd, gen.scene, true);
    gen_cmd->add_option("--points", gen.points, "points per cloud");
    gen_cmd->add_option("--matches", gen.matches, "ground-truth correspondences");
    gen_cmd->add_option("--noise", gen.noise, "tangential match noise sigma");
    gen_cmd->add_option("--drop", gen.drop, "fraction of matches to drop");
    gen_cmd->add_option("--seed", gen.seed, "root seed");
    gen_cmd->add_option("--out", gen.out, "output directory")->required();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "jointly optimize the fields and latents");
    train_cmd->add_option("--config", train_args.config_path, "key-value config file");
    train_cmd->add_option("--pair", train_args.pair_specs, "pair as SRC,TGT,MATCHES (repeatable)");
    train_cmd->add_option("--data", train_args.data_manifests,
                          "pair_manifest.json from gen-data (repeatable)");
    train_cmd->add_option("--set", train_args.overrides, "config override key=value (repeatable)");
    train_cmd->add_option("--out", train_args.out, "output directory")->required();
    train_cmd->add_flag("--resume", train_args.resume, "resume from checkpoint_latest.vfc");

    InterpolateArgs interp;
    auto* interp_cmd = app.add_subcommand("interpolate", "extract surfaces / advect clouds");
    interp_cmd->add_option("--checkpoint", interp.checkpoint, "trained model archive")->required();
    interp_cmd->add_option("--pair", interp.pair_id, "trained pair id");
    interp_cmd->add_option("--frames", interp.frames, "uniform frame count over [0,1]");
    interp_cmd->add_option("--times", interp.times, "explicit comma-separated time stamps");
    interp_cmd->add_option("--resolution", interp.resolution, "surface grid resolution");
    interp_cmd->add_flag("--extrapolate", interp.extrapolate, "allow stamps outside [0,1]");
    interp_cmd->add_option("--external-cloud", interp.external_cloud,
                           "advect this cloud through the grid");
    interp_cmd->add_option("--out", interp.out, "output directory")->required();
    interp_cmd->add_flag("--normalized", interp.normalized,
                         "write outputs in normalized coordinates");
    interp_cmd->add_option("--integrator", interp.integrator, "euler|rk4");
    interp_cmd->add_option("--substeps", interp.substeps, "integrator substeps per unit time");

    EvaluateArgs eval;
    auto* eval_cmd = app.add_subcommand("evaluate", "metrics report for interpolated frames");
    eval_cmd->add_option("--pred-dir", eval.pred_dir, "directory with frame_####.obj")->required();
    eval_cmd->add_option("--gt-dir", eval.gt_dir, "directory with ground-truth frames");
    add_scene_flags(eval_cmd, eval.scene, false);
    eval_cmd->add_option("--resolution", eval.resolution, "analytic ground-truth resolution");
    eval_cmd->add_option("--out", eval.out, "output directory")->required();

    CheckGradsArgs check;
    auto* check_cmd = app.add_subcommand("check-grads", "finite-difference verification suite");
    check_cmd->add_option("--probes", check.probes, "random probes per check");
    check_cmd->add_option("--seed", check.seed, "probe seed");
    check_cmd->add_option("--out", check.out, "optional report directory");

    try {
        app.parse(argc, argv);
        if (*gen_cmd) return cmd_gen_data(gen);
        if (*train_cmd) return cmd_train(train_args);
        if (*interp_cmd) return cmd_interpolate(interp);
        if (*eval_cmd) return cmd_evaluate(eval);
        if (*check_cmd) return cmd_check_grads(check);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
