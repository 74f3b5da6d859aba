// Acceptance suite: property checks plus scaled synthetic end-to-end runs.
// Prints one PASS/FAIL line per criterion; the exit code is the number of
// failures.

#include "veloform/gradcheck.hpp"
#include "veloform/inference.hpp"
#include "veloform/io.hpp"
#include "veloform/losses.hpp"
#include "veloform/synthdata.hpp"
#include "veloform/training.hpp"

#include <chrono>
#include <cstdio>
#include <cstdarg>
#include <cstdlib>
#include <deque>
#include <string>
#include <vector>

using namespace veloform;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int criterion, bool pass, const std::string& what) {
    std::printf("%s  criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, what.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

std::vector<AnalyticScene> all_scenes() {
    std::vector<AnalyticScene> scenes;
    scenes.push_back(gen_translation_scene(Vec3(0.4, 0.0, 0.0), 0.35));
    scenes.push_back(gen_rotation_scene(Vec3(0.0, 0.0, 1.0)));
    scenes.push_back(gen_scaling_scene(0.5, 0.35));
    scenes.push_back(gen_bending_scene(0.8));
    return scenes;
}

// Field terms of a scene's closed-form phi*/V* evaluated on a batch.
void scene_terms(const AnalyticScene& scene, const MatX3& pts, double t, PhiTerms& phi,
                 VelocityTerms& vel) {
    const Eigen::Index n = pts.rows();
    phi.phi.resize(n);
    phi.grad.resize(n, 3);
    phi.dt.resize(n);
    vel.v.resize(n, 3);
    vel.jacobian.assign(static_cast<std::size_t>(n), Mat3::Zero());
    vel.laplacian = MatX3::Zero(n, 3);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3 x = pts.row(i).transpose();
        phi.phi[i] = scene.sdf(x, t);
        phi.grad.row(i) = scene.grad_sdf(x, t).transpose();
        phi.dt[i] = scene.dsdf_dt(x, t);
        vel.v.row(i) = scene.velocity(x, t).transpose();
        Mat3 J;  // central differences of the closed-form velocity
        for (int c = 0; c < 3; ++c) {
            Vec3 xp = x, xm = x;
            xp[c] += h;
            xm[c] -= h;
            J.col(c) = (scene.velocity(xp, t) - scene.velocity(xm, t)) / (2.0 * h);
        }
        vel.jacobian[static_cast<std::size_t>(i)] = J;
    }
}

// ---- criterion 1: analytic cancellation --------------------------------------

void criterion_1() {
    const auto t0 = Clock::now();
    double worst_residual = 0.0;
    double worst_loss = 0.0;
    Rng rng(11);
    for (const auto& scene : all_scenes()) {
        for (int i = 0; i < 10000; ++i) {
            const Vec3 x(rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9));
            const double t = rng.uniform(0.0, 1.0);
            const double r =
                scene.dsdf_dt(x, t) + scene.velocity(x, t).dot(scene.grad_sdf(x, t));
            worst_residual = std::max(worst_residual, std::abs(r));
        }
        // full level-set loss (lambda_l = 1) on surface-sample batches, where
        // the phi*R correction is exercised and must cancel against phi = 0
        LossWeights w;
        for (double t : {0.0, 0.37, 1.0}) {
            Rng srng(31);
            const PointCloud surf = scene.sample_surface(512, t, srng);
            PhiTerms pt;
            VelocityTerms vt;
            scene_terms(scene, surf.points, t, pt, vt);
            worst_loss = std::max(worst_loss, level_set_loss(pt, vt, w));
        }
    }
    const double dt = seconds_since(t0);
    const bool pass = worst_residual < 1e-9 && worst_loss < 1e-10 && dt < 10.0;
    report(1, pass,
           fmt("level-set residual %.2e (tol 1e-9), level_set_loss %.2e (tol 1e-10), %.1fs (<10s)",
               worst_residual, worst_loss, dt));
}

// ---- criterion 2: continuum-mechanics invariants ------------------------------

void criterion_2() {
    const auto t0 = Clock::now();
    Rng rng(13);
    const int n = 256;

    // rigid rotation: omega x x
    std::vector<Mat3> rot_jac(n);
    Mat3 W;
    W << 0, -1, 0, 1, 0, 0, 0, 0, 0;
    Eigen::VectorXd rot_div(n);
    for (int i = 0; i < n; ++i) {
        rot_jac[static_cast<std::size_t>(i)] = W;
        rot_div[i] = W.trace();
    }
    const double rot_lv = volume_loss(rot_div);
    const double rot_ld = distortion_loss(rate_of_deformation(rot_jac));

    // uniform scaling k = 0.5
    const double k = 0.5;
    std::vector<Mat3> scale_jac(n, k * Mat3::Identity());
    const double scale_lv = volume_loss(Eigen::VectorXd::Constant(n, 3.0 * k));
    const double scale_ld = distortion_loss(rate_of_deformation(scale_jac));

    // pure shear V = (y, 0, 0)
    Mat3 shear = Mat3::Zero();
    shear(0, 1) = 1.0;
    const double shear_ld = distortion_loss(rate_of_deformation({shear}));

    const double dt = seconds_since(t0);
    const bool pass = rot_lv < 1e-10 && rot_ld < 1e-10 && std::abs(scale_lv - 1.5) < 1e-9 &&
                      scale_ld < 1e-10 && std::abs(shear_ld - 0.25) < 1e-9 && dt < 5.0;
    report(2, pass,
           fmt("rotation lv=%.1e ld=%.1e; scaling lv=%.12f ld=%.1e; shear ld=%.12f; %.1fs",
               rot_lv, rot_ld, scale_lv, scale_ld, shear_ld, dt));
}

// ---- criterion 3: differential-operator health via check-grads ----------------

void criterion_3(const std::string& binary) {
    const auto t0 = Clock::now();
    const std::string cmd = binary + " check-grads --probes 100 > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    const int code = WEXITSTATUS(status);
    const double dt = seconds_since(t0);
    report(3, code == 0 && dt < 60.0,
           fmt("`check-grads --probes 100` exit %d, %.1fs (<60s)", code, dt));
}

// ---- training fixtures ---------------------------------------------------------

TrainConfig synthetic_config(int steps, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.fields = FieldConfig{3, 48, 8.0, 8};
    cfg.time_steps = 8;
    cfg.surface_batch = 128;
    cfg.volume_batch = 256;
    cfg.match_batch = 64;
    cfg.epochs = 1;
    cfg.steps_per_pair = steps;
    cfg.lr_fields = 1e-3;
    cfg.lr_latents = 1e-3;
    cfg.train_integrator = IntegratorConfig{IntegratorConfig::Scheme::Rk4, 8};
    cfg.weights.lambda_i = 50.0;
    cfg.weights.lambda_m = 50.0;
    cfg.weights.lambda_s = 0.01;
    cfg.weights.lambda_v = 5.0;
    cfg.weights.lambda_d = 1.0;
    cfg.weights.lambda_st = 1.0;
    cfg.surface_noise_sigma = 0.15;
    cfg.seed = seed;
    return cfg;
}

PairDataset scene_dataset(const AnalyticScene& scene, std::uint64_t seed) {
    auto pair = make_pair(scene, 5000, 500, 0.01, 0.3, seed);
    pair.source.frame_id = 0;
    pair.target.frame_id = 1;
    PairDataset ds;
    ds.pairs = {pair};
    return ds;
}

struct SmoothedCurveGuard {
    // moving average over window 50; non-increasing within 2% relative slack
    std::deque<double> window;
    double running = 0.0;
    double prev = -1.0;
    bool ok = true;

    void push(double total) {
        window.push_back(total);
        running += total;
        if (window.size() > 50) {
            running -= window.front();
            window.pop_front();
        }
        if (window.size() == 50) {
            const double smoothed = running / 50.0;
            if (prev >= 0.0 && smoothed > prev * 1.02) ok = false;
            prev = smoothed;
        }
    }
};

// ---- criteria 4 + 8: translation end-to-end ------------------------------------

void criteria_4_and_8(const AnalyticScene& translation, const TrainState& st, double train_seconds,
                      bool curve_ok) {
    // criterion 4: CD at intermediate stamps + endpoint P-RMSE of matched points
    double worst_cd = 0.0;
    for (double t : {0.25, 0.5, 0.75}) {
        const TriMesh pred = interpolate_sequence(st, 0, TimeGrid{{t}, false}, 96)[0];
        const TriMesh gt = analytic_intermediate(translation, t, 96);
        PointCloud pc, gc;
        pc.points = pred.vertices;
        gc.points = gt.vertices;
        worst_cd = std::max(worst_cd, chamfer_distance(pc, gc));
    }
    // endpoint fidelity: the {0,1} grid reproduces the input shapes
    double worst_end_cd = 0.0;
    {
        const auto ends = interpolate_sequence(st, 0, TimeGrid{{0.0, 1.0}, false}, 96);
        for (int side = 0; side < 2; ++side) {
            const TriMesh gt = analytic_intermediate(translation, side == 0 ? 0.0 : 1.0, 96);
            PointCloud pc, gc;
            pc.points = ends[static_cast<std::size_t>(side)].vertices;
            gc.points = gt.vertices;
            worst_end_cd = std::max(worst_end_cd, chamfer_distance(pc, gc));
        }
    }

    const auto pair = scene_dataset(translation, 3).pairs[0];
    MatX3 src(static_cast<Eigen::Index>(pair.matches.size()), 3);
    MatX3 gt_end(src.rows(), 3);
    for (std::size_t i = 0; i < pair.matches.size(); ++i) {
        src.row(static_cast<Eigen::Index>(i)) = pair.source.points.row(pair.matches[i].first);
        gt_end.row(static_cast<Eigen::Index>(i)) =
            translation.flow(src.row(static_cast<Eigen::Index>(i)).transpose(), 1.0).transpose();
    }
    const IntegratorConfig integ{IntegratorConfig::Scheme::Rk4, 16};
    const VelocityFn vel = field_velocity_fn(st, 0);
    PointCloud pe, ge;
    pe.points = advect_points(src, vel, 0.0, 1.0, integ);
    ge.points = gt_end;
    const double prmse = pointwise_rmse(pe, ge);

    const bool pass4 = worst_cd < 5e-3 && worst_end_cd < 5e-3 && prmse < 1e-2 &&
                       train_seconds < 900.0 && curve_ok;
    report(4, pass4,
           fmt("translation run: worst CD %.2e mid / %.2e endpoints (<5e-3), endpoint P-RMSE "
               "%.2e (<1e-2), train %.0fs (<900s), smoothed loss curve %s",
               worst_cd, worst_end_cd, prmse, train_seconds,
               curve_ok ? "non-increasing" : "INCREASED"));

    // criterion 8a: external-cloud advection at 11 stamps
    Rng ext_rng(77);
    const PointCloud external = translation.sample_surface(400, 0.0, ext_rng);
    const TimeGrid grid = TimeGrid::uniform(11);
    const UpsampleResult up = upsample_external_points(st, 0, external, grid, integ);
    double worst_frame_rmse = 0.0;
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
        PointCloud gt;
        gt.points = translation.flow_points(external.points, grid.values[i]);
        PointCloud pred = up.frames[i];
        pred.normals.resize(0, 3);
        gt.normals.resize(0, 3);
        worst_frame_rmse = std::max(worst_frame_rmse, pointwise_rmse(pred, gt));
    }

    // criterion 8b: extrapolation of a constant-velocity double
    const Vec3 v(0.3, -0.1, 0.2);
    VelocityFn const_vel = [v](const MatX3& x, double) {
        return MatX3(v.transpose().replicate(x.rows(), 1));
    };
    Rng rng(5);
    MatX3 pts(64, 3);
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        for (int c = 0; c < 3; ++c) pts(i, c) = rng.uniform(-0.5, 0.5);
    const MatX3 extra = advect_points(pts, const_vel, 0.0, 1.25, integ);
    const double extra_err =
        (extra - (pts.rowwise() + (1.25 * v).transpose())).cwiseAbs().maxCoeff();

    const bool pass8 = worst_frame_rmse < 1e-2 && extra_err < 1e-9;
    report(8, pass8,
           fmt("external-cloud P-RMSE %.2e over 11 stamps (<1e-2); extrapolation t=1.25 error "
               "%.1e (<1e-9)",
               worst_frame_rmse, extra_err));
}

// ---- criterion 5: area preservation on rigid motion ----------------------------

void criterion_5(const TrainState& st, const AnalyticScene& rotation) {
    const auto meshes = interpolate_sequence(st, 0, TimeGrid::uniform(11), 96);
    std::vector<double> areas;
    double mean = 0.0;
    for (const auto& m : meshes) {
        areas.push_back(surface_area(m));
        mean += areas.back();
    }
    mean /= static_cast<double>(areas.size());
    const double ratio = surface_area_std(areas) / mean;

    // Eikonal health near the trained surface (training-module invariant).
    Rng rng(41);
    PointCloud surf = rotation.sample_surface(400, 0.5, rng);
    MatX3 jitter = surf.points;
    for (Eigen::Index i = 0; i < jitter.rows(); ++i)
        for (int c = 0; c < 3; ++c) jitter(i, c) += 0.02 * rng.normal();
    const auto& pr = st.pairs[0];
    FieldQuery q{jitter, 0.5, st.latents.pair_code(pr.frame_0, pr.frame_1), false};
    const MatX3 g = grad_phi(st.phi, q);
    int healthy = 0;
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        const double n = g.row(i).norm();
        if (n >= 0.9 && n <= 1.1) ++healthy;
    }

    report(5, ratio < 0.02,
           fmt("rotation run: SA_sigma / mean area = %.4f (<0.02); eikonal health %d/400 in "
               "[0.9,1.1]",
               ratio, healthy));
}

// ---- criterion 6: ablation direction on bending ---------------------------------

double bending_sa_sigma(const AnalyticScene& bending, bool ablated, int steps) {
    TrainConfig cfg = synthetic_config(steps, 21);
    if (ablated) {
        cfg.weights.lambda_d = 0.0;
        cfg.weights.lambda_st = 0.0;
    }
    const PairDataset ds = scene_dataset(bending, 21);
    const TrainState st = train(ds, cfg);
    const auto meshes = interpolate_sequence(st, 0, TimeGrid::uniform(11), 64);
    std::vector<double> areas;
    double mean = 0.0;
    for (const auto& m : meshes) {
        areas.push_back(surface_area(m));
        mean += areas.back();
    }
    mean /= static_cast<double>(areas.size());
    return surface_area_std(areas) / mean;
}

void criterion_6(const AnalyticScene& bending, int steps) {
    const double full = bending_sa_sigma(bending, false, steps);
    const double ablated = bending_sa_sigma(bending, true, steps);
    report(6, ablated >= full,
           fmt("bending SA_sigma/mean: full-loss %.4f <= ablated (lambda_d=lambda_st=0) %.4f",
               full, ablated));
}

// ---- criterion 7: integrator order ----------------------------------------------

void criterion_7() {
    const Vec3 omega(0, 0, 2.0);
    VelocityFn rot = [omega](const MatX3& x, double) {
        MatX3 out(x.rows(), 3);
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            out.row(i) = omega.cross(x.row(i).transpose()).transpose();
        return out;
    };
    Rng rng(7);
    MatX3 pts(32, 3);
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        for (int c = 0; c < 3; ++c) pts(i, c) = rng.uniform(-0.5, 0.5);
    const Eigen::Matrix3d R =
        Eigen::AngleAxisd(omega.norm(), omega.normalized()).toRotationMatrix();
    const MatX3 expect = pts * R.transpose();
    auto err = [&](IntegratorConfig::Scheme scheme, int substeps) {
        const MatX3 end = advect_points(pts, rot, 0.0, 1.0, {scheme, substeps});
        return (end - expect).rowwise().norm().maxCoeff();
    };
    const double rk = err(IntegratorConfig::Scheme::Rk4, 8) / err(IntegratorConfig::Scheme::Rk4, 16);
    const double eu =
        err(IntegratorConfig::Scheme::Euler, 64) / err(IntegratorConfig::Scheme::Euler, 128);
    const bool pass = rk >= 8.0 && rk <= 32.0 && eu >= 1.5 && eu <= 3.0;
    report(7, pass, fmt("substep-halving error ratios: rk4 %.2f in [8,32], euler %.2f in [1.5,3]",
                        rk, eu));
}

}  // namespace

int main(int argc, char** argv) {
    std::string binary = "./tools/veloform";
    int steps = 2000;
    for (int i = 1; i + 1 < argc + 1; ++i) {
        if (std::string(argv[i]) == "--bin" && i + 1 < argc) binary = argv[i + 1];
        if (std::string(argv[i]) == "--steps" && i + 1 < argc) steps = std::atoi(argv[i + 1]);
    }

    criterion_1();
    criterion_2();
    criterion_3(binary);
    criterion_7();

    // Shared fixtures: one training run per scene.
    const AnalyticScene translation = gen_translation_scene(Vec3(0.4, 0.0, 0.0), 0.35);
    {
        const auto t0 = Clock::now();
        SmoothedCurveGuard guard;
        const TrainState st =
            train(scene_dataset(translation, 3), synthetic_config(steps, 7), "",
                  [&](std::int64_t, int, const LossBreakdown& b) { guard.push(b.total); });
        criteria_4_and_8(translation, st, seconds_since(t0), guard.ok);
    }
    {
        const AnalyticScene rotation = gen_rotation_scene(Vec3(0.0, 0.0, 1.0));
        const TrainState st = train(scene_dataset(rotation, 11), synthetic_config(steps, 7));
        criterion_5(st, rotation);
    }
    criterion_6(gen_bending_scene(0.8), std::min(steps, 1200));

    std::printf("%d criterion(s) failed\n", g_failures);
    return g_failures;
}
