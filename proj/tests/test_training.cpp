#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "veloform/gradcheck.hpp"
#include "veloform/inference.hpp"
#include "veloform/synthdata.hpp"
#include "veloform/training.hpp"
#include "veloform/util.hpp"

#include <cmath>
#include <filesystem>

using namespace veloform;

namespace {

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.fields = FieldConfig{2, 24, 30.0, 4};
    cfg.time_steps = 3;
    cfg.surface_batch = 48;
    cfg.volume_batch = 48;
    cfg.match_batch = 24;
    cfg.epochs = 1;
    cfg.steps_per_pair = 10;
    cfg.lr_fields = 1e-3;
    cfg.lr_latents = 1e-3;
    cfg.train_integrator = IntegratorConfig{IntegratorConfig::Scheme::Rk4, 4};
    cfg.checkpoint_interval = 5;
    cfg.seed = 7;
    return cfg;
}

PairDataset translation_dataset(int n_points = 600, int n_matches = 150) {
    auto scene = gen_translation_scene(Vec3(0.4, 0.0, 0.0), 0.35);
    auto pair = make_pair(scene, n_points, n_matches, 0.0, 0.0, 3);
    pair.source.frame_id = 0;
    pair.target.frame_id = 1;
    PairDataset ds;
    ds.pairs = {pair};
    return ds;
}

}  // namespace

TEST_CASE("init_latents is deterministic with the right statistics") {
    const LatentTable a = init_latents({0, 1}, 16, 42);
    const LatentTable b = init_latents({0, 1}, 16, 42);
    CHECK(a.codes == b.codes);
    CHECK(a.codes.rows() == 2);
    CHECK(a.codes.cols() == 16);

    // std of entries ~ 1/sqrt(m) on a large table
    const int m = 128;
    const LatentTable big = init_latents([] {
        std::vector<int> ids(100);
        for (int i = 0; i < 100; ++i) ids[static_cast<std::size_t>(i)] = i;
        return ids;
    }(), m, 1);
    const double std = std::sqrt(big.codes.array().square().mean());
    CHECK(std == doctest::Approx(1.0 / std::sqrt(static_cast<double>(m))).epsilon(0.1));

    const Eigen::VectorXd code = a.pair_code(0, 1);
    CHECK(code.size() == 32);
    CHECK(code.head(16) == a.codes.row(0).transpose());
    CHECK(code.tail(16) == a.codes.row(1).transpose());
}

TEST_CASE("build_batch honors the sampling contract") {
    PairDataset ds = translation_dataset();
    TrainConfig cfg = tiny_config();
    cfg.time_steps = 4;
    LatentTable latents = init_latents({0, 1}, cfg.fields.latent_dim, 1);
    Rng rng(5);
    SampleBatch b = build_batch(ds.pairs[0], cfg, latents, rng);

    Eigen::VectorXd expect(5);
    expect << 0.0, 0.25, 0.5, 0.75, 1.0;
    CHECK(b.times == expect);
    CHECK(b.surface_points_0.rows() == cfg.surface_batch);
    CHECK(b.surface_points_1.rows() == cfg.surface_batch);
    CHECK(b.volume_points.rows() == cfg.volume_batch);
    CHECK(b.matched_src.rows() == cfg.match_batch);
    for (Eigen::Index i = 0; i < b.volume_points.rows(); ++i)
        CHECK(cfg.domain.contains(b.volume_points.row(i).transpose()));
    CHECK(b.code.size() == 2 * cfg.fields.latent_dim);

    // no correspondences while the matching term is active
    CorrespondencePair bare = ds.pairs[0];
    bare.matches.clear();
    bare.unsupervised = true;
    CHECK_THROWS_WITH(static_cast<void>(build_batch(bare, cfg, latents, rng)),
                      doctest::Contains("no correspondences"));
    TrainConfig no_match = cfg;
    no_match.weights.lambda_m = 0.0;
    CHECK_NOTHROW(static_cast<void>(build_batch(bare, no_match, latents, rng)));
}

TEST_CASE("train_step mechanics") {
    PairDataset ds = translation_dataset();
    TrainConfig cfg = tiny_config();
    cfg.steps_per_pair = 1;

    SUBCASE("zero learning rate leaves parameters unchanged") {
        TrainConfig frozen = cfg;
        frozen.lr_fields = 0.0;
        frozen.lr_latents = 0.0;
        frozen.latent_reg = 0.0;
        TrainState st = train(ds, frozen);
        TrainState st2 = train(ds, frozen);
        CHECK(st.phi.net.to_flat() == st2.phi.net.to_flat());
        // compare against a fresh init with the same seed
        Rng root(frozen.seed);
        Rng phi_rng = root.fork(101);
        ImplicitField fresh = make_implicit_field(frozen.fields, phi_rng);
        CHECK(st.phi.net.to_flat() == fresh.net.to_flat());
    }
    SUBCASE("a small step decreases the loss on a fixed batch") {
        TrainState st = train(ds, cfg);  // a few steps to get away from init
        Rng rng(17);
        SampleBatch batch = build_batch(ds.pairs[0], cfg, st.latents, rng);
        const LossBreakdown before =
            compute_losses(st.phi, st.vel, batch, cfg.weights, cfg.train_integrator, nullptr);
        StepResult res = train_step(st, batch);
        CHECK(res.breakdown.total == doctest::Approx(before.total).epsilon(1e-9));
        const LossBreakdown after =
            compute_losses(st.phi, st.vel, batch, cfg.weights, cfg.train_integrator, nullptr);
        CHECK(after.total < before.total);
    }
    SUBCASE("breakdown sums to the weighted total") {
        TrainState st = train(ds, cfg);
        Rng rng(19);
        SampleBatch batch = build_batch(ds.pairs[0], cfg, st.latents, rng);
        const LossBreakdown bd =
            compute_losses(st.phi, st.vel, batch, cfg.weights, cfg.train_integrator, nullptr);
        const LossWeights& w = cfg.weights;
        const double expect = w.lambda_i * bd.li + w.lambda_m * bd.lm + w.lambda_s * bd.ls +
                              w.lambda_v * bd.lv + w.lambda_st * bd.lst + w.lambda_d * bd.ld +
                              w.lambda_n * bd.ln + w.lambda_recon * bd.lrecon;
        CHECK(bd.total == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("short training run fits the matching term" * doctest::timeout(300)) {
    PairDataset ds = translation_dataset();
    TrainConfig cfg = tiny_config();
    cfg.steps_per_pair = 200;
    TrainState st = train(ds, cfg);
    Rng rng(23);
    SampleBatch batch = build_batch(ds.pairs[0], cfg, st.latents, rng);
    const LossBreakdown bd =
        compute_losses(st.phi, st.vel, batch, cfg.weights, cfg.train_integrator, nullptr);
    CHECK(bd.lm < 1e-3);
}

TEST_CASE("sequence bookkeeping: 3 frames -> 2 pairs, 3 latent codes") {
    auto scene = gen_translation_scene(Vec3(0.3, 0.0, 0.0), 0.3);
    auto p01 = make_pair(scene, 300, 60, 0.0, 0.0, 3);
    p01.source.frame_id = 0;
    p01.target.frame_id = 1;
    auto p12 = make_pair(scene, 300, 60, 0.0, 0.0, 4);
    p12.source.frame_id = 1;
    p12.target.frame_id = 2;
    PairDataset ds;
    ds.pairs = {p01, p12};
    ds.sequence = true;
    CHECK(ds.frame_ids() == std::vector<int>{0, 1, 2});

    TrainConfig cfg = tiny_config();
    cfg.steps_per_pair = 4;
    TrainState st = train(ds, cfg);
    CHECK(st.pairs.size() == 2);
    CHECK(st.latents.codes.rows() == 3);
    const LatentTable init = init_latents(ds.frame_ids(), cfg.fields.latent_dim,
                                          Rng(cfg.seed).fork(103).next_u64());
    for (int row = 0; row < 3; ++row)
        CHECK(st.latents.codes.row(row) != init.codes.row(row));  // every code updated

    // non-consecutive pair rejected in sequence mode
    PairDataset bad = ds;
    bad.pairs[1].source.frame_id = 0;
    bad.pairs[1].target.frame_id = 2;
    CHECK_THROWS(bad.validate());
    bad.sequence = false;
    CHECK_NOTHROW(bad.validate());
}

TEST_CASE("a step touches only the current pair's latent codes") {
    auto scene = gen_translation_scene(Vec3(0.3, 0.0, 0.0), 0.3);
    auto p01 = make_pair(scene, 300, 60, 0.0, 0.0, 3);
    p01.source.frame_id = 0;
    p01.target.frame_id = 1;
    auto p12 = make_pair(scene, 300, 60, 0.0, 0.0, 4);
    p12.source.frame_id = 1;
    p12.target.frame_id = 2;
    PairDataset ds;
    ds.pairs = {p01, p12};

    TrainConfig cfg = tiny_config();
    cfg.steps_per_pair = 1;
    cfg.epochs = 1;
    // build the initial state without stepping
    TrainConfig no_steps = cfg;
    no_steps.lr_fields = 0.0;
    no_steps.lr_latents = 0.0;
    no_steps.latent_reg = 0.0;
    TrainState st = train(ds, no_steps);
    st.config = cfg;
    const Eigen::MatrixXd before = st.latents.codes;

    Rng rng(31);
    SampleBatch batch = build_batch(ds.pairs[0], cfg, st.latents, rng);  // frames 0 and 1
    train_step(st, batch);
    CHECK(st.latents.codes.row(0) != before.row(0));
    CHECK(st.latents.codes.row(1) != before.row(1));
    CHECK(st.latents.codes.row(2) == before.row(2));  // frame 2 untouched
}

TEST_CASE("checkpoint round-trip and exact resume") {
    PairDataset ds = translation_dataset(300, 60);
    TrainConfig cfg = tiny_config();
    cfg.steps_per_pair = 12;
    cfg.checkpoint_interval = 6;

    const auto dir = std::filesystem::temp_directory_path() / "veloform_train_test";
    std::filesystem::create_directories(dir);

    SUBCASE("load->save is bitwise stable") {
        TrainState st = train(ds, cfg);
        for (const char* dtype : {"float64", "float32"}) {
            const std::string p1 = (dir / (std::string("a_") + dtype + ".vfc")).string();
            const std::string p2 = (dir / (std::string("b_") + dtype + ".vfc")).string();
            st.save(p1, dtype);
            TrainState::load(p1).save(p2, dtype);
            CHECK(read_text_file(p1) == read_text_file(p2));
        }
    }
    SUBCASE("resume reproduces the uninterrupted run bitwise") {
        TrainState full = train(ds, cfg);

        TrainConfig half = cfg;
        half.steps_per_pair = 6;
        TrainState st = train(ds, half);
        const std::string ck = (dir / "resume.vfc").string();
        st.save(ck);
        TrainState resumed = TrainState::load(ck);
        resumed.config.steps_per_pair = 12;
        resumed = train_continue(std::move(resumed), ds);

        CHECK(resumed.step == full.step);
        CHECK(resumed.phi.net.to_flat() == full.phi.net.to_flat());
        CHECK(resumed.vel.net.to_flat() == full.vel.net.to_flat());
        CHECK(resumed.latents.codes == full.latents.codes);
    }
}

TEST_CASE("interpolation plumbing on a trained state" * doctest::timeout(300)) {
    PairDataset ds = translation_dataset();
    TrainConfig cfg = tiny_config();
    cfg.steps_per_pair = 150;
    cfg.fields.omega0 = 8.0;
    cfg.weights.lambda_i = 10.0;
    TrainState st = train(ds, cfg);

    SUBCASE("grids produce one mesh per value, deterministically") {
        auto one = interpolate_sequence(st, 0, TimeGrid{{0.5}, false}, 24);
        CHECK(one.size() == 1);
        auto many = interpolate_sequence(st, 0, TimeGrid::uniform(5), 24);
        CHECK(many.size() == 5);
        auto again = interpolate_sequence(st, 0, TimeGrid{{0.5}, false}, 24);
        CHECK(one[0].vertices == again[0].vertices);  // same value, same mesh
        CHECK_THROWS_WITH(static_cast<void>(interpolate_sequence(st, 9, TimeGrid::uniform(2), 24)),
                          doctest::Contains("known ids"));
    }
    SUBCASE("upsampling the training source matches direct advection") {
        PointCloud external;
        external.points = ds.pairs[0].source.points.topRows(64);
        IntegratorConfig integ{IntegratorConfig::Scheme::Rk4, 8};
        auto up = upsample_external_points(st, 0, external, TimeGrid{{0.0, 0.5, 1.0}, false}, integ);
        CHECK(up.frames.size() == 3);
        CHECK(up.frames[0].points == external.points);
        auto vel = field_velocity_fn(st, 0);
        const MatX3 direct = advect_points(external.points, vel, 0.0, 0.5, integ);
        CHECK((up.frames[1].points - direct).cwiseAbs().maxCoeff() == 0.0);
        // consecutive-interval advection composes to the direct map
        const MatX3 direct_end =
            advect_points(advect_points(external.points, vel, 0.0, 0.5, integ), vel, 0.5, 1.0, integ);
        CHECK((up.frames[2].points - direct_end).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("far-outside external points are tallied but advected") {
        PointCloud external;
        external.points.resize(2, 3);
        external.points << 0.0, 0.0, 0.0, 5.0, 5.0, 5.0;
        auto up = upsample_external_points(st, 0, external, TimeGrid{{0.0, 1.0}, false},
                                           IntegratorConfig{IntegratorConfig::Scheme::Rk4, 4});
        CHECK(up.far_outside_points == 1);
        CHECK(up.frames[1].points.allFinite());
    }
    SUBCASE("extrapolation continues smoothly past the endpoints") {
        PointCloud pts;
        pts.points = ds.pairs[0].source.points.topRows(32);
        IntegratorConfig integ{IntegratorConfig::Scheme::Rk4, 8};
        const PointCloud at_one = extrapolate(st, 0, 1.0, pts, integ);
        auto vel = field_velocity_fn(st, 0);
        CHECK((at_one.points - advect_points(pts.points, vel, 0.0, 1.0, integ)).cwiseAbs().maxCoeff() ==
              0.0);
        const PointCloud beyond = extrapolate(st, 0, 1.25, pts, integ);
        CHECK(beyond.points.allFinite());
        const PointCloud before = extrapolate(st, 0, -0.25, pts, integ);
        CHECK(before.points.allFinite());
    }
}

TEST_CASE("gradient checks pass and fault injection is caught" * doctest::timeout(600)) {
    GradCheckOptions opts;
    opts.probes = 24;
    const GradCheckReport report = run_gradient_checks(opts);
    for (const auto& e : report.entries) {
        INFO(e.name, " max_rel_err=", e.max_rel_err);
        CHECK(e.pass);
    }
    CHECK(report.all_pass());

    GradCheckOptions corrupt = opts;
    corrupt.probes = 6;
    corrupt.corrupt_term = "L_s";
    corrupt.corrupt_scale = 0.5;
    const GradCheckReport bad = run_gradient_checks(corrupt);
    CHECK(!bad.all_pass());
    for (const auto& e : bad.entries) {
        if (e.name == "L_s") CHECK(!e.pass);
        else CHECK(e.pass);
    }
}
