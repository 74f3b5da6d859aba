#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "veloform/fields.hpp"

#include "oracles.hpp"

using namespace veloform;
using Eigen::VectorXd;

namespace {

FieldConfig tiny_cfg() { return FieldConfig{2, 16, 30.0, 4}; }

FieldQuery query_of(const MatX3& pts, double t, int code_dim, uint64_t seed) {
    Rng rng(seed);
    FieldQuery q;
    q.points = pts;
    q.time = t;
    q.code.resize(code_dim);
    for (Eigen::Index i = 0; i < q.code.size(); ++i) q.code[i] = 0.3 * rng.normal();
    return q;
}

MatX3 random_points(int n, uint64_t seed) {
    Rng rng(seed);
    MatX3 pts(n, 3);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) pts(i, c) = rng.uniform(-0.8, 0.8);
    return pts;
}

}  // namespace

TEST_CASE("field evaluation contracts") {
    Rng rng(1);
    const FieldConfig cfg = tiny_cfg();
    const ImplicitField phi = make_implicit_field(cfg, rng);
    const VelocityField vel = make_velocity_field(cfg, rng);
    const MatX3 pts = random_points(5, 2);
    const FieldQuery q = query_of(pts, 0.4, 2 * cfg.latent_dim, 3);

    SUBCASE("batch order is preserved") {
        const VectorXd all = eval_phi(phi, q);
        CHECK(all.size() == 5);
        for (int i = 0; i < 5; ++i) {
            FieldQuery single = q;
            single.points = pts.row(i);
            CHECK(eval_phi(phi, single)[0] == all[i]);
        }
        const MatX3 v = eval_velocity(vel, q);
        CHECK(v.rows() == 5);
        CHECK(v.allFinite());
    }
    SUBCASE("repeated evaluation is bitwise identical") {
        CHECK(eval_phi(phi, q) == eval_phi(phi, q));
        CHECK(eval_velocity(vel, q) == eval_velocity(vel, q));
        CHECK(grad_phi(phi, q) == grad_phi(phi, q));
    }
    SUBCASE("code dimension mismatch is rejected") {
        FieldQuery bad = q;
        bad.code.resize(3);
        bad.code.setZero();
        CHECK_THROWS(static_cast<void>(eval_phi(phi, bad)));
        CHECK_THROWS(static_cast<void>(eval_velocity(vel, bad)));
    }
    SUBCASE("time outside [0,1] requires the extrapolation flag") {
        FieldQuery beyond = q;
        beyond.time = 1.2;
        CHECK_THROWS(static_cast<void>(eval_phi(phi, beyond)));
        beyond.allow_time_extrapolation = true;
        CHECK_NOTHROW(static_cast<void>(eval_phi(phi, beyond)));
    }
    SUBCASE("changing the code changes the output") {
        FieldQuery other = q;
        other.code.array() += 0.5;
        CHECK(eval_phi(phi, q) != eval_phi(phi, other));
    }
}

TEST_CASE("bundled terms equal the individual operators") {
    Rng rng(5);
    const FieldConfig cfg = tiny_cfg();
    const ImplicitField phi = make_implicit_field(cfg, rng);
    const VelocityField vel = make_velocity_field(cfg, rng);
    const FieldQuery q = query_of(random_points(8, 6), 0.3, 2 * cfg.latent_dim, 7);

    const PhiTerms pt = eval_phi_terms(phi, q);
    CHECK(pt.phi == eval_phi(phi, q));
    CHECK(pt.grad == grad_phi(phi, q));
    CHECK(pt.dt == dphi_dt(phi, q));

    const VelocityTerms vt = eval_velocity_terms(vel, q, true);
    CHECK(vt.v == eval_velocity(vel, q));
    const auto jac = velocity_jacobian(vel, q);
    for (std::size_t i = 0; i < jac.size(); ++i) CHECK(vt.jacobian[i] == jac[i]);
    CHECK(vt.laplacian == velocity_laplacian(vel, q, LaplacianMode::Exact));

    const VectorXd div = velocity_divergence(vel, q);
    for (Eigen::Index i = 0; i < div.size(); ++i)
        CHECK(div[i] == doctest::Approx(jac[static_cast<std::size_t>(i)].trace()).epsilon(1e-14));
}

TEST_CASE("laplacian modes agree; relu has no exact mode") {
    Rng rng(9);
    const FieldConfig cfg = tiny_cfg();
    const VelocityField vel = make_velocity_field(cfg, rng);
    const FieldQuery q = query_of(random_points(16, 10), 0.5, 2 * cfg.latent_dim, 11);

    const MatX3 exact = velocity_laplacian(vel, q, LaplacianMode::Exact);
    const MatX3 fd = velocity_laplacian(vel, q, LaplacianMode::FiniteDifference, 1e-4);
    for (Eigen::Index i = 0; i < exact.rows(); ++i) {
        CHECK(oracles::rel_err_vec(exact.row(i).transpose(), fd.row(i).transpose()) < 1e-3);
    }

    VelocityField relu = vel;
    relu.net.activation = Activation::Relu;
    CHECK_THROWS_WITH(static_cast<void>(velocity_laplacian(relu, q, LaplacianMode::Exact)),
                      doctest::Contains("finite_difference"));
    CHECK_NOTHROW(static_cast<void>(velocity_laplacian(relu, q, LaplacianMode::FiniteDifference)));
}

TEST_CASE("latent table lookups") {
    LatentTable t;
    t.frame_ids = {4, 7};
    t.codes.resize(2, 3);
    t.codes << 1, 2, 3, 4, 5, 6;
    CHECK(t.code(7) == Eigen::Vector3d(4, 5, 6));
    CHECK_THROWS(static_cast<void>(t.code(5)));
    const VectorXd pair = t.pair_code(7, 4);
    CHECK(pair.size() == 6);
    CHECK(pair.head(3) == Eigen::Vector3d(4, 5, 6));
    CHECK(pair.tail(3) == Eigen::Vector3d(1, 2, 3));
    t.frame_ids = {4, 4};
    CHECK_THROWS(t.validate());
}
