#include "veloform/gradcheck.hpp"

#include "veloform/fields.hpp"
#include "veloform/losses.hpp"
#include "veloform/training.hpp"

#include <algorithm>
#include <cmath>

namespace veloform {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kFirstOrderTol = 1e-4;
constexpr double kSecondOrderTol = 1e-3;

double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(std::abs(want), 1e-8);
}

struct Probe {
    FieldConfig cfg;
    ImplicitField phi;
    VelocityField vel;
    SampleBatch batch;
    AxisAlignedDomain domain = AxisAlignedDomain::unit_cube();
    IntegratorConfig integrator{IntegratorConfig::Scheme::Rk4, 4};
};

Probe make_probe(std::uint64_t seed) {
    Probe p;
    p.cfg = FieldConfig{2, 16, 30.0, 4};  // 2 hidden layers x 16 units, m = 4
    Rng rng(seed);
    Rng phi_rng = rng.fork(1);
    Rng vel_rng = rng.fork(2);
    p.phi = make_implicit_field(p.cfg, phi_rng);
    p.vel = make_velocity_field(p.cfg, vel_rng);

    Rng data = rng.fork(3);
    auto random_points = [&](int n) {
        MatX3 pts(n, 3);
        for (int i = 0; i < n; ++i)
            for (int c = 0; c < 3; ++c) pts(i, c) = data.uniform(-0.8, 0.8);
        return pts;
    };
    auto random_normals = [&](int n) {
        MatX3 m(n, 3);
        for (int i = 0; i < n; ++i) {
            Vec3 v(data.normal(), data.normal(), data.normal());
            m.row(i) = v.normalized().transpose();
        }
        return m;
    };
    SampleBatch& b = p.batch;
    b.volume_points = random_points(24);
    b.surface_points_0 = random_points(16);
    b.surface_points_1 = random_points(16);
    b.matched_src = random_points(12);
    b.matched_dst = random_points(12);
    b.matched_normals_0 = random_normals(12);
    b.matched_normals_1 = random_normals(12);
    b.times.resize(3);
    b.times << 0.0, 0.5, 1.0;
    b.code.resize(2 * p.cfg.latent_dim);
    for (Eigen::Index i = 0; i < b.code.size(); ++i) b.code[i] = 0.5 * data.normal();
    b.frame_0 = 0;
    b.frame_1 = 1;
    return p;
}

// ---- operator checks ---------------------------------------------------------

GradCheckEntry check_grad_phi(const Probe& p, int probes, Rng& rng) {
    GradCheckEntry e{"grad_phi", 0.0, kFirstOrderTol, false};
    const double h = 1e-4;
    for (int i = 0; i < probes; ++i) {
        MatX3 x(1, 3);
        for (int c = 0; c < 3; ++c) x(0, c) = rng.uniform(-0.8, 0.8);
        const double t = rng.uniform(0.1, 0.9);
        FieldQuery q{x, t, p.batch.code, false};
        const Vec3 g = grad_phi(p.phi, q).row(0).transpose();
        Vec3 fd;
        for (int c = 0; c < 3; ++c) {
            MatX3 xp = x, xm = x;
            xp(0, c) += h;
            xm(0, c) -= h;
            FieldQuery qp{xp, t, p.batch.code, false}, qm{xm, t, p.batch.code, false};
            fd[c] = (eval_phi(p.phi, qp)[0] - eval_phi(p.phi, qm)[0]) / (2.0 * h);
        }
        e.max_rel_err = std::max(e.max_rel_err, (g - fd).norm() / std::max(fd.norm(), 1e-8));
    }
    e.pass = e.max_rel_err < e.tolerance;
    return e;
}

GradCheckEntry check_dphi_dt(const Probe& p, int probes, Rng& rng) {
    GradCheckEntry e{"dphi_dt", 0.0, kFirstOrderTol, false};
    const double h = 1e-4;
    for (int i = 0; i < probes; ++i) {
        MatX3 x(1, 3);
        for (int c = 0; c < 3; ++c) x(0, c) = rng.uniform(-0.8, 0.8);
        const double t = rng.uniform(0.1, 0.9);
        FieldQuery q{x, t, p.batch.code, false};
        const double dt = dphi_dt(p.phi, q)[0];
        FieldQuery qp{x, t + h, p.batch.code, false}, qm{x, t - h, p.batch.code, false};
        const double fd = (eval_phi(p.phi, qp)[0] - eval_phi(p.phi, qm)[0]) / (2.0 * h);
        e.max_rel_err = std::max(e.max_rel_err, rel_err(dt, fd));
    }
    e.pass = e.max_rel_err < e.tolerance;
    return e;
}

GradCheckEntry check_velocity_jacobian(const Probe& p, int probes, Rng& rng) {
    GradCheckEntry e{"velocity_jacobian", 0.0, kFirstOrderTol, false};
    const double h = 1e-4;
    for (int i = 0; i < probes; ++i) {
        MatX3 x(1, 3);
        for (int c = 0; c < 3; ++c) x(0, c) = rng.uniform(-0.8, 0.8);
        const double t = rng.uniform(0.1, 0.9);
        FieldQuery q{x, t, p.batch.code, false};
        const Mat3 J = velocity_jacobian(p.vel, q)[0];
        Mat3 fd;
        for (int c = 0; c < 3; ++c) {
            MatX3 xp = x, xm = x;
            xp(0, c) += h;
            xm(0, c) -= h;
            FieldQuery qp{xp, t, p.batch.code, false}, qm{xm, t, p.batch.code, false};
            fd.col(c) =
                (eval_velocity(p.vel, qp).row(0) - eval_velocity(p.vel, qm).row(0)).transpose() /
                (2.0 * h);
        }
        e.max_rel_err = std::max(e.max_rel_err, (J - fd).norm() / std::max(fd.norm(), 1e-8));
    }
    e.pass = e.max_rel_err < e.tolerance;
    return e;
}

GradCheckEntry check_divergence(const Probe& p, int probes, Rng& rng) {
    GradCheckEntry e{"velocity_divergence", 0.0, kFirstOrderTol, false};
    const double h = 1e-4;
    for (int i = 0; i < probes; ++i) {
        MatX3 x(1, 3);
        for (int c = 0; c < 3; ++c) x(0, c) = rng.uniform(-0.8, 0.8);
        const double t = rng.uniform(0.1, 0.9);
        FieldQuery q{x, t, p.batch.code, false};
        const double div = velocity_divergence(p.vel, q)[0];
        double fd = 0.0;
        for (int c = 0; c < 3; ++c) {
            MatX3 xp = x, xm = x;
            xp(0, c) += h;
            xm(0, c) -= h;
            FieldQuery qp{xp, t, p.batch.code, false}, qm{xm, t, p.batch.code, false};
            fd += (eval_velocity(p.vel, qp)(0, c) - eval_velocity(p.vel, qm)(0, c)) / (2.0 * h);
        }
        e.max_rel_err = std::max(e.max_rel_err, rel_err(div, fd));
    }
    e.pass = e.max_rel_err < e.tolerance;
    return e;
}

GradCheckEntry check_laplacian_modes(const Probe& p, int probes, Rng& rng) {
    GradCheckEntry e{"velocity_laplacian", 0.0, kSecondOrderTol, false};
    for (int i = 0; i < probes; ++i) {
        MatX3 x(1, 3);
        for (int c = 0; c < 3; ++c) x(0, c) = rng.uniform(-0.8, 0.8);
        const double t = rng.uniform(0.1, 0.9);
        FieldQuery q{x, t, p.batch.code, false};
        const Vec3 exact = velocity_laplacian(p.vel, q, LaplacianMode::Exact).row(0).transpose();
        const Vec3 fd =
            velocity_laplacian(p.vel, q, LaplacianMode::FiniteDifference, 1e-4).row(0).transpose();
        e.max_rel_err = std::max(e.max_rel_err, (exact - fd).norm() / std::max(fd.norm(), 1e-8));
    }
    e.pass = e.max_rel_err < e.tolerance;
    return e;
}

// ---- loss parameter-gradient checks ------------------------------------------

// Directional finite differences of the weighted objective along random
// directions in the concatenated (phi params, vel params, pair code) space.
GradCheckEntry check_loss_gradient(const Probe& p, const std::string& name,
                                   const LossWeights& weights, int probes, Rng& rng,
                                   const GradCheckOptions& opts) {
    GradCheckEntry e{name, 0.0, kSecondOrderTol, false};

    PairGrads grads{MlpGrads::zeros_like(p.phi.net), MlpGrads::zeros_like(p.vel.net),
                    VectorXd::Zero(p.batch.code.size())};
    LossBreakdown bd = compute_losses(p.phi, p.vel, p.batch, weights, p.integrator, &grads);
    (void)bd;
    VectorXd analytic(grads.phi.to_flat().size() + grads.vel.to_flat().size() +
                      grads.code.size());
    analytic << grads.phi.to_flat(), grads.vel.to_flat(), grads.code;
    if (opts.corrupt_term == name) analytic *= (1.0 + opts.corrupt_scale);

    const VectorXd theta_phi = p.phi.net.to_flat();
    const VectorXd theta_vel = p.vel.net.to_flat();
    const Eigen::Index n_phi = theta_phi.size(), n_vel = theta_vel.size(),
                       n_code = p.batch.code.size();

    auto value_at = [&](const VectorXd& dir, double step) {
        ImplicitField phi = p.phi;
        VelocityField vel = p.vel;
        SampleBatch batch = p.batch;
        phi.net.from_flat(theta_phi + step * dir.head(n_phi));
        vel.net.from_flat(theta_vel + step * dir.segment(n_phi, n_vel));
        batch.code += step * dir.tail(n_code);
        LossBreakdown b = compute_losses(phi, vel, batch, weights, p.integrator, nullptr);
        return b.total;
    };

    const double h = 1e-5;
    for (int i = 0; i < probes; ++i) {
        VectorXd dir(analytic.size());
        for (Eigen::Index k = 0; k < dir.size(); ++k) dir[k] = rng.normal();
        dir.normalize();
        const double fd = (value_at(dir, h) - value_at(dir, -h)) / (2.0 * h);
        e.max_rel_err = std::max(e.max_rel_err, rel_err(analytic.dot(dir), fd));
    }
    e.pass = e.max_rel_err < e.tolerance;
    return e;
}

LossWeights single_term(const std::string& term) {
    LossWeights w;
    w.lambda_i = w.lambda_s = w.lambda_v = w.lambda_st = w.lambda_d = 0.0;
    w.lambda_m = w.lambda_n = w.lambda_recon = 0.0;
    if (term == "L_i") w.lambda_i = 1.0;
    else if (term == "L_s") w.lambda_s = 1.0;
    else if (term == "L_v") w.lambda_v = 1.0;
    else if (term == "L_st") w.lambda_st = 1.0;
    else if (term == "L_d") w.lambda_d = 1.0;
    else if (term == "L_m") w.lambda_m = 1.0;
    else if (term == "L_n") w.lambda_n = 1.0;
    else if (term == "L_recon") w.lambda_recon = 1.0;
    return w;
}

}  // namespace

bool GradCheckReport::all_pass() const {
    return std::all_of(entries.begin(), entries.end(),
                       [](const GradCheckEntry& e) { return e.pass; });
}

GradCheckReport run_gradient_checks(const GradCheckOptions& opts) {
    Probe probe = make_probe(opts.seed);
    Rng rng(opts.seed ^ 0x5eedULL);
    GradCheckReport report;

    report.entries.push_back(check_grad_phi(probe, opts.probes, rng));
    report.entries.push_back(check_dphi_dt(probe, opts.probes, rng));
    report.entries.push_back(check_velocity_jacobian(probe, opts.probes, rng));
    report.entries.push_back(check_divergence(probe, opts.probes, rng));
    report.entries.push_back(check_laplacian_modes(probe, opts.probes, rng));

    // Directional probes: each direction touches every parameter.
    const int loss_probes = opts.probes;
    for (const char* term : {"L_i", "L_s", "L_v", "L_st", "L_d", "L_m", "L_n", "L_recon"}) {
        report.entries.push_back(
            check_loss_gradient(probe, term, single_term(term), loss_probes, rng, opts));
    }
    LossWeights all;
    all.lambda_n = 0.5;  // exercise the normal term inside the total as well
    report.entries.push_back(check_loss_gradient(probe, "total", all, loss_probes, rng, opts));
    return report;
}

}  // namespace veloform
