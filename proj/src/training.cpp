#include "veloform/training.hpp"

#include "veloform/archive.hpp"
#include "veloform/config.hpp"
#include "veloform/util.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <stdexcept>

namespace veloform {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void TrainConfig::validate() const {
    if (time_steps < 1) throw std::invalid_argument("time_steps must be >= 1");
    if (epochs < 1 || steps_per_pair < 1) throw std::invalid_argument("epochs and steps must be positive");
    if (surface_batch < 1 || volume_batch < 1 || match_batch < 0)
        throw std::invalid_argument("batch sizes must be positive");
    if (checkpoint_interval < 1) throw std::invalid_argument("checkpoint_interval must be positive");
    if (latent_reg < 0.0) throw std::invalid_argument("latent_reg must be nonnegative");
    if (lr_decay <= 0.0 || lr_decay > 1.0)
        throw std::invalid_argument("lr_decay must be in (0, 1]");
    weights.validate();
    train_integrator.validate();
    domain.validate();
}

std::vector<int> PairDataset::frame_ids() const {
    std::vector<int> ids;
    auto add = [&](int id) {
        if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
    };
    for (const auto& p : pairs) {
        add(p.source.frame_id);
        add(p.target.frame_id);
    }
    return ids;
}

void PairDataset::validate() const {
    if (pairs.empty()) throw std::invalid_argument("dataset has no pairs");
    for (const auto& p : pairs) {
        p.validate();
        if (p.source.frame_id < 0 || p.target.frame_id < 0)
            throw std::invalid_argument("pair clouds need frame ids");
        if (p.source.frame_id == p.target.frame_id)
            throw std::invalid_argument("pair frames must differ");
    }
    if (sequence) {
        for (const auto& p : pairs) {
            if (p.target.frame_id != p.source.frame_id + 1)
                throw std::invalid_argument("sequence mode requires consecutive frame pairs");
        }
    }
}

const PairRecord& TrainState::pair_by_id(int pair_id) const {
    for (const auto& p : pairs) {
        if (p.id == pair_id) return p;
    }
    std::string known;
    for (const auto& p : pairs) known += (known.empty() ? "" : ", ") + std::to_string(p.id);
    throw std::invalid_argument("unknown pair id " + std::to_string(pair_id) + "; known ids: " +
                                (known.empty() ? "(none)" : known));
}

LatentTable init_latents(const std::vector<int>& frame_ids, int m, std::uint64_t seed) {
    if (m < 1) throw std::invalid_argument("latent dimension must be positive");
    Rng rng(seed);
    LatentTable table;
    table.frame_ids = frame_ids;
    table.codes.resize(static_cast<Eigen::Index>(frame_ids.size()), m);
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    for (Eigen::Index r = 0; r < table.codes.rows(); ++r)
        for (Eigen::Index c = 0; c < table.codes.cols(); ++c) table.codes(r, c) = scale * rng.normal();
    table.validate();
    return table;
}

SampleBatch build_batch(const CorrespondencePair& pair, const TrainConfig& cfg,
                        const LatentTable& latents, Rng& rng) {
    if (cfg.weights.lambda_m > 0.0 && pair.matches.empty())
        throw std::invalid_argument("pair has no correspondences");

    SampleBatch batch;
    batch.frame_0 = pair.source.frame_id;
    batch.frame_1 = pair.target.frame_id;
    batch.code = latents.pair_code(batch.frame_0, batch.frame_1);

    const Eigen::Index T = cfg.time_steps;
    batch.times.resize(T + 1);
    for (Eigen::Index i = 0; i <= T; ++i)
        batch.times[i] = static_cast<double>(i) / static_cast<double>(T);

    auto pick_surface = [&](const PointCloud& cloud, MatX3& pts, MatX3& normals) {
        pts.resize(cfg.surface_batch, 3);
        if (cloud.has_normals()) normals.resize(cfg.surface_batch, 3);
        for (int i = 0; i < cfg.surface_batch; ++i) {
            const auto row = static_cast<Eigen::Index>(rng.below(cloud.points.rows()));
            pts.row(i) = cloud.points.row(row);
            if (cloud.has_normals()) normals.row(i) = cloud.normals.row(row);
        }
    };
    pick_surface(pair.source, batch.surface_points_0, batch.surface_normals_0);
    pick_surface(pair.target, batch.surface_points_1, batch.surface_normals_1);

    // Volume samples: half uniform over the domain, half Gaussian-perturbed
    // surface points (alternating endpoints), clamped into the domain.
    const Vec3 lo = cfg.domain.min_corner, hi = cfg.domain.max_corner;
    batch.volume_points.resize(cfg.volume_batch, 3);
    const int uniform_count = cfg.volume_batch / 2;
    for (int i = 0; i < cfg.volume_batch; ++i) {
        Vec3 p;
        if (i < uniform_count) {
            p = Vec3(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
                     rng.uniform(lo.z(), hi.z()));
        } else {
            const MatX3& surf = (i % 2 == 0) ? pair.source.points : pair.target.points;
            p = surf.row(static_cast<Eigen::Index>(rng.below(surf.rows()))).transpose();
            p += cfg.surface_noise_sigma * Vec3(rng.normal(), rng.normal(), rng.normal());
            p = p.cwiseMax(lo).cwiseMin(hi);
        }
        batch.volume_points.row(i) = p.transpose();
    }

    const int n_matches = pair.matches.empty() ? 0 : cfg.match_batch;
    batch.matched_src.resize(n_matches, 3);
    batch.matched_dst.resize(n_matches, 3);
    const bool with_normals = pair.source.has_normals() && pair.target.has_normals();
    if (with_normals) {
        batch.matched_normals_0.resize(n_matches, 3);
        batch.matched_normals_1.resize(n_matches, 3);
    }
    for (int i = 0; i < n_matches; ++i) {
        const auto& [si, ti] = pair.matches[static_cast<std::size_t>(rng.below(pair.matches.size()))];
        batch.matched_src.row(i) = pair.source.points.row(si);
        batch.matched_dst.row(i) = pair.target.points.row(ti);
        if (with_normals) {
            batch.matched_normals_0.row(i) = pair.source.normals.row(si);
            batch.matched_normals_1.row(i) = pair.target.normals.row(ti);
        }
    }
    batch.validate(cfg.domain);
    return batch;
}

namespace {

// ---- traced advection (discrete adjoint of the integrator) ------------------

struct AdvectTape {
    IntegratorConfig::Scheme scheme = IntegratorConfig::Scheme::Rk4;
    double h = 0.0;
    int steps = 0;
    std::vector<std::array<MlpTrace, 4>> traces;  // Euler uses slot 0 only
};

MatrixXd stage_input(const MatX3& x, double t, const VectorXd& code) {
    MatrixXd X(x.rows(), 4 + code.size());
    X.leftCols(3) = x;
    X.col(3).setConstant(t);
    X.rightCols(code.size()) = code.transpose().replicate(x.rows(), 1);
    return X;
}

MatX3 advect_net_forward(const VelocityField& vel, const VectorXd& code, const MatX3& x0,
                         double t0, double t1, const IntegratorConfig& cfg, AdvectTape* tape) {
    const double span = t1 - t0;
    const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(span) * cfg.substeps_per_unit)));
    const double h = span / steps;
    if (tape) {
        tape->scheme = cfg.scheme;
        tape->h = h;
        tape->steps = steps;
        tape->traces.assign(static_cast<std::size_t>(steps), {});
    }
    auto eval = [&](const MatX3& x, double t, MlpTrace* trace) -> MatX3 {
        return mlp_eval(vel.net, stage_input(x, t, code), {}, trace).value;
    };
    MatX3 x = x0;
    for (int s = 0; s < steps; ++s) {
        const double t = t0 + s * h;
        auto* tr = tape ? tape->traces[static_cast<std::size_t>(s)].data() : nullptr;
        if (cfg.scheme == IntegratorConfig::Scheme::Euler) {
            x += h * eval(x, t, tr ? &tr[0] : nullptr);
        } else {
            const MatX3 k1 = eval(x, t, tr ? &tr[0] : nullptr);
            const MatX3 k2 = eval(x + (0.5 * h) * k1, t + 0.5 * h, tr ? &tr[1] : nullptr);
            const MatX3 k3 = eval(x + (0.5 * h) * k2, t + 0.5 * h, tr ? &tr[2] : nullptr);
            const MatX3 k4 = eval(x + h * k3, t + h, tr ? &tr[3] : nullptr);
            x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if (!x.allFinite())
            throw std::runtime_error("advection diverged at substep " + std::to_string(s));
    }
    return x;
}

// Backpropagates d(loss)/d(x_end) through the tape into velocity-net
// parameter gradients and the pair-code gradient.
void advect_net_backward(const VelocityField& vel, const AdvectTape& tape, const MatX3& xbar_end,
                         MlpGrads& vgrads, VectorXd& code_grad) {
    const double h = tape.h;
    MatX3 xbar = xbar_end;
    MatrixXd input_grad;
    auto stage_backward = [&](const MlpTrace& trace, const MatX3& adj) -> MatX3 {
        JetAdjoint ja;
        ja.value = adj;
        mlp_backward(vel.net, trace, ja, &vgrads, &input_grad);
        code_grad += input_grad.rightCols(code_grad.size()).colwise().sum().transpose();
        return input_grad.leftCols(3);
    };
    for (int s = tape.steps - 1; s >= 0; --s) {
        const auto& tr = tape.traces[static_cast<std::size_t>(s)];
        if (tape.scheme == IntegratorConfig::Scheme::Euler) {
            const MatX3 g1 = stage_backward(tr[0], h * xbar);
            xbar += g1;
        } else {
            const MatX3 g4 = stage_backward(tr[3], (h / 6.0) * xbar);
            const MatX3 g3 = stage_backward(tr[2], (h / 3.0) * xbar + h * g4);
            const MatX3 g2 = stage_backward(tr[1], (h / 3.0) * xbar + (0.5 * h) * g3);
            const MatX3 g1 = stage_backward(tr[0], (h / 6.0) * xbar + (0.5 * h) * g2);
            xbar += g1 + g2 + g3 + g4;
        }
    }
}

// ---- adjoint seeding for the field networks ---------------------------------

void backward_phi(const ImplicitField& f, const MlpTrace& trace, const PhiAdjoint& pa,
                  MlpGrads* grads, VectorXd* code_grad) {
    JetAdjoint ja;
    ja.value = pa.phi;
    ja.first.resize(4);
    for (int k = 0; k < 3; ++k) ja.first[static_cast<std::size_t>(k)] = pa.grad.col(k);
    ja.first[3] = pa.dt;
    MatrixXd input_grad;
    mlp_backward(f.net, trace, ja, grads, code_grad ? &input_grad : nullptr);
    if (code_grad) {
        *code_grad += input_grad.rightCols(code_grad->size()).colwise().sum().transpose();
    }
}

void backward_vel(const VelocityField& f, const MlpTrace& trace, const VelocityAdjoint& va,
                  bool with_laplacian, MlpGrads* grads, VectorXd* code_grad) {
    JetAdjoint ja;
    const Eigen::Index n = va.v.rows();
    ja.value = va.v;
    ja.first.resize(3);
    for (int j = 0; j < 3; ++j) {
        MatrixXd adj(n, 3);
        for (Eigen::Index p = 0; p < n; ++p)
            for (int i = 0; i < 3; ++i) adj(p, i) = va.jacobian[static_cast<std::size_t>(p)](i, j);
        ja.first[static_cast<std::size_t>(j)] = std::move(adj);
    }
    if (with_laplacian) {
        // laplacian = sum_k second[k]; the adjoint broadcasts to each slot
        ja.second.assign(3, va.laplacian);
    }
    MatrixXd input_grad;
    mlp_backward(f.net, trace, ja, grads, code_grad ? &input_grad : nullptr);
    if (code_grad) {
        *code_grad += input_grad.rightCols(code_grad->size()).colwise().sum().transpose();
    }
}

void check_finite(double value, const char* term) {
    if (!std::isfinite(value))
        throw std::runtime_error(std::string("non-finite loss term ") + term);
}

}  // namespace

LossBreakdown compute_losses(const ImplicitField& phi, const VelocityField& vel,
                             const SampleBatch& batch, const LossWeights& weights,
                             const IntegratorConfig& integrator, PairGrads* grads,
                             Eigen::Index* degenerate_tally) {
    const Eigen::Index n_times = batch.times.size();
    const double wt = 1.0 / static_cast<double>(n_times);
    const bool with_lap = weights.lambda_s > 0.0;
    LossBreakdown bd;
    Eigen::Index degenerate = 0;

    // Volume terms at every time stamp.
    for (Eigen::Index ti = 0; ti < n_times; ++ti) {
        const double t = batch.times[ti];
        FieldQuery q{batch.volume_points, t, batch.code, false};
        MlpTrace phi_trace, vel_trace;
        const PhiTerms pt = eval_phi_terms(phi, q, grads ? &phi_trace : nullptr);
        const VelocityTerms vt = eval_velocity_terms(vel, q, with_lap, grads ? &vel_trace : nullptr);

        PhiAdjoint pa = PhiAdjoint::zeros(batch.volume_points.rows());
        VelocityAdjoint va = VelocityAdjoint::zeros(batch.volume_points.rows());
        PointMask mask;
        bd.li += wt * level_set_loss_backward(pt, vt, weights, weights.lambda_i * wt, pa, va, &mask);
        degenerate += mask.excluded;
        if (with_lap) bd.ls += wt * smoothness_loss_backward(vt, weights, weights.lambda_s * wt, va);
        bd.lv += wt * volume_loss_backward(vt.jacobian, weights.lambda_v * wt, va);
        bd.ld += wt * distortion_loss_backward(vt.jacobian, weights.lambda_d * wt, va);
        bd.lst += wt * stretching_loss_backward(vt.jacobian, pt.grad, weights.lambda_st * wt, pa,
                                                va, nullptr);
        // Repulsion keeps the zero set tight at every sampled time; the
        // Eikonal mean applies at the pinned endpoints (the correction term
        // inside L_i maintains the gradient norm in between).
        bd.lrecon += wt * recon_repulsion_backward(pt, weights.lambda_recon * wt, pa);
        if (ti == 0 || ti == n_times - 1) {
            bd.lrecon += 0.5 * recon_eikonal_backward(pt, 0.5 * weights.lambda_recon, pa);
        }
        if (grads) {
            backward_phi(phi, phi_trace, pa, &grads->phi, &grads->code);
            backward_vel(vel, vel_trace, va, with_lap, &grads->vel, &grads->code);
        }
    }

    // Boundary pinning at the endpoint surfaces; when the clouds are
    // oriented, also align grad phi with the sampled normals (the sign-blind
    // terms alone leave inside/outside underdetermined).
    for (int side = 0; side < 2; ++side) {
        const MatX3& pts = side == 0 ? batch.surface_points_0 : batch.surface_points_1;
        const MatX3& nrm = side == 0 ? batch.surface_normals_0 : batch.surface_normals_1;
        if (pts.rows() == 0) continue;
        const bool oriented = nrm.rows() == pts.rows();
        FieldQuery q{pts, side == 0 ? 0.0 : 1.0, batch.code, false};
        MlpTrace trace;
        if (oriented) {
            PhiTerms pt = eval_phi_terms(phi, q, grads ? &trace : nullptr);
            PhiAdjoint pa = PhiAdjoint::zeros(pts.rows());
            bd.lrecon += recon_boundary_backward(pt.phi, weights.lambda_recon, pa.phi);
            bd.lrecon += recon_normal_backward(pt.grad, nrm, weights.lambda_recon, pa.grad);
            if (grads) backward_phi(phi, trace, pa, &grads->phi, &grads->code);
        } else {
            JetResult jet = mlp_eval(phi.net, field_input(q), {}, grads ? &trace : nullptr);
            VectorXd phi_vals = jet.value.col(0);
            VectorXd phi_adj = VectorXd::Zero(phi_vals.size());
            bd.lrecon += recon_boundary_backward(phi_vals, weights.lambda_recon, phi_adj);
            if (grads) {
                JetAdjoint ja;
                ja.value = phi_adj;
                MatrixXd input_grad;
                mlp_backward(phi.net, trace, ja, &grads->phi, &input_grad);
                grads->code += input_grad.rightCols(grads->code.size()).colwise().sum().transpose();
            }
        }
    }

    // Matching term: advect matched sources across [0, 1].
    if (weights.lambda_m > 0.0) {
        if (batch.matched_src.rows() == 0) throw std::invalid_argument("pair has no correspondences");
        AdvectTape tape;
        const MatX3 end = advect_net_forward(vel, batch.code, batch.matched_src, 0.0, 1.0,
                                             integrator, grads ? &tape : nullptr);
        const MatX3 err = end - batch.matched_dst;
        bd.lm = err.rowwise().squaredNorm().mean();
        if (grads) {
            const MatX3 xbar =
                (weights.lambda_m * 2.0 / static_cast<double>(err.rows())) * err;
            advect_net_backward(vel, tape, xbar, grads->vel, grads->code);
        }
    }

    // Normal transport between matched endpoints, when enabled.
    if (weights.lambda_n > 0.0) {
        if (batch.matched_normals_0.rows() == 0 || batch.matched_normals_1.rows() == 0)
            throw std::invalid_argument("normal deformation loss requires input normals");
        FieldQuery q{batch.matched_src, 0.0, batch.code, false};
        MlpTrace trace;
        const VelocityTerms vt = eval_velocity_terms(vel, q, false, grads ? &trace : nullptr);
        VelocityAdjoint va = VelocityAdjoint::zeros(batch.matched_src.rows());
        bd.ln = normal_deformation_loss_backward(batch.matched_normals_0, batch.matched_normals_1,
                                                 vt.jacobian, weights.lambda_n, va);
        if (grads) backward_vel(vel, trace, va, false, &grads->vel, &grads->code);
    }

    total_loss(bd, weights);
    check_finite(bd.li, "L_i");
    check_finite(bd.lm, "L_m");
    check_finite(bd.ls, "L_s");
    check_finite(bd.lv, "L_v");
    check_finite(bd.lst, "L_st");
    check_finite(bd.ld, "L_d");
    check_finite(bd.ln, "L_n");
    check_finite(bd.lrecon, "L_recon");
    if (degenerate_tally) *degenerate_tally += degenerate;
    return bd;
}

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_init(AdamState& st, Eigen::Index n) {
    st.m = VectorXd::Zero(n);
    st.v = VectorXd::Zero(n);
    st.t = 0;
}

void adam_update(VectorXd& theta, AdamState& st, const VectorXd& grad, double lr) {
    st.t += 1;
    st.m = kAdamBeta1 * st.m + (1.0 - kAdamBeta1) * grad;
    st.v = kAdamBeta2 * st.v + (1.0 - kAdamBeta2) * grad.cwiseProduct(grad);
    const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(st.t));
    const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(st.t));
    theta -= (lr / bias1) * st.m.cwiseQuotient(((st.v / bias2).cwiseSqrt().array() + kAdamEps).matrix());
}

}  // namespace

StepResult train_step(TrainState& state, const SampleBatch& batch, double lr_scale) {
    const TrainConfig& cfg = state.config;
    PairGrads grads{MlpGrads::zeros_like(state.phi.net), MlpGrads::zeros_like(state.vel.net),
                    VectorXd::Zero(batch.code.size())};
    StepResult result;
    result.breakdown = compute_losses(state.phi, state.vel, batch, cfg.weights,
                                      cfg.train_integrator, &grads, &result.degenerate_points);

    const int m = state.latents.dim();
    const Eigen::Index row0 = state.latents.row_of(batch.frame_0);
    const Eigen::Index row1 = state.latents.row_of(batch.frame_1);
    VectorXd g0 = grads.code.head(m);
    VectorXd g1 = grads.code.tail(m);
    // AutoDecoder ridge on the active codes.
    g0 += 2.0 * cfg.latent_reg * state.latents.codes.row(row0).transpose();
    g1 += 2.0 * cfg.latent_reg * state.latents.codes.row(row1).transpose();

    const double lr_f = cfg.lr_fields * lr_scale;
    const double lr_z = cfg.lr_latents * lr_scale;
    VectorXd theta = state.phi.net.to_flat();
    adam_update(theta, state.opt_phi, grads.phi.to_flat(), lr_f);
    state.phi.net.from_flat(theta);

    theta = state.vel.net.to_flat();
    adam_update(theta, state.opt_vel, grads.vel.to_flat(), lr_f);
    state.vel.net.from_flat(theta);

    VectorXd z = state.latents.codes.row(row0).transpose();
    adam_update(z, state.opt_latents[static_cast<std::size_t>(row0)], g0, lr_z);
    state.latents.codes.row(row0) = z.transpose();
    z = state.latents.codes.row(row1).transpose();
    adam_update(z, state.opt_latents[static_cast<std::size_t>(row1)], g1, lr_z);
    state.latents.codes.row(row1) = z.transpose();

    state.step += 1;
    return result;
}

TrainState train(const PairDataset& dataset, const TrainConfig& cfg,
                 const std::string& checkpoint_dir, const StepLogger& logger) {
    cfg.validate();
    dataset.validate();
    TrainState state;
    state.config = cfg;
    Rng root(cfg.seed);
    Rng phi_rng = root.fork(101);
    Rng vel_rng = root.fork(102);
    state.phi = make_implicit_field(cfg.fields, phi_rng);
    state.vel = make_velocity_field(cfg.fields, vel_rng);
    state.latents = init_latents(dataset.frame_ids(), cfg.fields.latent_dim,
                                 root.fork(103).next_u64());
    adam_init(state.opt_phi, static_cast<Eigen::Index>(state.phi.net.parameter_count()));
    adam_init(state.opt_vel, static_cast<Eigen::Index>(state.vel.net.parameter_count()));
    state.opt_latents.resize(static_cast<std::size_t>(state.latents.codes.rows()));
    for (auto& st : state.opt_latents) adam_init(st, cfg.fields.latent_dim);
    state.normalization = dataset.normalization;
    state.pairs.clear();
    for (std::size_t i = 0; i < dataset.pairs.size(); ++i) {
        state.pairs.push_back({static_cast<int>(i), dataset.pairs[i].source.frame_id,
                               dataset.pairs[i].target.frame_id});
    }
    return train_continue(std::move(state), dataset, checkpoint_dir, logger);
}

TrainState train_continue(TrainState state, const PairDataset& dataset,
                          const std::string& checkpoint_dir, const StepLogger& logger) {
    const TrainConfig& cfg = state.config;
    const std::int64_t n_pairs = static_cast<std::int64_t>(dataset.pairs.size());
    const std::int64_t total_steps =
        static_cast<std::int64_t>(cfg.epochs) * n_pairs * cfg.steps_per_pair;
    const Rng root(cfg.seed);
    for (std::int64_t s = state.step; s < total_steps; ++s) {
        const std::int64_t pair_idx = (s / cfg.steps_per_pair) % n_pairs;
        Rng batch_rng = root.fork(0xBA7C4ULL + static_cast<std::uint64_t>(s));
        SampleBatch batch =
            build_batch(dataset.pairs[static_cast<std::size_t>(pair_idx)], cfg, state.latents, batch_rng);
        // cosine decay toward lr * lr_decay; a pure function of the step
        // index, so interrupted runs resume on the same schedule
        double lr_scale = 1.0;
        if (cfg.lr_decay < 1.0 && total_steps > 1) {
            const double progress = static_cast<double>(s) / static_cast<double>(total_steps - 1);
            lr_scale = cfg.lr_decay +
                       (1.0 - cfg.lr_decay) * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
        }
        StepResult res = train_step(state, batch, lr_scale);
        if (logger) logger(s, static_cast<int>(pair_idx), res.breakdown);
        if (!checkpoint_dir.empty() && (state.step % cfg.checkpoint_interval == 0)) {
            state.save(checkpoint_dir + "/checkpoint_latest.vfc");
        }
    }
    if (!checkpoint_dir.empty()) state.save(checkpoint_dir + "/checkpoint_latest.vfc");
    return state;
}

// ---- checkpoint archive ------------------------------------------------------

namespace {

void put_net(Archive& a, const std::string& prefix, const MlpParams& net,
             const std::string& dtype) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        a.tensors[prefix + "/layer" + std::to_string(l) + "/W"] =
            Tensor::from_matrix(net.layers[l].W, dtype);
        a.tensors[prefix + "/layer" + std::to_string(l) + "/b"] =
            Tensor::from_vector(net.layers[l].b, dtype);
    }
}

MlpParams get_net(const Archive& a, const std::string& prefix, const FieldConfig& cfg, int out_dim) {
    MlpParams net;
    net.activation = Activation::Sine;
    net.omega_first = cfg.omega0;
    net.omega_hidden = cfg.omega0;
    const int layer_count = cfg.hidden_layers + 1;
    for (int l = 0; l < layer_count; ++l) {
        DenseLayer layer;
        layer.W = a.at(prefix + "/layer" + std::to_string(l) + "/W").matrix();
        layer.b = a.at(prefix + "/layer" + std::to_string(l) + "/b").data;
        net.layers.push_back(std::move(layer));
    }
    if (net.output_dim() != out_dim) throw std::runtime_error("checkpoint: unexpected net output");
    return net;
}

}  // namespace

void TrainState::save(const std::string& path, const std::string& dtype) const {
    Archive a;
    a.manifest["kind"] = "veloform_checkpoint";
    a.manifest["version"] = kToolVersion;
    a.manifest["step"] = step;
    a.manifest["config"] = to_json(config);
    a.manifest["normalization"] = {
        {"scale", normalization.scale},
        {"translation",
         {normalization.translation.x(), normalization.translation.y(), normalization.translation.z()}}};
    nlohmann::json jpairs = nlohmann::json::array();
    for (const auto& p : pairs)
        jpairs.push_back({{"id", p.id}, {"frame_0", p.frame_0}, {"frame_1", p.frame_1}});
    a.manifest["pairs"] = jpairs;
    a.manifest["frame_ids"] = latents.frame_ids;
    a.manifest["adam_t"] = {{"phi", opt_phi.t}, {"vel", opt_vel.t}};
    nlohmann::json lat_t = nlohmann::json::array();
    for (const auto& st : opt_latents) lat_t.push_back(st.t);
    a.manifest["adam_t"]["latents"] = lat_t;

    put_net(a, "phi", phi.net, dtype);
    put_net(a, "vel", vel.net, dtype);
    a.tensors["latents"] = Tensor::from_matrix(latents.codes, dtype);
    a.tensors["opt/phi/m"] = Tensor::from_vector(opt_phi.m, dtype);
    a.tensors["opt/phi/v"] = Tensor::from_vector(opt_phi.v, dtype);
    a.tensors["opt/vel/m"] = Tensor::from_vector(opt_vel.m, dtype);
    a.tensors["opt/vel/v"] = Tensor::from_vector(opt_vel.v, dtype);
    for (std::size_t i = 0; i < opt_latents.size(); ++i) {
        a.tensors["opt/latent" + std::to_string(i) + "/m"] =
            Tensor::from_vector(opt_latents[i].m, dtype);
        a.tensors["opt/latent" + std::to_string(i) + "/v"] =
            Tensor::from_vector(opt_latents[i].v, dtype);
    }
    a.save(path);
}

TrainState TrainState::load(const std::string& path) {
    const Archive a = Archive::load(path);
    if (a.manifest.value("kind", "") != "veloform_checkpoint")
        throw std::runtime_error(path + ": not a veloform checkpoint");
    TrainState st;
    st.config = train_config_from_json(a.manifest.at("config"));
    st.step = a.manifest.at("step");
    st.normalization.scale = a.manifest.at("normalization").at("scale");
    const auto& tr = a.manifest.at("normalization").at("translation");
    st.normalization.translation = Vec3(tr.at(0), tr.at(1), tr.at(2));
    for (const auto& p : a.manifest.at("pairs")) {
        st.pairs.push_back({p.at("id"), p.at("frame_0"), p.at("frame_1")});
    }
    st.phi.net = get_net(a, "phi", st.config.fields, 1);
    st.vel.net = get_net(a, "vel", st.config.fields, 3);
    st.latents.frame_ids = a.manifest.at("frame_ids").get<std::vector<int>>();
    st.latents.codes = a.at("latents").matrix();
    st.latents.validate();

    st.opt_phi.m = a.at("opt/phi/m").data;
    st.opt_phi.v = a.at("opt/phi/v").data;
    st.opt_vel.m = a.at("opt/vel/m").data;
    st.opt_vel.v = a.at("opt/vel/v").data;
    st.opt_phi.t = a.manifest.at("adam_t").at("phi");
    st.opt_vel.t = a.manifest.at("adam_t").at("vel");
    const auto lat_t = a.manifest.at("adam_t").at("latents");
    st.opt_latents.resize(static_cast<std::size_t>(st.latents.codes.rows()));
    for (std::size_t i = 0; i < st.opt_latents.size(); ++i) {
        st.opt_latents[i].m = a.at("opt/latent" + std::to_string(i) + "/m").data;
        st.opt_latents[i].v = a.at("opt/latent" + std::to_string(i) + "/v").data;
        st.opt_latents[i].t = lat_t.at(i);
    }
    return st;
}

}  // namespace veloform
