#include "veloform/fields.hpp"

#include <algorithm>
#include <stdexcept>

namespace veloform {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::Index LatentTable::row_of(int frame_id) const {
    auto it = std::find(frame_ids.begin(), frame_ids.end(), frame_id);
    if (it == frame_ids.end())
        throw std::invalid_argument("latent table has no frame " + std::to_string(frame_id));
    return static_cast<Eigen::Index>(it - frame_ids.begin());
}

Eigen::VectorXd LatentTable::pair_code(int frame_0, int frame_1) const {
    VectorXd z(2 * dim());
    z.head(dim()) = code(frame_0);
    z.tail(dim()) = code(frame_1);
    return z;
}

void LatentTable::validate() const {
    if (static_cast<Eigen::Index>(frame_ids.size()) != codes.rows())
        throw std::invalid_argument("latent table frame/code count mismatch");
    if (!codes.allFinite()) throw std::invalid_argument("latent codes must be finite");
    std::vector<int> sorted = frame_ids;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw std::invalid_argument("duplicate frame id in latent table");
}

ImplicitField make_implicit_field(const FieldConfig& cfg, Rng& rng) {
    return {make_siren(4 + 2 * cfg.latent_dim, 1, cfg.hidden_layers, cfg.width, cfg.omega0, rng)};
}

VelocityField make_velocity_field(const FieldConfig& cfg, Rng& rng) {
    return {make_siren(4 + 2 * cfg.latent_dim, 3, cfg.hidden_layers, cfg.width, cfg.omega0, rng)};
}

void FieldQuery::validate(int expected_code_dim) const {
    if (code.size() != expected_code_dim)
        throw std::invalid_argument("field query code dimension mismatch");
    if (!points.allFinite() || !code.allFinite())
        throw std::invalid_argument("field query has non-finite values");
    if (!allow_time_extrapolation && (time < 0.0 || time > 1.0))
        throw std::invalid_argument("query time outside [0,1] without extrapolation flag");
}

Eigen::MatrixXd field_input(const FieldQuery& q) {
    const Eigen::Index n = q.points.rows();
    MatrixXd X(n, 4 + q.code.size());
    X.leftCols(3) = q.points;
    X.col(3).setConstant(q.time);
    X.rightCols(q.code.size()) = q.code.transpose().replicate(n, 1);
    return X;
}

namespace {

int code_dim_of(const MlpParams& net) { return net.input_dim() - 4; }

const JetSpec kSpatialSpec{{0, 1, 2}, false};
const JetSpec kSpatialTimeSpec{{0, 1, 2, 3}, false};
const JetSpec kSpatialSecondSpec{{0, 1, 2}, true};

}  // namespace

Eigen::VectorXd eval_phi(const ImplicitField& f, const FieldQuery& q) {
    q.validate(code_dim_of(f.net));
    return mlp_forward(f.net, field_input(q)).col(0);
}

MatX3 grad_phi(const ImplicitField& f, const FieldQuery& q) {
    q.validate(code_dim_of(f.net));
    JetResult jet = mlp_eval(f.net, field_input(q), kSpatialSpec);
    MatX3 g(q.points.rows(), 3);
    for (int k = 0; k < 3; ++k) g.col(k) = jet.first[k].col(0);
    return g;
}

Eigen::VectorXd dphi_dt(const ImplicitField& f, const FieldQuery& q) {
    q.validate(code_dim_of(f.net));
    JetSpec time_only{{3}, false};
    return mlp_eval(f.net, field_input(q), time_only).first[0].col(0);
}

PhiTerms eval_phi_terms(const ImplicitField& f, const FieldQuery& q, MlpTrace* trace) {
    q.validate(code_dim_of(f.net));
    JetResult jet = mlp_eval(f.net, field_input(q), kSpatialTimeSpec, trace);
    PhiTerms out;
    out.phi = jet.value.col(0);
    out.grad.resize(q.points.rows(), 3);
    for (int k = 0; k < 3; ++k) out.grad.col(k) = jet.first[k].col(0);
    out.dt = jet.first[3].col(0);
    return out;
}

MatX3 eval_velocity(const VelocityField& f, const FieldQuery& q) {
    q.validate(code_dim_of(f.net));
    return mlp_forward(f.net, field_input(q));
}

std::vector<Mat3> velocity_jacobian(const VelocityField& f, const FieldQuery& q) {
    q.validate(code_dim_of(f.net));
    JetResult jet = mlp_eval(f.net, field_input(q), kSpatialSpec);
    std::vector<Mat3> jac(static_cast<std::size_t>(q.points.rows()));
    for (Eigen::Index n = 0; n < q.points.rows(); ++n) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) jac[static_cast<std::size_t>(n)](i, j) = jet.first[j](n, i);
    }
    return jac;
}

Eigen::VectorXd velocity_divergence(const VelocityField& f, const FieldQuery& q) {
    q.validate(code_dim_of(f.net));
    JetResult jet = mlp_eval(f.net, field_input(q), kSpatialSpec);
    return jet.first[0].col(0) + jet.first[1].col(1) + jet.first[2].col(2);
}

MatX3 velocity_laplacian(const VelocityField& f, const FieldQuery& q, LaplacianMode mode,
                         double fd_step) {
    q.validate(code_dim_of(f.net));
    if (mode == LaplacianMode::Exact) {
        JetResult jet = mlp_eval(f.net, field_input(q), kSpatialSecondSpec);
        return jet.second[0] + jet.second[1] + jet.second[2];
    }
    // 7-point stencil: center plus +-h along each axis.
    const MatrixXd X = field_input(q);
    const MatrixXd center = mlp_forward(f.net, X);
    MatrixXd lap = -6.0 * center;
    for (int axis = 0; axis < 3; ++axis) {
        MatrixXd Xp = X, Xm = X;
        Xp.col(axis).array() += fd_step;
        Xm.col(axis).array() -= fd_step;
        lap += mlp_forward(f.net, Xp) + mlp_forward(f.net, Xm);
    }
    return lap / (fd_step * fd_step);
}

VelocityTerms eval_velocity_terms(const VelocityField& f, const FieldQuery& q, bool with_laplacian,
                                  MlpTrace* trace) {
    q.validate(code_dim_of(f.net));
    JetSpec spec = with_laplacian ? kSpatialSecondSpec : kSpatialSpec;
    JetResult jet = mlp_eval(f.net, field_input(q), spec, trace);
    VelocityTerms out;
    out.v = jet.value;
    out.jacobian.resize(static_cast<std::size_t>(q.points.rows()));
    for (Eigen::Index n = 0; n < q.points.rows(); ++n) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                out.jacobian[static_cast<std::size_t>(n)](i, j) = jet.first[j](n, i);
    }
    if (with_laplacian) out.laplacian = jet.second[0] + jet.second[1] + jet.second[2];
    return out;
}

}  // namespace veloform
