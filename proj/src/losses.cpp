#include "veloform/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace veloform {

using Eigen::VectorXd;

void LossWeights::validate() const {
    const double all[] = {lambda_i, lambda_s, lambda_v, lambda_st, lambda_d, lambda_m,
                          lambda_n, lambda_recon, lambda_l, alpha, gamma};
    for (double v : all) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("loss weights must be nonnegative and finite");
    }
    if (lambda_recon <= 0.0)
        throw std::invalid_argument("lambda_recon must be positive (the surface must be pinned)");
}

void SampleBatch::validate(const AxisAlignedDomain& domain) const {
    if (times.size() < 2) throw std::invalid_argument("batch needs at least 2 time stamps");
    const Eigen::Index T = times.size() - 1;
    for (Eigen::Index i = 0; i <= T; ++i) {
        if (times[i] != static_cast<double>(i) / static_cast<double>(T))
            throw std::invalid_argument("times must be the uniform grid {0, 1/T, ..., 1}");
    }
    for (Eigen::Index i = 0; i < volume_points.rows(); ++i) {
        if (!domain.contains(volume_points.row(i).transpose()))
            throw std::invalid_argument("volume point outside domain");
    }
    if (matched_src.rows() != matched_dst.rows())
        throw std::invalid_argument("matched pair row mismatch");
    if (!code.allFinite()) throw std::invalid_argument("batch code must be finite");
}

PointMask gradient_mask(const MatX3& grad, double eps) {
    PointMask mask;
    mask.valid.assign(static_cast<std::size_t>(grad.rows()), 1);
    for (Eigen::Index i = 0; i < grad.rows(); ++i) {
        if (grad.row(i).norm() <= eps) {
            mask.valid[static_cast<std::size_t>(i)] = 0;
            ++mask.excluded;
        }
    }
    return mask;
}

Eigen::VectorXd eikonal_correction(const MatX3& grad_phi, const std::vector<Mat3>& jac_v,
                                   PointMask* mask) {
    if (static_cast<std::size_t>(grad_phi.rows()) != jac_v.size())
        throw std::invalid_argument("eikonal_correction: batch size mismatch");
    PointMask local = gradient_mask(grad_phi);
    VectorXd out = VectorXd::Zero(grad_phi.rows());
    for (Eigen::Index i = 0; i < grad_phi.rows(); ++i) {
        if (!local.valid[static_cast<std::size_t>(i)]) continue;
        const Vec3 n = grad_phi.row(i).normalized().transpose();
        out[i] = -n.dot(jac_v[static_cast<std::size_t>(i)] * n);
    }
    if (mask) *mask = std::move(local);
    return out;
}

namespace {

// Level-set residual per point; shared by the value and backward paths.
VectorXd level_set_residual(const PhiTerms& phi, const VelocityTerms& vel, double lambda_l,
                            const VectorXd& correction) {
    VectorXd r = phi.dt;
    r += (vel.v.array() * phi.grad.array()).rowwise().sum().matrix();
    r += lambda_l * phi.phi.cwiseProduct(correction);
    return r;
}

}  // namespace

double level_set_loss(const PhiTerms& phi, const VelocityTerms& vel, const LossWeights& w,
                      PointMask* mask) {
    PointMask local;
    const VectorXd correction = eikonal_correction(phi.grad, vel.jacobian, &local);
    const VectorXd r = level_set_residual(phi, vel, w.lambda_l, correction);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        if (local.valid[static_cast<std::size_t>(i)]) acc += r[i] * r[i];
    }
    const Eigen::Index n = local.valid_count();
    if (mask) *mask = std::move(local);
    return n > 0 ? acc / static_cast<double>(n) : 0.0;
}

double matching_loss(const MatX3& matched_src, const MatX3& matched_dst,
                     const VelocityFn& velocity, const IntegratorConfig& integrator) {
    if (matched_src.rows() == 0) throw std::invalid_argument("pair has no correspondences");
    if (matched_src.rows() != matched_dst.rows())
        throw std::invalid_argument("matched pair row mismatch");
    const MatX3 end = advect_points(matched_src, velocity, 0.0, 1.0, integrator);
    return (end - matched_dst).rowwise().squaredNorm().mean();
}

double smoothness_loss(const VelocityTerms& vel, const LossWeights& w) {
    if (vel.laplacian.rows() != vel.v.rows())
        throw std::invalid_argument("smoothness_loss needs the velocity Laplacian");
    return (-w.alpha * vel.laplacian + w.gamma * vel.v).rowwise().squaredNorm().mean();
}

double volume_loss(const Eigen::VectorXd& divergence) {
    if (divergence.size() == 0) throw std::invalid_argument("volume_loss: empty batch");
    return divergence.cwiseAbs().mean();
}

std::vector<Mat3> rate_of_deformation(const std::vector<Mat3>& jac_v) {
    std::vector<Mat3> D(jac_v.size());
    for (std::size_t i = 0; i < jac_v.size(); ++i) D[i] = 0.5 * (jac_v[i] + jac_v[i].transpose());
    return D;
}

namespace {

double deviatoric_j2(const Mat3& D) {
    const double tr = D.trace();
    return 0.5 * (D * D).trace() - tr * tr / 6.0;
}

}  // namespace

double distortion_loss(const std::vector<Mat3>& D) {
    if (D.empty()) throw std::invalid_argument("distortion_loss: empty batch");
    double acc = 0.0;
    for (const auto& d : D) {
        if ((d - d.transpose()).cwiseAbs().maxCoeff() > 1e-8)
            throw std::invalid_argument("distortion_loss: tensor not symmetric");
        acc += std::abs(deviatoric_j2(d));
    }
    return acc / static_cast<double>(D.size());
}

std::vector<Mat3> tangent_projector(const MatX3& grad_phi, PointMask* mask) {
    PointMask local = gradient_mask(grad_phi);
    std::vector<Mat3> P(static_cast<std::size_t>(grad_phi.rows()), Mat3::Identity());
    for (Eigen::Index i = 0; i < grad_phi.rows(); ++i) {
        if (!local.valid[static_cast<std::size_t>(i)]) continue;
        const Vec3 n = grad_phi.row(i).normalized().transpose();
        P[static_cast<std::size_t>(i)] = Mat3::Identity() - n * n.transpose();
    }
    if (mask) *mask = std::move(local);
    return P;
}

namespace {

Mat3 stretching_inner(const Mat3& J) { return J.transpose() * J + J + J.transpose(); }

}  // namespace

double stretching_loss(const std::vector<Mat3>& jac_v, const std::vector<Mat3>& projectors,
                       const PointMask* mask) {
    if (jac_v.size() != projectors.size())
        throw std::invalid_argument("stretching_loss: batch size mismatch");
    if (jac_v.empty()) throw std::invalid_argument("stretching_loss: empty batch");
    double acc = 0.0;
    Eigen::Index n = 0;
    for (std::size_t i = 0; i < jac_v.size(); ++i) {
        if (mask && !mask->valid[i]) continue;
        const Mat3& P = projectors[i];
        acc += (P.transpose() * stretching_inner(jac_v[i]) * P).norm();
        ++n;
    }
    return n > 0 ? acc / static_cast<double>(n) : 0.0;
}

double normal_deformation_loss(const MatX3& normals_0, const MatX3& normals_1,
                               const std::vector<Mat3>& jac_v) {
    if (normals_0.rows() == 0 || normals_1.rows() == 0)
        throw std::invalid_argument("normal deformation loss requires input normals");
    if (normals_0.rows() != normals_1.rows() ||
        static_cast<std::size_t>(normals_0.rows()) != jac_v.size())
        throw std::invalid_argument("normal_deformation_loss: batch size mismatch");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < normals_0.rows(); ++i) {
        const Mat3 F = Mat3::Identity() + jac_v[static_cast<std::size_t>(i)];
        const Vec3 m = F.transpose() * normals_1.row(i).transpose();
        const double len = m.norm();
        if (len <= kGradEps) continue;
        acc += (normals_0.row(i).transpose() - m / len).squaredNorm();
    }
    return acc / static_cast<double>(normals_0.rows());
}

ReconTerms reconstruction_terms(const Eigen::VectorXd& phi_surface_0,
                                const Eigen::VectorXd& phi_surface_1,
                                const std::vector<PhiTerms>& phi_volume_endpoints) {
    ReconTerms out;
    if (phi_surface_0.size()) out.boundary_0 = phi_surface_0.cwiseAbs().mean();
    if (phi_surface_1.size()) out.boundary_1 = phi_surface_1.cwiseAbs().mean();
    Eigen::Index n = 0;
    double eik = 0.0, rep = 0.0;
    for (const auto& pt : phi_volume_endpoints) {
        for (Eigen::Index i = 0; i < pt.phi.size(); ++i) {
            const double gn = pt.grad.row(i).norm();
            eik += (gn - 1.0) * (gn - 1.0);
            rep += std::exp(-100.0 * std::abs(pt.phi[i]));
            ++n;
        }
    }
    if (n > 0) {
        out.eikonal = eik / static_cast<double>(n);
        out.repulsion = rep / static_cast<double>(n);
    }
    return out;
}

double reconstruction_loss(const ImplicitField& f, const MatX3& surface_points_0,
                           const MatX3& surface_points_1, const MatX3& volume_points,
                           const Eigen::VectorXd& code) {
    FieldQuery q0{surface_points_0, 0.0, code, false};
    FieldQuery q1{surface_points_1, 1.0, code, false};
    const VectorXd phi0 = eval_phi(f, q0);
    const VectorXd phi1 = eval_phi(f, q1);
    std::vector<PhiTerms> vol;
    for (double t : {0.0, 1.0}) {
        FieldQuery qv{volume_points, t, code, false};
        vol.push_back(eval_phi_terms(f, qv));
    }
    return reconstruction_terms(phi0, phi1, vol).total();
}

double total_loss(LossBreakdown& terms, const LossWeights& w) {
    terms.total = w.lambda_i * terms.li + w.lambda_m * terms.lm + w.lambda_s * terms.ls +
                  w.lambda_v * terms.lv + w.lambda_st * terms.lst + w.lambda_d * terms.ld +
                  w.lambda_n * terms.ln + w.lambda_recon * terms.lrecon;
    return terms.total;
}

// ---- adjoints ---------------------------------------------------------------

PhiAdjoint PhiAdjoint::zeros(Eigen::Index n) {
    return {VectorXd::Zero(n), MatX3::Zero(n, 3), VectorXd::Zero(n)};
}

VelocityAdjoint VelocityAdjoint::zeros(Eigen::Index n) {
    return {MatX3::Zero(n, 3), std::vector<Mat3>(static_cast<std::size_t>(n), Mat3::Zero()),
            MatX3::Zero(n, 3)};
}

double level_set_loss_backward(const PhiTerms& phi, const VelocityTerms& vel,
                               const LossWeights& w, double scale, PhiAdjoint& phi_adj,
                               VelocityAdjoint& vel_adj, PointMask* mask_out) {
    PointMask mask;
    const VectorXd correction = eikonal_correction(phi.grad, vel.jacobian, &mask);
    const VectorXd r = level_set_residual(phi, vel, w.lambda_l, correction);
    const Eigen::Index n = mask.valid_count();
    if (n == 0) {
        if (mask_out) *mask_out = std::move(mask);
        return 0.0;
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        if (!mask.valid[static_cast<std::size_t>(i)]) continue;
        acc += r[i] * r[i];
        const double a = scale * 2.0 * r[i] / static_cast<double>(n);
        const Vec3 g = phi.grad.row(i).transpose();
        const Vec3 v = vel.v.row(i).transpose();
        const Mat3& J = vel.jacobian[static_cast<std::size_t>(i)];
        const double s = g.squaredNorm();
        const Vec3 gn = g / std::sqrt(s);

        phi_adj.dt[i] += a;
        phi_adj.phi[i] += a * w.lambda_l * correction[i];
        vel_adj.v.row(i) += a * g.transpose();
        // d r / d J = lambda_l * phi * (-gn gn^T)
        vel_adj.jacobian[static_cast<std::size_t>(i)] +=
            (a * w.lambda_l * phi.phi[i]) * (-(gn * gn.transpose()));
        // d r / d g = v + lambda_l * phi * dR/dg,
        // dR/dg = -(J + J^T) g / s + 2 (g^T J g) g / s^2
        const Vec3 dR_dg =
            (-(J + J.transpose()) * g) / s + (2.0 * g.dot(J * g) / (s * s)) * g;
        phi_adj.grad.row(i) += a * (v + w.lambda_l * phi.phi[i] * dR_dg).transpose();
    }
    if (mask_out) *mask_out = std::move(mask);
    return acc / static_cast<double>(n);
}

double smoothness_loss_backward(const VelocityTerms& vel, const LossWeights& w, double scale,
                                VelocityAdjoint& vel_adj) {
    const MatX3 r = -w.alpha * vel.laplacian + w.gamma * vel.v;
    const double n = static_cast<double>(r.rows());
    vel_adj.laplacian += (scale * 2.0 / n) * (-w.alpha) * r;
    vel_adj.v += (scale * 2.0 / n) * w.gamma * r;
    return r.rowwise().squaredNorm().mean();
}

double volume_loss_backward(const std::vector<Mat3>& jac_v, double scale,
                            VelocityAdjoint& vel_adj) {
    const double n = static_cast<double>(jac_v.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < jac_v.size(); ++i) {
        const double div = jac_v[i].trace();
        acc += std::abs(div);
        const double sign = div > 0.0 ? 1.0 : (div < 0.0 ? -1.0 : 0.0);
        vel_adj.jacobian[i] += (scale * sign / n) * Mat3::Identity();
    }
    return acc / n;
}

double distortion_loss_backward(const std::vector<Mat3>& jac_v, double scale,
                                VelocityAdjoint& vel_adj) {
    const double n = static_cast<double>(jac_v.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < jac_v.size(); ++i) {
        const Mat3 D = 0.5 * (jac_v[i] + jac_v[i].transpose());
        const double j2 = deviatoric_j2(D);
        acc += std::abs(j2);
        const double sign = j2 > 0.0 ? 1.0 : (j2 < 0.0 ? -1.0 : 0.0);
        // dJ2/dD = D - tr(D)/3 I; symmetrizing through D leaves it unchanged.
        vel_adj.jacobian[i] += (scale * sign / n) * (D - (D.trace() / 3.0) * Mat3::Identity());
    }
    return acc / n;
}

double stretching_loss_backward(const std::vector<Mat3>& jac_v, const MatX3& grad_phi,
                                double scale, PhiAdjoint& phi_adj, VelocityAdjoint& vel_adj,
                                PointMask* mask_out) {
    PointMask mask = gradient_mask(grad_phi);
    const Eigen::Index n = mask.valid_count();
    double acc = 0.0;
    for (std::size_t i = 0; i < jac_v.size(); ++i) {
        if (!mask.valid[i]) continue;
        const Vec3 g = grad_phi.row(static_cast<Eigen::Index>(i)).transpose();
        const double glen = g.norm();
        const Vec3 gn = g / glen;
        const Mat3 P = Mat3::Identity() - gn * gn.transpose();
        const Mat3& J = jac_v[i];
        const Mat3 M = stretching_inner(J);
        const Mat3 S = P * M * P;
        const double fro = S.norm();
        acc += fro;
        if (fro <= 1e-300) continue;
        const Mat3 GS = (scale / (static_cast<double>(n) * fro)) * S;
        // S = P M P
        const Mat3 GM = P * GS * P;
        const Mat3 GP = GS * P * M + M * P * GS;
        // M = J^T J + J + J^T
        vel_adj.jacobian[i] += 2.0 * J * GM + GM + GM.transpose();
        // P = I - gn gn^T
        const Vec3 d_gn = -(GP + GP.transpose()) * gn;
        phi_adj.grad.row(static_cast<Eigen::Index>(i)) +=
            ((Mat3::Identity() - gn * gn.transpose()) * d_gn / glen).transpose();
    }
    if (mask_out) *mask_out = std::move(mask);
    return n > 0 ? acc / static_cast<double>(n) : 0.0;
}

double normal_deformation_loss_backward(const MatX3& normals_0, const MatX3& normals_1,
                                        const std::vector<Mat3>& jac_v, double scale,
                                        VelocityAdjoint& vel_adj) {
    const double n = static_cast<double>(normals_0.rows());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < normals_0.rows(); ++i) {
        const Vec3 n0 = normals_0.row(i).transpose();
        const Vec3 n1 = normals_1.row(i).transpose();
        const Mat3 F = Mat3::Identity() + jac_v[static_cast<std::size_t>(i)];
        const Vec3 m = F.transpose() * n1;
        const double len = m.norm();
        if (len <= kGradEps) continue;
        const Vec3 mn = m / len;
        const Vec3 r = n0 - mn;
        acc += r.squaredNorm();
        const Vec3 d_mn = (scale / n) * (-2.0) * r;
        const Vec3 d_m = (Mat3::Identity() - mn * mn.transpose()) * d_mn / len;
        // m = F^T n1  =>  dL/dF = n1 d_m^T; F = I + J.
        vel_adj.jacobian[static_cast<std::size_t>(i)] += n1 * d_m.transpose();
    }
    return acc / n;
}

double recon_boundary_backward(const Eigen::VectorXd& phi_surface, double scale,
                               Eigen::VectorXd& phi_adj) {
    const double n = static_cast<double>(phi_surface.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < phi_surface.size(); ++i) {
        acc += std::abs(phi_surface[i]);
        const double sign = phi_surface[i] > 0.0 ? 1.0 : (phi_surface[i] < 0.0 ? -1.0 : 0.0);
        phi_adj[i] += scale * sign / n;
    }
    return acc / n;
}

double recon_normal_backward(const MatX3& grad_phi_surface, const MatX3& normals, double scale,
                             MatX3& grad_adj) {
    if (grad_phi_surface.rows() != normals.rows())
        throw std::invalid_argument("recon normal term: batch size mismatch");
    const double n = static_cast<double>(grad_phi_surface.rows());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < grad_phi_surface.rows(); ++i) {
        const Vec3 g = grad_phi_surface.row(i).transpose();
        const double glen = g.norm();
        if (glen <= kGradEps) {
            acc += 1.0;  // undefined direction counts as fully misaligned
            continue;
        }
        const Vec3 gn = g / glen;
        const Vec3 nrm = normals.row(i).transpose();
        acc += 1.0 - gn.dot(nrm);
        grad_adj.row(i) +=
            (scale / n) * (-(Mat3::Identity() - gn * gn.transpose()) * nrm / glen).transpose();
    }
    return acc / n;
}

double recon_eikonal_backward(const PhiTerms& phi_volume, double scale, PhiAdjoint& adj) {
    const double n = static_cast<double>(phi_volume.phi.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < phi_volume.phi.size(); ++i) {
        const double gn = phi_volume.grad.row(i).norm();
        acc += (gn - 1.0) * (gn - 1.0);
        if (gn > kGradEps) {
            adj.grad.row(i) +=
                (scale * 2.0 * (gn - 1.0) / n) * (phi_volume.grad.row(i) / gn);
        }
    }
    return acc / n;
}

double recon_repulsion_backward(const PhiTerms& phi_volume, double scale, PhiAdjoint& adj) {
    const double n = static_cast<double>(phi_volume.phi.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < phi_volume.phi.size(); ++i) {
        const double phi = phi_volume.phi[i];
        const double rep = std::exp(-100.0 * std::abs(phi));
        acc += rep;
        const double sign = phi > 0.0 ? 1.0 : (phi < 0.0 ? -1.0 : 0.0);
        adj.phi[i] += scale * (-100.0) * sign * rep / n;
    }
    return acc / n;
}

}  // namespace veloform
