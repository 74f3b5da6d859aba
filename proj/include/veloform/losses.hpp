#pragma once

#include "veloform/fields.hpp"
#include "veloform/geometry.hpp"
#include "veloform/integrate.hpp"

#include <cstdint>
#include <vector>

namespace veloform {

// Weights of the training objective. lambda_l scales the Eikonal correction
// inside the level-set residual; alpha and gamma parameterize the smoothness
// operator (-alpha * Laplacian + gamma * I).
struct LossWeights {
    double lambda_i = 1.0;
    double lambda_s = 0.1;
    double lambda_v = 0.1;
    double lambda_st = 0.1;
    double lambda_d = 0.1;
    double lambda_m = 10.0;
    double lambda_n = 0.0;
    double lambda_recon = 100.0;
    double lambda_l = 1.0;
    double alpha = 1.0;
    double gamma = 0.1;

    void validate() const;
};

// One training batch for one pair: Monte-Carlo volume samples, endpoint
// surface samples, matched position pairs, and the T+1 uniform time stamps.
struct SampleBatch {
    MatX3 volume_points;
    MatX3 surface_points_0;
    MatX3 surface_points_1;
    MatX3 surface_normals_0;    // 0 rows when the input clouds are unoriented
    MatX3 surface_normals_1;
    MatX3 matched_src;          // aligned rows
    MatX3 matched_dst;
    MatX3 matched_normals_0;    // 0 rows when unavailable
    MatX3 matched_normals_1;
    Eigen::VectorXd times;      // {0, 1/T, ..., 1}
    Eigen::VectorXd code;       // z_source ++ z_target
    int frame_0 = -1;
    int frame_1 = -1;

    void validate(const AxisAlignedDomain& domain) const;
};

// Points whose phi-gradient fell below the degeneracy threshold are excluded
// from gradient-normalized terms rather than clamped; the tally records how
// many.
struct PointMask {
    std::vector<std::uint8_t> valid;
    Eigen::Index excluded = 0;

    Eigen::Index valid_count() const {
        return static_cast<Eigen::Index>(valid.size()) - excluded;
    }
};

inline constexpr double kGradEps = 1e-8;

PointMask gradient_mask(const MatX3& grad, double eps = kGradEps);

// R = -(n^T (grad V) n) with n = grad_phi / |grad_phi|. Degenerate-gradient
// points get value 0 and are marked invalid in the mask.
Eigen::VectorXd eikonal_correction(const MatX3& grad_phi, const std::vector<Mat3>& jac_v,
                                   PointMask* mask = nullptr);

// Mean squared level-set residual  |dphi_dt + V.grad_phi + lambda_l*phi*R|^2
// over the masked batch.
double level_set_loss(const PhiTerms& phi, const VelocityTerms& vel, const LossWeights& w,
                      PointMask* mask = nullptr);

// Mean squared endpoint error after advecting the matched source points from
// t=0 to t=1 through `velocity`.
double matching_loss(const MatX3& matched_src, const MatX3& matched_dst,
                     const VelocityFn& velocity, const IntegratorConfig& integrator);

// Mean |(-alpha*Laplacian + gamma*I) V|^2.
double smoothness_loss(const VelocityTerms& vel, const LossWeights& w);

// Mean |div V|.
double volume_loss(const Eigen::VectorXd& divergence);

// Symmetric part of the velocity Jacobian.
std::vector<Mat3> rate_of_deformation(const std::vector<Mat3>& jac_v);

// Mean |J2_dev| with J2_dev = tr(D^2)/2 - tr(D)^2/6. Throws if any D is
// asymmetric beyond 1e-8.
double distortion_loss(const std::vector<Mat3>& D);

// P = I - n n^T with n = grad/|grad|; degenerate gradients yield identity
// projectors marked invalid.
std::vector<Mat3> tangent_projector(const MatX3& grad_phi, PointMask* mask = nullptr);

// Mean Frobenius norm of P^T (J^T J + J + J^T) P over valid points.
double stretching_loss(const std::vector<Mat3>& jac_v, const std::vector<Mat3>& projectors,
                       const PointMask* mask = nullptr);

// Mean squared norm of n_0 - F^T n_1 / |F^T n_1| with F = I + J.
double normal_deformation_loss(const MatX3& normals_0, const MatX3& normals_1,
                               const std::vector<Mat3>& jac_v);

// Surface pinning for the endpoints plus Eikonal and off-surface terms. When
// the input clouds carry normals, an orientation term aligns grad phi with
// them at the surface samples; without that the four sign-blind terms leave
// the inside/outside structure underdetermined.
struct ReconTerms {
    double boundary_0 = 0.0;  // mean |phi(x, 0)| over surface samples of P_0
    double boundary_1 = 0.0;
    double eikonal = 0.0;     // mean (|grad phi| - 1)^2 over volume at t in {0,1}
    double repulsion = 0.0;   // mean exp(-100 |phi|) over volume points at the sampled times
    double normal_align = 0.0;  // mean (1 - cos(grad phi, n)) over oriented samples
    double total() const { return boundary_0 + boundary_1 + eikonal + repulsion + normal_align; }
};
ReconTerms reconstruction_terms(const Eigen::VectorXd& phi_surface_0,
                                const Eigen::VectorXd& phi_surface_1,
                                const std::vector<PhiTerms>& phi_volume_endpoints);
double reconstruction_loss(const ImplicitField& f, const MatX3& surface_points_0,
                           const MatX3& surface_points_1, const MatX3& volume_points,
                           const Eigen::VectorXd& code);

// Raw (unweighted) term values plus the weighted total.
struct LossBreakdown {
    double li = 0.0;
    double lm = 0.0;
    double ls = 0.0;
    double lv = 0.0;
    double lst = 0.0;
    double ld = 0.0;
    double ln = 0.0;
    double lrecon = 0.0;
    double total = 0.0;
};

// Weighted sum of the term values; fills `total`.
double total_loss(LossBreakdown& terms, const LossWeights& w);

// ---- adjoints for training --------------------------------------------------
// Each backward routine accumulates d(scale * loss)/d(term) into the adjoint
// structs, pairing the value formulas above.

struct PhiAdjoint {
    Eigen::VectorXd phi;
    MatX3 grad;
    Eigen::VectorXd dt;
    static PhiAdjoint zeros(Eigen::Index n);
};

struct VelocityAdjoint {
    MatX3 v;
    std::vector<Mat3> jacobian;
    MatX3 laplacian;
    static VelocityAdjoint zeros(Eigen::Index n);
};

double level_set_loss_backward(const PhiTerms& phi, const VelocityTerms& vel,
                               const LossWeights& w, double scale, PhiAdjoint& phi_adj,
                               VelocityAdjoint& vel_adj, PointMask* mask = nullptr);
double smoothness_loss_backward(const VelocityTerms& vel, const LossWeights& w, double scale,
                                VelocityAdjoint& vel_adj);
double volume_loss_backward(const std::vector<Mat3>& jac_v, double scale,
                            VelocityAdjoint& vel_adj);
double distortion_loss_backward(const std::vector<Mat3>& jac_v, double scale,
                                VelocityAdjoint& vel_adj);
double stretching_loss_backward(const std::vector<Mat3>& jac_v, const MatX3& grad_phi,
                                double scale, PhiAdjoint& phi_adj, VelocityAdjoint& vel_adj,
                                PointMask* mask = nullptr);
double normal_deformation_loss_backward(const MatX3& normals_0, const MatX3& normals_1,
                                        const std::vector<Mat3>& jac_v, double scale,
                                        VelocityAdjoint& vel_adj);

// Reconstruction pieces: surface term adjoint on phi values, volume term
// adjoint on (phi, grad).
double recon_boundary_backward(const Eigen::VectorXd& phi_surface, double scale,
                               Eigen::VectorXd& phi_adj);
double recon_eikonal_backward(const PhiTerms& phi_volume, double scale, PhiAdjoint& adj);
double recon_repulsion_backward(const PhiTerms& phi_volume, double scale, PhiAdjoint& adj);
// Orientation term at oriented surface samples: mean (1 - cos(grad phi, n)).
double recon_normal_backward(const MatX3& grad_phi_surface, const MatX3& normals, double scale,
                             MatX3& grad_adj);

}  // namespace veloform
