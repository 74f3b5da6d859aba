#pragma once

#include "veloform/geometry.hpp"
#include "veloform/mlp.hpp"
#include "veloform/rng.hpp"

#include <vector>

namespace veloform {

// One trainable latent code per input frame. Pairs condition the fields with
// the concatenation code(source) ++ code(target).
struct LatentTable {
    std::vector<int> frame_ids;  // unique, in insertion order
    Eigen::MatrixXd codes;       // one row per frame, dimension m

    int dim() const { return static_cast<int>(codes.cols()); }
    Eigen::Index row_of(int frame_id) const;
    Eigen::VectorXd code(int frame_id) const { return codes.row(row_of(frame_id)).transpose(); }
    Eigen::VectorXd pair_code(int frame_0, int frame_1) const;
    void validate() const;
};

struct FieldConfig {
    int hidden_layers = 4;
    int width = 256;
    double omega0 = 30.0;
    int latent_dim = 128;
};

// phi(x, t, z): time-varying scalar field whose zero crossing is the surface.
struct ImplicitField {
    MlpParams net;  // input [x y z t code] -> 1
};

// V(x, t, z): deformation flow in R^3.
struct VelocityField {
    MlpParams net;  // input [x y z t code] -> 3
};

ImplicitField make_implicit_field(const FieldConfig& cfg, Rng& rng);
VelocityField make_velocity_field(const FieldConfig& cfg, Rng& rng);

// A batch of positions at one time, conditioned on one pair code.
struct FieldQuery {
    MatX3 points;
    double time = 0.0;
    Eigen::VectorXd code;  // dimension 2m
    bool allow_time_extrapolation = false;

    void validate(int expected_code_dim) const;
};

// Assembles the [x t code] network input matrix for a query.
Eigen::MatrixXd field_input(const FieldQuery& q);

// --- scalar field operators -------------------------------------------------

Eigen::VectorXd eval_phi(const ImplicitField& f, const FieldQuery& q);

// Exact spatial gradient (forward-mode, not finite differences).
MatX3 grad_phi(const ImplicitField& f, const FieldQuery& q);

// Exact time derivative.
Eigen::VectorXd dphi_dt(const ImplicitField& f, const FieldQuery& q);

// Bundled single-pass evaluation, used by training and losses.
struct PhiTerms {
    Eigen::VectorXd phi;
    MatX3 grad;
    Eigen::VectorXd dt;
};
PhiTerms eval_phi_terms(const ImplicitField& f, const FieldQuery& q, MlpTrace* trace = nullptr);

// --- velocity field operators -----------------------------------------------

MatX3 eval_velocity(const VelocityField& f, const FieldQuery& q);

// Row i of the Jacobian is the spatial gradient of velocity component i:
// J(i, j) = dV_i/dx_j.
std::vector<Mat3> velocity_jacobian(const VelocityField& f, const FieldQuery& q);

// Trace of the Jacobian.
Eigen::VectorXd velocity_divergence(const VelocityField& f, const FieldQuery& q);

enum class LaplacianMode { Exact, FiniteDifference };

// Componentwise vector Laplacian. Exact mode uses nested forward
// differentiation; finite-difference mode uses the 7-point stencil with the
// given step.
MatX3 velocity_laplacian(const VelocityField& f, const FieldQuery& q,
                         LaplacianMode mode = LaplacianMode::Exact, double fd_step = 1e-4);

struct VelocityTerms {
    MatX3 v;
    std::vector<Mat3> jacobian;
    MatX3 laplacian;  // zero rows unless requested
};
VelocityTerms eval_velocity_terms(const VelocityField& f, const FieldQuery& q,
                                  bool with_laplacian, MlpTrace* trace = nullptr);

}  // namespace veloform
