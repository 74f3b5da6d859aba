#pragma once

#include "veloform/rng.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace veloform {

// Fully connected coordinate network with sinusoidal activations and a linear
// output layer. Forward evaluation can simultaneously propagate first and
// pure second directional derivatives with respect to selected input
// coordinates (Taylor jets), and the whole computation — values and
// derivative outputs — is reverse-differentiable with respect to the weights
// and the inputs.
//
// Conventions:
//   layer l:        z_l = a_{l-1} W_l^T + b_l        (batch rows are points)
//   hidden layers:  a_l = sin(omega_l * z_l)
//   output layer:   linear
// First directional derivative along input axis e_k:
//   zdot_l = adot_{l-1} W_l^T,   adot_l = omega*cos(omega*z) .* zdot_l
// Pure second directional derivative along the same axis:
//   zddot_l = addot_{l-1} W_l^T
//   addot_l = omega*cos(omega*z) .* zddot_l - omega^2*sin(omega*z) .* zdot_l^2

enum class Activation { Sine, Relu };

struct DenseLayer {
    Eigen::MatrixXd W;  // out x in
    Eigen::VectorXd b;  // out
};

struct MlpParams {
    std::vector<DenseLayer> layers;  // last layer is linear
    Activation activation = Activation::Sine;
    double omega_first = 30.0;
    double omega_hidden = 30.0;

    int input_dim() const { return static_cast<int>(layers.front().W.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().W.rows()); }
    std::size_t parameter_count() const;
    Eigen::VectorXd to_flat() const;
    void from_flat(const Eigen::VectorXd& flat);
};

// Standard sinusoidal-network initialization: first layer U(-1/in, 1/in),
// deeper layers U(-sqrt(6/fan_in)/omega, +sqrt(6/fan_in)/omega), zero biases.
MlpParams make_siren(int input_dim, int output_dim, int hidden_layers, int width, double omega0,
                     Rng& rng);
MlpParams make_mlp(int input_dim, int output_dim, int hidden_layers, int width,
                   Activation activation, double omega0, Rng& rng);

// Which input axes to differentiate along, and whether to also carry the pure
// second derivative along each of them.
struct JetSpec {
    std::vector<int> axes;
    bool second_order = false;
};

struct JetResult {
    Eigen::MatrixXd value;                  // N x out
    std::vector<Eigen::MatrixXd> first;     // per axis, N x out
    std::vector<Eigen::MatrixXd> second;    // per axis when second_order
};

// Cached forward state for mlp_backward. Holds pre-activations and tangent
// pre-activations of every layer.
struct MlpTrace {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> z;
    std::vector<std::vector<Eigen::MatrixXd>> zdot;   // [layer][axis]
    std::vector<std::vector<Eigen::MatrixXd>> zddot;  // [layer][axis]
    JetSpec spec;
};

JetResult mlp_eval(const MlpParams& params, const Eigen::MatrixXd& X, const JetSpec& spec = {},
                   MlpTrace* trace = nullptr);

inline Eigen::MatrixXd mlp_forward(const MlpParams& params, const Eigen::MatrixXd& X) {
    return mlp_eval(params, X).value;
}

struct MlpGrads {
    std::vector<DenseLayer> layers;

    static MlpGrads zeros_like(const MlpParams& params);
    void set_zero();
    Eigen::VectorXd to_flat() const;
};

// Adjoints on the jet outputs; an empty matrix means zero adjoint on that
// slot.
struct JetAdjoint {
    Eigen::MatrixXd value;
    std::vector<Eigen::MatrixXd> first;
    std::vector<Eigen::MatrixXd> second;
};

// Accumulates dL/dW, dL/db into `grads` (when non-null) and writes dL/dX into
// `input_grad` (when non-null). The input gradient accounts for every output
// channel, so e.g. seeding `first` adjoints yields the input gradient of a
// function of the spatial derivatives.
void mlp_backward(const MlpParams& params, const MlpTrace& trace, const JetAdjoint& adj,
                  MlpGrads* grads, Eigen::MatrixXd* input_grad);

}  // namespace veloform
