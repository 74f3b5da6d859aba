#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "veloform/mlp.hpp"
#include "veloform/rng.hpp"

#include "oracles.hpp"

#include <Eigen/Dense>

using namespace veloform;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MlpParams tiny_net(int in, int out, uint64_t seed, int width = 16, int hidden = 2) {
    Rng rng(seed);
    return make_siren(in, out, hidden, width, 30.0, rng);
}

MatrixXd random_inputs(int n, int dim, uint64_t seed) {
    Rng rng(seed);
    MatrixXd X(n, dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) X(i, j) = rng.uniform(-1.0, 1.0);
    return X;
}

}  // namespace

TEST_CASE("jet first derivatives match central finite differences") {
    const int in = 5, out = 3;
    MlpParams net = tiny_net(in, out, 7);
    MatrixXd X = random_inputs(100, in, 11);
    JetSpec spec{{0, 1, 2, 3}, false};
    JetResult jet = mlp_eval(net, X, spec);

    const double h = 1e-4;
    double worst = 0.0;
    for (int probe = 0; probe < 100; ++probe) {
        for (std::size_t k = 0; k < spec.axes.size(); ++k) {
            MatrixXd Xp = X, Xm = X;
            Xp(probe, spec.axes[k]) += h;
            Xm(probe, spec.axes[k]) -= h;
            VectorXd fd = (mlp_forward(net, Xp.row(probe)) - mlp_forward(net, Xm.row(probe)))
                              .transpose() /
                          (2.0 * h);
            VectorXd an = jet.first[k].row(probe).transpose();
            worst = std::max(worst, oracles::rel_err_vec(an, fd));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("jet second derivatives match finite differences of first") {
    const int in = 4, out = 2;
    MlpParams net = tiny_net(in, out, 3);
    MatrixXd X = random_inputs(50, in, 13);
    JetSpec spec{{0, 1, 2}, true};
    JetResult jet = mlp_eval(net, X, spec);

    const double h = 1e-4;
    double worst = 0.0;
    for (int probe = 0; probe < 50; ++probe) {
        for (std::size_t k = 0; k < spec.axes.size(); ++k) {
            MatrixXd Xp = X.row(probe), Xm = X.row(probe);
            Xp(0, spec.axes[k]) += h;
            Xm(0, spec.axes[k]) -= h;
            JetSpec first_only{{spec.axes[k]}, false};
            VectorXd dp = mlp_eval(net, Xp, first_only).first[0].row(0).transpose();
            VectorXd dm = mlp_eval(net, Xm, first_only).first[0].row(0).transpose();
            VectorXd fd = (dp - dm) / (2.0 * h);
            VectorXd an = jet.second[k].row(probe).transpose();
            worst = std::max(worst, oracles::rel_err_vec(an, fd));
        }
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("parameter gradient of a jet-dependent scalar matches directional FD") {
    // Scalar objective touching value, first, and second derivative outputs:
    //   L = sum(y^2) + sum(dy/dx0 * dy/dx1) + sum(d2y/dx2^2)
    const int in = 4, out = 2;
    MlpParams net = tiny_net(in, out, 19);
    MatrixXd X = random_inputs(16, in, 23);
    JetSpec spec{{0, 1, 2}, true};

    auto objective = [&](const MlpParams& p) {
        JetResult jet = mlp_eval(p, X, spec);
        double L = jet.value.squaredNorm();
        L += (jet.first[0].array() * jet.first[1].array()).sum();
        L += jet.second[2].squaredNorm();
        return L;
    };

    // Analytic gradient via mlp_backward.
    MlpTrace trace;
    JetResult jet = mlp_eval(net, X, spec, &trace);
    JetAdjoint adj;
    adj.value = 2.0 * jet.value;
    adj.first = {jet.first[1], jet.first[0], MatrixXd()};
    adj.second = {MatrixXd(), MatrixXd(), 2.0 * jet.second[2]};
    MlpGrads grads = MlpGrads::zeros_like(net);
    mlp_backward(net, trace, adj, &grads, nullptr);
    VectorXd g = grads.to_flat();

    // Directional finite differences along 60 random parameter directions.
    Rng rng(101);
    VectorXd theta = net.to_flat();
    const double h = 1e-6;
    double worst = 0.0;
    for (int d = 0; d < 60; ++d) {
        VectorXd dir(theta.size());
        for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = rng.normal();
        dir.normalize();
        MlpParams pp = net, pm = net;
        pp.from_flat(theta + h * dir);
        pm.from_flat(theta - h * dir);
        const double fd = (objective(pp) - objective(pm)) / (2.0 * h);
        worst = std::max(worst, oracles::rel_err(g.dot(dir), fd, 1e-6));
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("input gradient covers derivative outputs too") {
    const int in = 4, out = 1;
    MlpParams net = tiny_net(in, out, 31);
    MatrixXd X = random_inputs(1, in, 37);
    JetSpec spec{{0, 1, 2}, false};

    // L = |grad_x y|^2 as a function of the input point.
    auto objective = [&](const MatrixXd& pts) {
        JetResult jet = mlp_eval(net, pts, spec);
        double L = 0.0;
        for (int k = 0; k < 3; ++k) L += jet.first[k].squaredNorm();
        return L;
    };

    MlpTrace trace;
    JetResult jet = mlp_eval(net, X, spec, &trace);
    JetAdjoint adj;
    adj.first = {2.0 * jet.first[0], 2.0 * jet.first[1], 2.0 * jet.first[2]};
    MatrixXd input_grad;
    mlp_backward(net, trace, adj, nullptr, &input_grad);

    const double h = 1e-5;
    for (int axis = 0; axis < in; ++axis) {
        MatrixXd Xp = X, Xm = X;
        Xp(0, axis) += h;
        Xm(0, axis) -= h;
        const double fd = (objective(Xp) - objective(Xm)) / (2.0 * h);
        CHECK(oracles::rel_err(input_grad(0, axis), fd, 1e-7) < 1e-3);
    }
}

TEST_CASE("deterministic evaluation and init") {
    MlpParams a = tiny_net(6, 2, 42);
    MlpParams b = tiny_net(6, 2, 42);
    CHECK(a.to_flat() == b.to_flat());
    MatrixXd X = random_inputs(8, 6, 5);
    CHECK(mlp_forward(a, X) == mlp_forward(b, X));
}

TEST_CASE("relu networks refuse exact second derivatives") {
    Rng rng(1);
    MlpParams net = make_mlp(3, 3, 2, 8, Activation::Relu, 30.0, rng);
    MatrixXd X = random_inputs(4, 3, 2);
    JetSpec second{{0, 1, 2}, true};
    CHECK_THROWS_WITH_AS(mlp_eval(net, X, second), doctest::Contains("finite_difference"),
                         std::runtime_error);
    JetSpec first{{0, 1, 2}, false};
    CHECK_NOTHROW(mlp_eval(net, X, first));
}
