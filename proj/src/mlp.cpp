#include "veloform/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace veloform {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double layer_omega(const MlpParams& p, std::size_t layer) {
    return layer == 0 ? p.omega_first : p.omega_hidden;
}

}  // namespace

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size() + l.b.size());
    return n;
}

Eigen::VectorXd MlpParams::to_flat() const {
    VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index at = 0;
    for (const auto& l : layers) {
        flat.segment(at, l.W.size()) = Eigen::Map<const VectorXd>(l.W.data(), l.W.size());
        at += l.W.size();
        flat.segment(at, l.b.size()) = l.b;
        at += l.b.size();
    }
    return flat;
}

void MlpParams::from_flat(const Eigen::VectorXd& flat) {
    if (flat.size() != static_cast<Eigen::Index>(parameter_count()))
        throw std::invalid_argument("from_flat: size mismatch");
    Eigen::Index at = 0;
    for (auto& l : layers) {
        Eigen::Map<VectorXd>(l.W.data(), l.W.size()) = flat.segment(at, l.W.size());
        at += l.W.size();
        l.b = flat.segment(at, l.b.size());
        at += l.b.size();
    }
}

MlpParams make_mlp(int input_dim, int output_dim, int hidden_layers, int width,
                   Activation activation, double omega0, Rng& rng) {
    if (input_dim < 1 || output_dim < 1 || hidden_layers < 1 || width < 1)
        throw std::invalid_argument("make_mlp: all dimensions must be positive");
    MlpParams p;
    p.activation = activation;
    p.omega_first = omega0;
    p.omega_hidden = omega0;
    auto init_layer = [&](int out, int in, double bound) {
        DenseLayer l;
        l.W.resize(out, in);
        for (Eigen::Index j = 0; j < l.W.cols(); ++j)
            for (Eigen::Index i = 0; i < l.W.rows(); ++i) l.W(i, j) = rng.uniform(-bound, bound);
        l.b = VectorXd::Zero(out);
        return l;
    };
    p.layers.push_back(init_layer(width, input_dim, 1.0 / input_dim));
    const double hidden_bound = std::sqrt(6.0 / width) / (activation == Activation::Sine ? omega0 : 1.0);
    for (int h = 1; h < hidden_layers; ++h) p.layers.push_back(init_layer(width, width, hidden_bound));
    p.layers.push_back(init_layer(output_dim, width, hidden_bound));
    return p;
}

MlpParams make_siren(int input_dim, int output_dim, int hidden_layers, int width, double omega0,
                     Rng& rng) {
    return make_mlp(input_dim, output_dim, hidden_layers, width, Activation::Sine, omega0, rng);
}

JetResult mlp_eval(const MlpParams& params, const MatrixXd& X, const JetSpec& spec,
                   MlpTrace* trace) {
    if (params.layers.empty()) throw std::invalid_argument("mlp_eval: empty network");
    if (X.cols() != params.input_dim()) throw std::invalid_argument("mlp_eval: input dimension mismatch");
    const std::size_t L = params.layers.size();
    const std::size_t K = spec.axes.size();
    if (spec.second_order && params.activation == Activation::Relu)
        throw std::runtime_error(
            "exact second derivatives unavailable for relu activation; use finite_difference mode");
    for (int axis : spec.axes) {
        if (axis < 0 || axis >= params.input_dim())
            throw std::invalid_argument("mlp_eval: derivative axis out of range");
    }

    const Eigen::Index N = X.rows();
    if (trace) {
        trace->input = X;
        trace->z.assign(L, MatrixXd());
        trace->zdot.assign(L, {});
        trace->zddot.assign(L, {});
        trace->spec = spec;
    }

    MatrixXd a = X;
    std::vector<MatrixXd> adot(K), addot;
    if (spec.second_order) addot.assign(K, MatrixXd());

    for (std::size_t l = 0; l < L; ++l) {
        const DenseLayer& layer = params.layers[l];
        MatrixXd z = (a * layer.W.transpose()).rowwise() + layer.b.transpose();
        std::vector<MatrixXd> zdot(K), zddot;
        if (spec.second_order) zddot.assign(K, MatrixXd());
        for (std::size_t k = 0; k < K; ++k) {
            if (l == 0) {
                // tangent seed is the constant unit vector e_axis
                zdot[k] = layer.W.col(spec.axes[k]).transpose().replicate(N, 1);
                if (spec.second_order) zddot[k] = MatrixXd::Zero(N, layer.W.rows());
            } else {
                zdot[k] = adot[k] * layer.W.transpose();
                if (spec.second_order) zddot[k] = addot[k] * layer.W.transpose();
            }
        }
        if (trace) {
            trace->z[l] = z;
            trace->zdot[l] = zdot;
            trace->zddot[l] = zddot;
        }

        const bool last = (l + 1 == L);
        if (last) {
            a = std::move(z);
            adot = std::move(zdot);
            addot = std::move(zddot);
        } else if (params.activation == Activation::Sine) {
            const double w = layer_omega(params, l);
            MatrixXd s = (w * z.array()).sin().matrix();
            MatrixXd c = (w * z.array()).cos().matrix();
            a = s;
            for (std::size_t k = 0; k < K; ++k) {
                if (spec.second_order) {
                    addot[k] = (w * c.array() * zddot[k].array() -
                                (w * w) * s.array() * zdot[k].array().square())
                                   .matrix();
                }
                adot[k] = (w * c.array() * zdot[k].array()).matrix();
            }
        } else {  // Relu
            MatrixXd mask = (z.array() > 0.0).cast<double>().matrix();
            a = z.cwiseProduct(mask);
            for (std::size_t k = 0; k < K; ++k) adot[k] = zdot[k].cwiseProduct(mask);
        }
    }

    JetResult out;
    out.value = std::move(a);
    out.first = std::move(adot);
    out.second = std::move(addot);
    return out;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& params) {
    MlpGrads g;
    g.layers.reserve(params.layers.size());
    for (const auto& l : params.layers) {
        g.layers.push_back({MatrixXd::Zero(l.W.rows(), l.W.cols()), VectorXd::Zero(l.b.size())});
    }
    return g;
}

void MlpGrads::set_zero() {
    for (auto& l : layers) {
        l.W.setZero();
        l.b.setZero();
    }
}

Eigen::VectorXd MlpGrads::to_flat() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size() + l.b.size());
    VectorXd flat(static_cast<Eigen::Index>(n));
    Eigen::Index at = 0;
    for (const auto& l : layers) {
        flat.segment(at, l.W.size()) = Eigen::Map<const VectorXd>(l.W.data(), l.W.size());
        at += l.W.size();
        flat.segment(at, l.b.size()) = l.b;
        at += l.b.size();
    }
    return flat;
}

void mlp_backward(const MlpParams& params, const MlpTrace& trace, const JetAdjoint& adj,
                  MlpGrads* grads, Eigen::MatrixXd* input_grad) {
    const std::size_t L = params.layers.size();
    const std::size_t K = trace.spec.axes.size();
    const bool second = trace.spec.second_order;
    const Eigen::Index N = trace.input.rows();
    if (grads && grads->layers.size() != L) throw std::invalid_argument("mlp_backward: grads shape mismatch");

    auto filled = [&](const MatrixXd& m, Eigen::Index cols) {
        return m.size() ? m : MatrixXd::Zero(N, cols).eval();
    };

    const Eigen::Index out_dim = params.layers.back().W.rows();
    // Adjoints on the post-activation state of the current layer.
    MatrixXd ga = filled(adj.value, out_dim);
    std::vector<MatrixXd> gadot(K), gaddot(K);
    for (std::size_t k = 0; k < K; ++k) {
        gadot[k] = filled(k < adj.first.size() ? adj.first[k] : MatrixXd(), out_dim);
        if (second)
            gaddot[k] = filled(k < adj.second.size() ? adj.second[k] : MatrixXd(), out_dim);
    }

    for (std::size_t li = L; li-- > 0;) {
        const DenseLayer& layer = params.layers[li];
        const MatrixXd& z = trace.z[li];
        const auto& zdot = trace.zdot[li];
        const auto& zddot = trace.zddot[li];
        const bool last = (li + 1 == L);

        // Convert post-activation adjoints into pre-activation adjoints.
        MatrixXd gz;
        std::vector<MatrixXd> gzdot(K), gzddot(K);
        if (last) {
            gz = std::move(ga);
            gzdot = std::move(gadot);
            gzddot = std::move(gaddot);
        } else if (params.activation == Activation::Sine) {
            const double w = layer_omega(params, li);
            MatrixXd s = (w * z.array()).sin().matrix();
            MatrixXd c = (w * z.array()).cos().matrix();
            gz = (ga.array() * (w * c.array())).matrix();
            for (std::size_t k = 0; k < K; ++k) {
                gz.array() += gadot[k].array() * (-(w * w) * s.array() * zdot[k].array());
                gzdot[k] = (gadot[k].array() * (w * c.array())).matrix();
                if (second) {
                    gz.array() += gaddot[k].array() *
                                  (-(w * w) * s.array() * zddot[k].array() -
                                   (w * w * w) * c.array() * zdot[k].array().square());
                    gzdot[k].array() += gaddot[k].array() * (-2.0 * w * w) * s.array() * zdot[k].array();
                    gzddot[k] = (gaddot[k].array() * (w * c.array())).matrix();
                }
            }
        } else {  // Relu
            MatrixXd mask = (z.array() > 0.0).cast<double>().matrix();
            gz = ga.cwiseProduct(mask);
            for (std::size_t k = 0; k < K; ++k) gzdot[k] = gadot[k].cwiseProduct(mask);
        }

        // Linear part: z = a_prev W^T + b.
        if (grads) {
            DenseLayer& g = grads->layers[li];
            if (li == 0) {
                g.W.noalias() += gz.transpose() * trace.input;
                for (std::size_t k = 0; k < K; ++k) {
                    // first-layer tangent input is the constant seed e_axis
                    g.W.col(trace.spec.axes[k]) += gzdot[k].colwise().sum().transpose();
                }
            } else {
                const std::size_t lp = li - 1;
                const double wprev = layer_omega(params, lp);
                if (params.activation == Activation::Sine) {
                    MatrixXd sp = (wprev * trace.z[lp].array()).sin().matrix();
                    MatrixXd cp = (wprev * trace.z[lp].array()).cos().matrix();
                    g.W.noalias() += gz.transpose() * sp;
                    for (std::size_t k = 0; k < K; ++k) {
                        MatrixXd adot_prev = (wprev * cp.array() * trace.zdot[lp][k].array()).matrix();
                        g.W.noalias() += gzdot[k].transpose() * adot_prev;
                        if (second) {
                            MatrixXd addot_prev =
                                (wprev * cp.array() * trace.zddot[lp][k].array() -
                                 (wprev * wprev) * sp.array() * trace.zdot[lp][k].array().square())
                                    .matrix();
                            g.W.noalias() += gzddot[k].transpose() * addot_prev;
                        }
                    }
                } else {
                    MatrixXd mask = (trace.z[lp].array() > 0.0).cast<double>().matrix();
                    g.W.noalias() += gz.transpose() * trace.z[lp].cwiseProduct(mask);
                    for (std::size_t k = 0; k < K; ++k)
                        g.W.noalias() += gzdot[k].transpose() * trace.zdot[lp][k].cwiseProduct(mask);
                }
            }
            g.b += gz.colwise().sum().transpose();
        }

        if (li == 0) {
            if (input_grad) *input_grad = gz * layer.W;
            break;
        }
        MatrixXd next_ga = gz * layer.W;
        std::vector<MatrixXd> next_gadot(K), next_gaddot(K);
        for (std::size_t k = 0; k < K; ++k) {
            next_gadot[k] = gzdot[k] * layer.W;
            if (second) next_gaddot[k] = gzddot[k] * layer.W;
        }
        ga = std::move(next_ga);
        gadot = std::move(next_gadot);
        gaddot = std::move(next_gaddot);
    }
}

}  // namespace veloform
