#pragma once

#include "veloform/geometry.hpp"

#include <functional>

namespace veloform {

// Batched velocity evaluator: points at a common time -> velocities.
using VelocityFn = std::function<MatX3(const MatX3&, double)>;

struct IntegratorConfig {
    enum class Scheme { Euler, Rk4 };
    Scheme scheme = Scheme::Rk4;
    int substeps_per_unit = 16;  // per unit time

    void validate() const;
};

// Integrates dx/dt = V(x, t) from t_from to t_to (either direction). Throws
// on non-finite intermediate positions, naming the first bad substep.
MatX3 advect_points(const MatX3& points, const VelocityFn& velocity, double t_from, double t_to,
                    const IntegratorConfig& cfg);

}  // namespace veloform
