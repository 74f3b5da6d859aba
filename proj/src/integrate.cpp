#include "veloform/integrate.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace veloform {

void IntegratorConfig::validate() const {
    if (substeps_per_unit < 1) throw std::invalid_argument("integrator needs substeps >= 1");
}

MatX3 advect_points(const MatX3& points, const VelocityFn& velocity, double t_from, double t_to,
                    const IntegratorConfig& cfg) {
    cfg.validate();
    if (!points.allFinite()) throw std::invalid_argument("advect_points: non-finite input");
    const double span = t_to - t_from;
    if (span == 0.0) return points;
    const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(span) * cfg.substeps_per_unit)));
    const double h = span / steps;

    MatX3 x = points;
    double t = t_from;
    for (int s = 0; s < steps; ++s) {
        if (cfg.scheme == IntegratorConfig::Scheme::Euler) {
            x += h * velocity(x, t);
        } else {
            const MatX3 k1 = velocity(x, t);
            const MatX3 k2 = velocity(x + (0.5 * h) * k1, t + 0.5 * h);
            const MatX3 k3 = velocity(x + (0.5 * h) * k2, t + 0.5 * h);
            const MatX3 k4 = velocity(x + h * k3, t + h);
            x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        t = t_from + (s + 1) * h;
        if (!x.allFinite())
            throw std::runtime_error("advect_points: non-finite positions at substep " +
                                     std::to_string(s));
    }
    return x;
}

}  // namespace veloform
