#pragma once

#include "veloform/geometry.hpp"
#include "veloform/integrate.hpp"
#include "veloform/surface_extract.hpp"
#include "veloform/training.hpp"

#include <vector>

namespace veloform {

// Time stamps for interpolation. Values outside [0,1] require the
// extrapolation flag.
struct TimeGrid {
    std::vector<double> values;
    bool extrapolation = false;

    static TimeGrid uniform(int count, double t0 = 0.0, double t1 = 1.0);
    void validate() const;  // strictly increasing; range check per flag
};

// Velocity evaluator bound to a trained pair code.
VelocityFn field_velocity_fn(const TrainState& state, int pair_id,
                             bool allow_time_extrapolation = false);

// Zero level set of phi(., t, code) on a resolution^3 lattice over the
// domain.
TriMesh extract_surface(const ImplicitField& phi, const Eigen::VectorXd& code, double t,
                        int resolution, const AxisAlignedDomain& domain,
                        bool allow_time_extrapolation = false);

// Surfaces at every grid value of the trained pair, in grid order.
std::vector<TriMesh> interpolate_sequence(const TrainState& state, int pair_id,
                                          const TimeGrid& grid, int resolution);

struct UpsampleResult {
    std::vector<PointCloud> frames;        // one per grid value, first = input
    Eigen::Index far_outside_points = 0;   // > 20% beyond the domain, advected anyway
};

// Advects an external cloud (given at the first grid time) through the
// consecutive grid intervals with the trained velocity field.
UpsampleResult upsample_external_points(const TrainState& state, int pair_id,
                                        const PointCloud& external, const TimeGrid& grid,
                                        const IntegratorConfig& integrator);

// Advection continued outside the trained interval: integrates the points
// from t=0 to t_beyond. No fidelity guarantee beyond finiteness.
PointCloud extrapolate(const TrainState& state, int pair_id, double t_beyond,
                       const PointCloud& points, const IntegratorConfig& integrator);

}  // namespace veloform
