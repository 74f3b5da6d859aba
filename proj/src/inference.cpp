#include "veloform/inference.hpp"

#include "veloform/util.hpp"

#include <cmath>
#include <stdexcept>

namespace veloform {

TimeGrid TimeGrid::uniform(int count, double t0, double t1) {
    if (count < 1) throw std::invalid_argument("time grid needs at least one value");
    TimeGrid g;
    g.values.resize(static_cast<std::size_t>(count));
    if (count == 1) {
        g.values[0] = t0;
    } else {
        for (int i = 0; i < count; ++i)
            g.values[static_cast<std::size_t>(i)] = t0 + (t1 - t0) * i / (count - 1);
    }
    return g;
}

void TimeGrid::validate() const {
    if (values.empty()) throw std::invalid_argument("time grid is empty");
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (!(values[i] > values[i - 1]))
            throw std::invalid_argument("time grid must be strictly increasing");
    }
    if (!extrapolation) {
        for (double t : values) {
            if (t < 0.0 || t > 1.0)
                throw std::invalid_argument(
                    "time grid value outside [0,1]; set the extrapolation flag to allow this");
        }
    }
}

VelocityFn field_velocity_fn(const TrainState& state, int pair_id,
                             bool allow_time_extrapolation) {
    const PairRecord& pr = state.pair_by_id(pair_id);
    const Eigen::VectorXd code = state.latents.pair_code(pr.frame_0, pr.frame_1);
    const VelocityField vel = state.vel;  // value copy keeps the closure self-contained
    return [vel, code, allow_time_extrapolation](const MatX3& pts, double t) {
        FieldQuery q{pts, t, code, allow_time_extrapolation};
        return eval_velocity(vel, q);
    };
}

TriMesh extract_surface(const ImplicitField& phi, const Eigen::VectorXd& code, double t,
                        int resolution, const AxisAlignedDomain& domain,
                        bool allow_time_extrapolation) {
    ScalarGridFn fn = [&](const MatX3& pts) {
        Eigen::VectorXd out(pts.rows());
        // slab batches are large; evaluate fixed chunks in parallel
        parallel_for(static_cast<std::size_t>(pts.rows()), [&](std::size_t b, std::size_t e) {
            const Eigen::Index begin = static_cast<Eigen::Index>(b);
            const Eigen::Index count = static_cast<Eigen::Index>(e - b);
            FieldQuery q{pts.middleRows(begin, count), t, code, allow_time_extrapolation};
            out.segment(begin, count) = eval_phi(phi, q);
        });
        return out;
    };
    return extract_level_set(fn, domain, resolution);
}

std::vector<TriMesh> interpolate_sequence(const TrainState& state, int pair_id,
                                          const TimeGrid& grid, int resolution) {
    grid.validate();
    const PairRecord& pr = state.pair_by_id(pair_id);
    const Eigen::VectorXd code = state.latents.pair_code(pr.frame_0, pr.frame_1);
    std::vector<TriMesh> meshes;
    meshes.reserve(grid.values.size());
    for (double t : grid.values) {
        meshes.push_back(extract_surface(state.phi, code, t, resolution, state.config.domain,
                                         grid.extrapolation));
    }
    return meshes;
}

UpsampleResult upsample_external_points(const TrainState& state, int pair_id,
                                        const PointCloud& external, const TimeGrid& grid,
                                        const IntegratorConfig& integrator) {
    grid.validate();
    external.validate();
    if (external.empty()) throw std::invalid_argument("external cloud is empty");

    // Points more than 20% beyond the domain are advected anyway but tallied.
    const AxisAlignedDomain& dom = state.config.domain;
    const Vec3 pad = 0.2 * 0.5 * dom.extent();
    const AxisAlignedDomain expanded{dom.min_corner - pad, dom.max_corner + pad};
    UpsampleResult result;
    for (Eigen::Index i = 0; i < external.size(); ++i) {
        if (!expanded.contains(external.points.row(i).transpose())) ++result.far_outside_points;
    }

    const VelocityFn vel = field_velocity_fn(state, pair_id, grid.extrapolation);
    PointCloud frame = external;
    result.frames.push_back(frame);
    for (std::size_t i = 1; i < grid.values.size(); ++i) {
        frame.points =
            advect_points(frame.points, vel, grid.values[i - 1], grid.values[i], integrator);
        frame.normals.resize(0, 3);  // orientation is not transported
        result.frames.push_back(frame);
    }
    return result;
}

PointCloud extrapolate(const TrainState& state, int pair_id, double t_beyond,
                       const PointCloud& points, const IntegratorConfig& integrator) {
    points.validate();
    const VelocityFn vel = field_velocity_fn(state, pair_id, true);
    PointCloud out = points;
    out.points = advect_points(points.points, vel, 0.0, t_beyond, integrator);
    out.normals.resize(0, 3);
    return out;
}

}  // namespace veloform
