#pragma once

#include "veloform/geometry.hpp"
#include "veloform/integrate.hpp"
#include "veloform/rng.hpp"
#include "veloform/surface_extract.hpp"

#include "json.hpp"

#include <functional>
#include <string>

namespace veloform {

// Closed-form moving shape: a scalar field phi*(x,t) whose zero set is the
// surface, the velocity V*(x,t) that transports it, analytic derivatives, and
// the flow map from t=0. Every scene satisfies the transport identity
// d_t phi* + V* . grad phi* = 0 at all (x, t), which is what makes these
// usable as oracles for the level-set machinery.
struct AnalyticScene {
    std::string name;
    nlohmann::json descriptor;
    AxisAlignedDomain domain = AxisAlignedDomain::unit_cube();

    std::function<double(const Vec3&, double)> sdf;
    std::function<Vec3(const Vec3&, double)> grad_sdf;
    std::function<double(const Vec3&, double)> dsdf_dt;
    std::function<Vec3(const Vec3&, double)> velocity;
    std::function<Vec3(const Vec3&, double)> flow;  // image at time t of a t=0 point

    // Oriented surface samples at time t; every point satisfies
    // |phi*(x,t)| < 1e-9.
    PointCloud sample_surface(int n, double t, Rng& rng) const;

    // Batched adapters.
    VelocityFn velocity_fn() const;
    ScalarGridFn sdf_fn(double t) const;
    MatX3 flow_points(const MatX3& points, double t) const;
};

// Sphere of radius r translating with constant velocity v, centered so the
// motion stays symmetric about the origin.
AnalyticScene gen_translation_scene(const Vec3& v, double r);

struct SphereWithBump {
    double radius = 0.35;
    double bump_radius = 0.15;
    Vec3 bump_center = Vec3(0.3, 0.0, 0.0);
};

// Rotationally asymmetric solid (sphere plus off-center bump) spinning with
// angular velocity omega about the origin.
AnalyticScene gen_rotation_scene(const Vec3& omega, const SphereWithBump& shape = {});

// Sphere with exponentially growing radius r * e^(k t); V = k x.
AnalyticScene gen_scaling_scene(double k, double r);

// Horizontal capsule bent by a divergence-free swirl about the x axis with
// twist rate amplitude * x.
AnalyticScene gen_bending_scene(double amplitude);

// Samples P_0 at t=0 and P_1 as the flow image at t=1 (shuffled), with
// n_matches ground-truth index pairs. Matched target positions receive
// Gaussian noise of scale sigma in their tangent plane, and a drop_fraction
// of the matches is removed. Deterministic per seed.
CorrespondencePair make_pair(const AnalyticScene& scene, int n_points, int n_matches,
                             double noise_sigma, double drop_fraction, std::uint64_t seed);

// Ground-truth intermediate surface: triangulation of phi*(., t).
TriMesh analytic_intermediate(const AnalyticScene& scene, double t, int resolution);

}  // namespace veloform
