#include "veloform/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace veloform {

namespace {

Eigen::Matrix3d axis_angle(const Vec3& axis_times_angle) {
    const double angle = axis_times_angle.norm();
    if (angle < 1e-300) return Eigen::Matrix3d::Identity();
    return Eigen::AngleAxisd(angle, axis_times_angle / angle).toRotationMatrix();
}

// Orthonormal tangent basis for a unit normal.
void tangent_basis(const Vec3& n, Vec3& t1, Vec3& t2) {
    const Vec3 seed = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    t1 = n.cross(seed).normalized();
    t2 = n.cross(t1);
}

}  // namespace

PointCloud AnalyticScene::sample_surface(int n, double t, Rng& rng) const {
    PointCloud cloud;
    cloud.points.resize(n, 3);
    cloud.normals.resize(n, 3);
    const Vec3 lo = domain.min_corner, hi = domain.max_corner;
    int produced = 0;
    int attempts = 0;
    const int max_attempts = 20000 * std::max(n, 1);
    while (produced < n) {
        if (++attempts > max_attempts)
            throw std::runtime_error("surface sampler failed to converge for scene " + name);
        Vec3 x(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
               rng.uniform(lo.z(), hi.z()));
        if (std::abs(sdf(x, t)) > 0.4) continue;  // keep projection well-conditioned
        bool ok = false;
        for (int it = 0; it < 12; ++it) {
            const double f = sdf(x, t);
            if (std::abs(f) < 1e-12) {
                ok = true;
                break;
            }
            const Vec3 g = grad_sdf(x, t);
            const double s = g.squaredNorm();
            if (s < 1e-16) break;
            x -= (f / s) * g;
        }
        if (!ok || !domain.contains(x)) continue;
        cloud.points.row(produced) = x.transpose();
        cloud.normals.row(produced) = grad_sdf(x, t).normalized().transpose();
        ++produced;
    }
    return cloud;
}

VelocityFn AnalyticScene::velocity_fn() const {
    auto vel = velocity;
    return [vel](const MatX3& pts, double t) {
        MatX3 out(pts.rows(), 3);
        for (Eigen::Index i = 0; i < pts.rows(); ++i)
            out.row(i) = vel(pts.row(i).transpose(), t).transpose();
        return out;
    };
}

ScalarGridFn AnalyticScene::sdf_fn(double t) const {
    auto f = sdf;
    return [f, t](const MatX3& pts) {
        Eigen::VectorXd out(pts.rows());
        for (Eigen::Index i = 0; i < pts.rows(); ++i) out[i] = f(pts.row(i).transpose(), t);
        return out;
    };
}

MatX3 AnalyticScene::flow_points(const MatX3& points, double t) const {
    MatX3 out(points.rows(), 3);
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        out.row(i) = flow(points.row(i).transpose(), t).transpose();
    return out;
}

AnalyticScene gen_translation_scene(const Vec3& v, double r) {
    if (r <= 0.0) throw std::invalid_argument("translation scene needs positive radius");
    AnalyticScene s;
    s.name = "translation";
    s.descriptor = {{"scene", "translation"}, {"v", {v.x(), v.y(), v.z()}}, {"r", r}};
    const Vec3 c0 = Vec3::Zero();  // sphere starts at the origin, center sweeps to v
    s.sdf = [c0, v, r](const Vec3& x, double t) { return (x - c0 - t * v).norm() - r; };
    s.grad_sdf = [c0, v](const Vec3& x, double t) {
        return (x - c0 - t * v).normalized().eval();
    };
    s.dsdf_dt = [c0, v](const Vec3& x, double t) {
        return -v.dot((x - c0 - t * v).normalized());
    };
    s.velocity = [v](const Vec3&, double) { return v; };
    s.flow = [v](const Vec3& x0, double t) { return (x0 + t * v).eval(); };
    return s;
}

AnalyticScene gen_rotation_scene(const Vec3& omega, const SphereWithBump& shape) {
    AnalyticScene s;
    s.name = "rotation";
    s.descriptor = {{"scene", "rotation"},
                    {"omega", {omega.x(), omega.y(), omega.z()}},
                    {"r", shape.radius},
                    {"bump_r", shape.bump_radius},
                    {"bump_center", {shape.bump_center.x(), shape.bump_center.y(), shape.bump_center.z()}}};
    auto phi0 = [shape](const Vec3& y) {
        return std::min(y.norm() - shape.radius, (y - shape.bump_center).norm() - shape.bump_radius);
    };
    auto grad0 = [shape](const Vec3& y) {
        const double a = y.norm() - shape.radius;
        const double b = (y - shape.bump_center).norm() - shape.bump_radius;
        return a <= b ? y.normalized().eval() : (y - shape.bump_center).normalized().eval();
    };
    s.sdf = [omega, phi0](const Vec3& x, double t) { return phi0(axis_angle(-t * omega) * x); };
    s.grad_sdf = [omega, grad0](const Vec3& x, double t) {
        const Eigen::Matrix3d Rinv = axis_angle(-t * omega);
        return (Rinv.transpose() * grad0(Rinv * x)).eval();
    };
    s.dsdf_dt = [omega, grad0](const Vec3& x, double t) {
        const Vec3 y = axis_angle(-t * omega) * x;
        return -grad0(y).dot(omega.cross(y));
    };
    s.velocity = [omega](const Vec3& x, double) { return omega.cross(x).eval(); };
    s.flow = [omega](const Vec3& x0, double t) { return (axis_angle(t * omega) * x0).eval(); };
    return s;
}

AnalyticScene gen_scaling_scene(double k, double r) {
    if (r <= 0.0) throw std::invalid_argument("scaling scene needs positive radius");
    AnalyticScene s;
    s.name = "scaling";
    s.descriptor = {{"scene", "scaling"}, {"k", k}, {"r", r}};
    // e^{-kt}|x| - r has the same zero set as |x| - r e^{kt} and satisfies
    // the transport identity everywhere, not just on the surface.
    s.sdf = [k, r](const Vec3& x, double t) { return std::exp(-k * t) * x.norm() - r; };
    s.grad_sdf = [k](const Vec3& x, double t) {
        return (std::exp(-k * t) * x.normalized()).eval();
    };
    s.dsdf_dt = [k](const Vec3& x, double t) { return -k * std::exp(-k * t) * x.norm(); };
    s.velocity = [k](const Vec3& x, double) { return (k * x).eval(); };
    s.flow = [k](const Vec3& x0, double t) { return (std::exp(k * t) * x0).eval(); };
    return s;
}

AnalyticScene gen_bending_scene(double amplitude) {
    AnalyticScene s;
    s.name = "bending";
    s.descriptor = {{"scene", "bending"}, {"amplitude", amplitude}};
    const double half_len = 0.5;   // capsule segment x in [-L, L]
    const double axis_y = 0.25;    // capsule axis sits off the swirl axis
    const double radius = 0.15;

    // capsule around the segment {(s, axis_y, 0) : |s| <= half_len}
    auto phi0 = [=](const Vec3& p) {
        const double sx = std::clamp(p.x(), -half_len, half_len);
        return (p - Vec3(sx, axis_y, 0.0)).norm() - radius;
    };
    auto grad0 = [=](const Vec3& p) {
        const double sx = std::clamp(p.x(), -half_len, half_len);
        return (p - Vec3(sx, axis_y, 0.0)).normalized().eval();
    };
    // swirl about the x axis, twist angle amplitude * x * t
    auto unmap = [amplitude](const Vec3& x, double t) {
        const double a = -amplitude * x.x() * t;
        const double ca = std::cos(a), sa = std::sin(a);
        return Vec3(x.x(), ca * x.y() - sa * x.z(), sa * x.y() + ca * x.z());
    };
    s.sdf = [=](const Vec3& x, double t) { return phi0(unmap(x, t)); };
    s.grad_sdf = [=](const Vec3& x, double t) {
        const double a = -amplitude * x.x() * t;
        const double ca = std::cos(a), sa = std::sin(a);
        const double dadx = -amplitude * t;
        Eigen::Matrix3d J;  // Jacobian of unmap wrt x
        J << 1.0, 0.0, 0.0,
            dadx * (-sa * x.y() - ca * x.z()), ca, -sa,
            dadx * (ca * x.y() - sa * x.z()), sa, ca;
        return (J.transpose() * grad0(unmap(x, t))).eval();
    };
    s.dsdf_dt = [=](const Vec3& x, double t) {
        const double a = -amplitude * x.x() * t;
        const double ca = std::cos(a), sa = std::sin(a);
        const double dadt = -amplitude * x.x();
        const Vec3 dy(0.0, dadt * (-sa * x.y() - ca * x.z()), dadt * (ca * x.y() - sa * x.z()));
        return grad0(unmap(x, t)).dot(dy);
    };
    // curl of (-amplitude*x*(y^2+z^2)/2, 0, 0): divergence-free by construction
    s.velocity = [amplitude](const Vec3& x, double) {
        return Vec3(0.0, -amplitude * x.x() * x.z(), amplitude * x.x() * x.y());
    };
    s.flow = [amplitude](const Vec3& x0, double t) {
        const double a = amplitude * x0.x() * t;
        const double ca = std::cos(a), sa = std::sin(a);
        return Vec3(x0.x(), ca * x0.y() - sa * x0.z(), sa * x0.y() + ca * x0.z());
    };
    return s;
}

CorrespondencePair make_pair(const AnalyticScene& scene, int n_points, int n_matches,
                             double noise_sigma, double drop_fraction, std::uint64_t seed) {
    if (n_points < 1) throw std::invalid_argument("make_pair: need at least one point");
    if (n_matches > n_points) throw std::invalid_argument("make_pair: more matches than points");
    if (drop_fraction < 0.0 || drop_fraction > 1.0)
        throw std::invalid_argument("make_pair: drop_fraction outside [0,1]");
    Rng rng(seed);
    Rng sample_rng = rng.fork(1);
    Rng shuffle_rng = rng.fork(2);
    Rng noise_rng = rng.fork(3);

    CorrespondencePair pair;
    pair.source = scene.sample_surface(n_points, 0.0, sample_rng);
    pair.source.frame_id = 0;

    // Target cloud is the flow image of the source, in shuffled order.
    std::vector<int> perm(static_cast<std::size_t>(n_points));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n_points - 1; i > 0; --i)
        std::swap(perm[static_cast<std::size_t>(i)],
                  perm[static_cast<std::size_t>(shuffle_rng.below(static_cast<std::uint64_t>(i + 1)))]);

    pair.target.points.resize(n_points, 3);
    pair.target.normals.resize(n_points, 3);
    pair.target.frame_id = 1;
    for (int i = 0; i < n_points; ++i) {
        const Vec3 x1 = scene.flow(pair.source.points.row(i).transpose(), 1.0);
        pair.target.points.row(perm[static_cast<std::size_t>(i)]) = x1.transpose();
        pair.target.normals.row(perm[static_cast<std::size_t>(i)]) =
            scene.grad_sdf(x1, 1.0).normalized().transpose();
    }

    // Pick match subset, perturb the matched target positions tangentially.
    std::vector<int> order(static_cast<std::size_t>(n_points));
    std::iota(order.begin(), order.end(), 0);
    for (int i = n_points - 1; i > 0; --i)
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(shuffle_rng.below(static_cast<std::uint64_t>(i + 1)))]);
    const int kept = n_matches - static_cast<int>(std::round(drop_fraction * n_matches));
    for (int m = 0; m < kept; ++m) {
        const int i = order[static_cast<std::size_t>(m)];
        const int j = perm[static_cast<std::size_t>(i)];
        if (noise_sigma > 0.0) {
            const Vec3 n = pair.target.normals.row(j).transpose();
            Vec3 t1, t2;
            tangent_basis(n, t1, t2);
            const Vec3 moved = pair.target.points.row(j).transpose() +
                               noise_sigma * (noise_rng.normal() * t1 + noise_rng.normal() * t2);
            pair.target.points.row(j) = moved.transpose();
            pair.target.normals.row(j) = scene.grad_sdf(moved, 1.0).normalized().transpose();
        }
        pair.matches.emplace_back(i, j);
    }
    pair.unsupervised = pair.matches.empty();
    pair.validate();
    return pair;
}

TriMesh analytic_intermediate(const AnalyticScene& scene, double t, int resolution) {
    return extract_level_set(scene.sdf_fn(t), scene.domain, resolution);
}

}  // namespace veloform
