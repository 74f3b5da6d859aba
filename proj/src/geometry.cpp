#include "veloform/geometry.hpp"

#include "veloform/util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace veloform {

namespace {

bool all_finite(const MatX3& m) { return m.allFinite(); }

// Nearest-neighbor queries against a fixed reference cloud. Brute force for
// small clouds, uniform hash grid above kGridThreshold; both produce the same
// answers.
class NearestNeighbor {
public:
    static constexpr Eigen::Index kGridThreshold = 1000;

    explicit NearestNeighbor(const MatX3& ref) : ref_(ref) {
        const Eigen::Index n = ref.rows();
        if (n > kGridThreshold) {
            lo_ = ref.colwise().minCoeff();
            const Vec3 hi = ref.colwise().maxCoeff();
            const double vol = std::max((hi - lo_).prod(), 1e-300);
            cell_ = std::max(std::cbrt(vol / static_cast<double>(n)), 1e-12);
            cells_.reserve(static_cast<std::size_t>(n));
            min_cell_ = cell_of(lo_);
            max_cell_ = cell_of(hi);
            for (Eigen::Index i = 0; i < n; ++i) {
                cells_[key(cell_of(ref.row(i).transpose()))].push_back(static_cast<int>(i));
            }
            use_grid_ = true;
        }
    }

    // Squared distance to the closest reference point.
    double query_sq(const Vec3& q) const {
        if (!use_grid_) {
            return (ref_.rowwise() - q.transpose()).rowwise().squaredNorm().minCoeff();
        }
        const Eigen::Vector3i c0 = cell_of(q);
        // Rings below ring_lo contain no grid cells; ring_hi reaches the
        // farthest grid cell, so scanning through it visits every cell.
        int ring_lo = 0, ring_hi = 0;
        for (int k = 0; k < 3; ++k) {
            ring_lo = std::max({ring_lo, min_cell_[k] - c0[k], c0[k] - max_cell_[k]});
            ring_hi = std::max({ring_hi, std::abs(min_cell_[k] - c0[k]), std::abs(max_cell_[k] - c0[k])});
        }
        double best = std::numeric_limits<double>::infinity();
        for (int ring = ring_lo; ring <= ring_hi; ++ring) {
            // Any cell at Chebyshev ring r is at least (r-1)*cell from q, so
            // once best <= ((ring-1)*cell)^2 no farther ring can improve.
            if (best < std::numeric_limits<double>::infinity()) {
                const double safe = (ring - 1) * cell_;
                if (safe > 0.0 && safe * safe >= best) break;
            }
            scan_ring(q, c0, ring, best);
        }
        return best;
    }

private:
    Eigen::Vector3i cell_of(const Vec3& p) const {
        return ((p - lo_) / cell_).array().floor().cast<int>().matrix();
    }
    static std::int64_t key(const Eigen::Vector3i& c) {
        return (static_cast<std::int64_t>(c.x()) * 73856093) ^
               (static_cast<std::int64_t>(c.y()) * 19349663) ^
               (static_cast<std::int64_t>(c.z()) * 83492791);
    }

    void scan_ring(const Vec3& q, const Eigen::Vector3i& c0, int ring, double& best) const {
        for (int dx = -ring; dx <= ring; ++dx) {
            for (int dy = -ring; dy <= ring; ++dy) {
                for (int dz = -ring; dz <= ring; ++dz) {
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
                    auto it = cells_.find(key(c0 + Eigen::Vector3i(dx, dy, dz)));
                    if (it == cells_.end()) continue;
                    for (int idx : it->second) {
                        best = std::min(best, (ref_.row(idx).transpose() - q).squaredNorm());
                    }
                }
            }
        }
    }

    const MatX3& ref_;
    bool use_grid_ = false;
    Vec3 lo_ = Vec3::Zero();
    double cell_ = 1.0;
    Eigen::Vector3i min_cell_ = Eigen::Vector3i::Zero();
    Eigen::Vector3i max_cell_ = Eigen::Vector3i::Zero();
    std::unordered_map<std::int64_t, std::vector<int>> cells_;
};

// Directed metrics: per-point squared NN distance from every row of `from`
// into `to`.
Eigen::VectorXd directed_nn_sq(const MatX3& from, const MatX3& to) {
    NearestNeighbor nn(to);
    Eigen::VectorXd out(from.rows());
    parallel_for(static_cast<std::size_t>(from.rows()), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            out[static_cast<Eigen::Index>(i)] = nn.query_sq(from.row(static_cast<Eigen::Index>(i)).transpose());
        }
    });
    return out;
}

}  // namespace

void PointCloud::validate() const {
    if (!all_finite(points)) throw std::invalid_argument("point cloud has non-finite coordinates");
    if (has_normals()) {
        if (normals.rows() != points.rows())
            throw std::invalid_argument("normals list length does not match points");
        if (!all_finite(normals)) throw std::invalid_argument("non-finite normals");
        for (Eigen::Index i = 0; i < normals.rows(); ++i) {
            if (std::abs(normals.row(i).norm() - 1.0) > 1e-6)
                throw std::invalid_argument("normals must have unit length");
        }
    }
}

void TriMesh::validate() const {
    if (!all_finite(vertices)) throw std::invalid_argument("mesh has non-finite vertices");
    const int n = static_cast<int>(vertices.rows());
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        const int a = faces(f, 0), b = faces(f, 1), c = faces(f, 2);
        if (a < 0 || b < 0 || c < 0 || a >= n || b >= n || c >= n)
            throw std::invalid_argument("face index out of range");
        if (a == b || b == c || a == c) throw std::invalid_argument("degenerate face");
    }
}

void CorrespondencePair::validate() const {
    source.validate();
    target.validate();
    if (matches.empty() && !unsupervised)
        throw std::invalid_argument("pair has no correspondences");
    for (const auto& [i, j] : matches) {
        if (i < 0 || i >= source.size() || j < 0 || j >= target.size())
            throw std::invalid_argument("correspondence index out of range");
    }
}

void AxisAlignedDomain::validate() const {
    if (!(min_corner.array() < max_corner.array()).all())
        throw std::invalid_argument("domain min_corner must be below max_corner");
}

std::pair<std::vector<PointCloud>, SimilarityTransform> normalize_to_domain(
    const std::vector<PointCloud>& clouds, const AxisAlignedDomain& domain) {
    domain.validate();
    Eigen::Index total = 0;
    for (const auto& c : clouds) total += c.size();
    if (total == 0) throw std::invalid_argument("no points");

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& c : clouds) {
        if (c.empty()) continue;
        lo = lo.cwiseMin(c.points.colwise().minCoeff().transpose());
        hi = hi.cwiseMax(c.points.colwise().maxCoeff().transpose());
    }

    const Vec3 dom_center = domain.center();
    const Vec3 target_half = 0.45 * domain.extent();  // 10% margin
    const Vec3 box_center = 0.5 * (lo + hi);
    const Vec3 box_half = 0.5 * (hi - lo);

    SimilarityTransform tf;
    const bool inside = (((box_center - dom_center).cwiseAbs() + box_half).array() <=
                         target_half.array() + 1e-15)
                            .all();
    if (!inside) {
        double s = 1.0;
        for (int k = 0; k < 3; ++k) {
            if (box_half[k] > 0.0) s = std::min(s, target_half[k] / box_half[k]);
        }
        tf.scale = s;
        tf.translation = dom_center - s * box_center;
    }

    std::vector<PointCloud> out = clouds;
    if (!tf.is_identity()) {
        for (auto& c : out) c.points = tf.apply(c.points);
    }
    return {std::move(out), tf};
}

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("chamfer_distance: empty cloud");
    const double ab = directed_nn_sq(a.points, b.points).mean();
    const double ba = directed_nn_sq(b.points, a.points).mean();
    return 0.5 * (ab + ba);
}

double hausdorff_distance(const PointCloud& a, const PointCloud& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("hausdorff_distance: empty cloud");
    const double ab = directed_nn_sq(a.points, b.points).maxCoeff();
    const double ba = directed_nn_sq(b.points, a.points).maxCoeff();
    return std::sqrt(std::max(ab, ba));
}

double surface_area(const TriMesh& m) {
    m.validate();
    double area = 0.0;
    for (Eigen::Index f = 0; f < m.faces.rows(); ++f) {
        const Vec3 a = m.vertices.row(m.faces(f, 0)).transpose();
        const Vec3 b = m.vertices.row(m.faces(f, 1)).transpose();
        const Vec3 c = m.vertices.row(m.faces(f, 2)).transpose();
        area += 0.5 * (b - a).cross(c - a).norm();
    }
    return area;
}

double surface_area_std(const std::vector<double>& areas) {
    if (areas.size() < 2) throw std::invalid_argument("surface_area_std needs at least 2 areas");
    const double n_plus_1 = static_cast<double>(areas.size());
    double mean = 0.0;
    for (double a : areas) mean += a;
    mean /= n_plus_1;
    double ss = 0.0;
    for (double a : areas) ss += (a - mean) * (a - mean);
    return std::sqrt(ss / (n_plus_1 - 1.0));
}

double pointwise_rmse(const PointCloud& pred, const PointCloud& gt) {
    if (pred.size() != gt.size())
        throw std::invalid_argument("pointwise_rmse: size mismatch");
    if (pred.empty()) throw std::invalid_argument("pointwise_rmse: empty cloud");
    return std::sqrt((pred.points - gt.points).rowwise().squaredNorm().mean());
}

}  // namespace veloform
