#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace veloform {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using MatX3i = Eigen::Matrix<int, Eigen::Dynamic, 3>;

// Unordered point set in normalized coordinates, optionally oriented.
struct PointCloud {
    MatX3 points;    // one row per point
    MatX3 normals;   // unit rows; zero rows when absent
    int frame_id = -1;

    Eigen::Index size() const { return points.rows(); }
    bool empty() const { return points.rows() == 0; }
    bool has_normals() const { return normals.rows() > 0; }

    // Throws std::invalid_argument on non-finite coordinates, a
    // normals/points length mismatch, or non-unit normals.
    void validate() const;
};

struct TriMesh {
    MatX3 vertices;
    MatX3i faces;

    Eigen::Index vertex_count() const { return vertices.rows(); }
    Eigen::Index face_count() const { return faces.rows(); }

    // Throws on out-of-range indices, degenerate faces, non-finite vertices.
    void validate() const;
};

// Source/target clouds plus a sparse (source_index, target_index) matching.
// The matching may cover any subset of the points; an empty matching is only
// legal when the pair is explicitly flagged unsupervised.
struct CorrespondencePair {
    PointCloud source;
    PointCloud target;
    std::vector<std::pair<int, int>> matches;
    bool unsupervised = false;

    void validate() const;
};

struct AxisAlignedDomain {
    Vec3 min_corner;
    Vec3 max_corner;

    static AxisAlignedDomain unit_cube() { return {Vec3(-1, -1, -1), Vec3(1, 1, 1)}; }

    Vec3 extent() const { return max_corner - min_corner; }
    Vec3 center() const { return 0.5 * (min_corner + max_corner); }
    bool contains(const Vec3& p) const {
        return (p.array() >= min_corner.array()).all() && (p.array() <= max_corner.array()).all();
    }
    void validate() const;
};

// Uniform scale followed by translation: x' = scale * x + translation.
struct SimilarityTransform {
    double scale = 1.0;
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return scale * p + translation; }
    MatX3 apply(const MatX3& pts) const {
        return (pts * scale).rowwise() + translation.transpose();
    }
    SimilarityTransform inverse() const { return {1.0 / scale, -translation / scale}; }
    bool is_identity(double tol = 0.0) const {
        return std::abs(scale - 1.0) <= tol && translation.cwiseAbs().maxCoeff() <= tol;
    }
};

// Maps the union bounding box of the clouds into `domain`, leaving a 10%
// margin (the target box is the domain shrunk by 0.9 about its center). A
// cloud set already inside the margin box is returned untouched with the
// identity transform; otherwise one shared uniform scale (never above 1) and
// translation is applied to every cloud.
std::pair<std::vector<PointCloud>, SimilarityTransform> normalize_to_domain(
    const std::vector<PointCloud>& clouds, const AxisAlignedDomain& domain);

// Symmetric mean of squared nearest-neighbor distances:
//   0.5 * (mean_a min_b |a-b|^2 + mean_b min_a |b-a|^2).
double chamfer_distance(const PointCloud& a, const PointCloud& b);

// max over both directions of the largest nearest-neighbor distance
// (unsquared).
double hausdorff_distance(const PointCloud& a, const PointCloud& b);

double surface_area(const TriMesh& m);

// sqrt( sum_{t=0}^{N} (A_t - mean)^2 / N ) over N+1 areas.
double surface_area_std(const std::vector<double>& areas);

// sqrt of the mean squared distance between index-aligned entries.
double pointwise_rmse(const PointCloud& pred, const PointCloud& gt);

}  // namespace veloform
