#include "veloform/surface_extract.hpp"

#include <array>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace veloform {

namespace {

using Eigen::VectorXd;

// Kuhn subdivision: six tetrahedra sharing the 0-7 cube diagonal. Using the
// same split in every cell keeps face diagonals consistent between neighbors.
constexpr int kTets[6][4] = {
    {0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7}, {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7},
};

struct MeshBuilder {
    std::vector<Vec3> vertices;
    std::vector<Eigen::Vector3i> faces;
    std::unordered_map<std::uint64_t, int> edge_vertex;

    int crossing(std::uint64_t node_a, std::uint64_t node_b, Vec3 pa, Vec3 pb, double fa,
                 double fb) {
        if (node_a > node_b) {
            std::swap(node_a, node_b);
            std::swap(pa, pb);
            std::swap(fa, fb);
        }
        const std::uint64_t key = node_a * 0x100000000ULL ^ node_b;
        auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;
        const double t = fa / (fa - fb);
        vertices.push_back(pa + t * (pb - pa));
        const int idx = static_cast<int>(vertices.size()) - 1;
        edge_vertex.emplace(key, idx);
        return idx;
    }

    // Triangle oriented so the normal points from the inside (negative) side
    // toward the outside.
    void triangle(int a, int b, int c, const Vec3& toward_outside) {
        const Vec3 n =
            (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]);
        if (n.dot(toward_outside) < 0.0)
            faces.emplace_back(a, c, b);
        else
            faces.emplace_back(a, b, c);
    }
};

}  // namespace

double grid_cell_diagonal(const AxisAlignedDomain& domain, int resolution) {
    return (domain.extent() / static_cast<double>(resolution - 1)).norm();
}

TriMesh extract_level_set(const ScalarGridFn& field, const AxisAlignedDomain& domain,
                          int resolution) {
    domain.validate();
    if (resolution < 16) throw std::invalid_argument("resolution must be >= 16");
    const int res = resolution;
    const Vec3 step = domain.extent() / static_cast<double>(res - 1);

    auto node_pos = [&](int i, int j, int k) {
        return Vec3(domain.min_corner.x() + i * step.x(), domain.min_corner.y() + j * step.y(),
                    domain.min_corner.z() + k * step.z());
    };
    auto node_id = [&](int i, int j, int k) {
        return static_cast<std::uint64_t>((static_cast<std::uint64_t>(k) * res + j) * res + i);
    };

    // Evaluate one z-slab of lattice nodes at a time; cells only need two.
    auto eval_slab = [&](int k) {
        MatX3 pts(res * res, 3);
        for (int j = 0; j < res; ++j)
            for (int i = 0; i < res; ++i) pts.row(j * res + i) = node_pos(i, j, k).transpose();
        VectorXd v = field(pts);
        if (v.size() != pts.rows()) throw std::runtime_error("field evaluator returned wrong size");
        return v;
    };

    MeshBuilder mb;
    VectorXd slab_lo = eval_slab(0);
    for (int k = 0; k + 1 < res; ++k) {
        VectorXd slab_hi = eval_slab(k + 1);
        for (int j = 0; j + 1 < res; ++j) {
            for (int i = 0; i + 1 < res; ++i) {
                // cube corner c = (dx, dy, dz) bits
                std::array<double, 8> f;
                std::array<Vec3, 8> p;
                std::array<std::uint64_t, 8> id;
                for (int c = 0; c < 8; ++c) {
                    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
                    const VectorXd& slab = dz ? slab_hi : slab_lo;
                    f[c] = slab[(j + dy) * res + (i + dx)];
                    p[c] = node_pos(i + dx, j + dy, k + dz);
                    id[c] = node_id(i + dx, j + dy, k + dz);
                }
                for (const auto& tet : kTets) {
                    int inside[4], outside[4];
                    int ni = 0, no = 0;
                    for (int v = 0; v < 4; ++v) {
                        // f == 0 counts as outside so crossings stay strict
                        if (f[tet[v]] < 0.0)
                            inside[ni++] = tet[v];
                        else
                            outside[no++] = tet[v];
                    }
                    if (ni == 0 || ni == 4) continue;
                    Vec3 mean_in = Vec3::Zero(), mean_out = Vec3::Zero();
                    for (int v = 0; v < ni; ++v) mean_in += p[inside[v]];
                    for (int v = 0; v < no; ++v) mean_out += p[outside[v]];
                    const Vec3 outward = mean_out / no - mean_in / ni;

                    auto cross = [&](int a, int b) {
                        return mb.crossing(id[a], id[b], p[a], p[b], f[a], f[b]);
                    };
                    if (ni == 1) {
                        mb.triangle(cross(inside[0], outside[0]), cross(inside[0], outside[1]),
                                    cross(inside[0], outside[2]), outward);
                    } else if (ni == 3) {
                        mb.triangle(cross(inside[0], outside[0]), cross(inside[1], outside[0]),
                                    cross(inside[2], outside[0]), outward);
                    } else {
                        const int pr = cross(inside[0], outside[0]);
                        const int ps = cross(inside[0], outside[1]);
                        const int qr = cross(inside[1], outside[0]);
                        const int qs = cross(inside[1], outside[1]);
                        mb.triangle(pr, ps, qs, outward);
                        mb.triangle(pr, qs, qr, outward);
                    }
                }
            }
        }
        slab_lo = std::move(slab_hi);
    }

    if (mb.faces.empty()) throw std::runtime_error("empty level set");
    TriMesh mesh;
    mesh.vertices.resize(static_cast<Eigen::Index>(mb.vertices.size()), 3);
    for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i)
        mesh.vertices.row(i) = mb.vertices[static_cast<std::size_t>(i)].transpose();
    mesh.faces.resize(static_cast<Eigen::Index>(mb.faces.size()), 3);
    for (Eigen::Index t = 0; t < mesh.faces.rows(); ++t)
        mesh.faces.row(t) = mb.faces[static_cast<std::size_t>(t)].transpose();
    return mesh;
}

}  // namespace veloform
