#pragma once

#include "veloform/geometry.hpp"

#include <functional>

namespace veloform {

// Batched scalar field evaluator used for level-set triangulation.
using ScalarGridFn = std::function<Eigen::VectorXd(const MatX3&)>;

// Triangulates the zero level set of `field` sampled on a uniform
// resolution^3 lattice over the domain. Cells are split into six conforming
// tetrahedra (Kuhn subdivision) and crossings are placed by linear
// interpolation of the field values, so shared vertices are exact across
// cells and the mesh is watertight wherever the surface stays inside the
// domain. Throws "empty level set" when the field has no sign change.
TriMesh extract_level_set(const ScalarGridFn& field, const AxisAlignedDomain& domain,
                          int resolution);

// Length of a lattice cell diagonal; vertex field values are bounded by twice
// this for Lipschitz-bounded fields.
double grid_cell_diagonal(const AxisAlignedDomain& domain, int resolution);

}  // namespace veloform
