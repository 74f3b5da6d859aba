#pragma once

#include "veloform/geometry.hpp"

#include <string>
#include <utility>
#include <vector>

namespace veloform {

// Dispatches on extension: ".ply" -> ASCII PLY (x y z [nx ny nz]), anything
// else -> plain whitespace-separated "x y z" lines.
PointCloud load_point_cloud(const std::string& path);

PointCloud load_point_cloud_ply(const std::string& path);
PointCloud load_point_cloud_xyz(const std::string& path);
void save_point_cloud_ply(const std::string& path, const PointCloud& cloud);

// One "i j" 0-based integer pair per line; '#' comments and blank lines are
// skipped.
std::vector<std::pair<int, int>> load_matches(const std::string& path);
void save_matches(const std::string& path, const std::vector<std::pair<int, int>>& matches);

// OBJ with v/f records only.
void save_mesh_obj(const std::string& path, const TriMesh& mesh);
TriMesh load_mesh_obj(const std::string& path);

}  // namespace veloform
