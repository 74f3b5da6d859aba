#include "veloform/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace veloform {

namespace {

std::string lower_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    return in;
}

MatX3 rows_to_matrix(const std::vector<Vec3>& rows) {
    MatX3 m(static_cast<Eigen::Index>(rows.size()), 3);
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) = rows[static_cast<std::size_t>(i)].transpose();
    return m;
}

}  // namespace

PointCloud load_point_cloud(const std::string& path) {
    return lower_ext(path) == ".ply" ? load_point_cloud_ply(path) : load_point_cloud_xyz(path);
}

PointCloud load_point_cloud_ply(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    std::string line;
    if (!std::getline(in, line) || line.substr(0, 3) != "ply")
        throw std::runtime_error(path + ": not a PLY file");

    long vertex_count = -1;
    std::vector<std::string> props;  // vertex property names in declared order
    bool in_vertex_element = false;
    bool ascii = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            ascii = (fmt == "ascii");
        } else if (tok == "element") {
            std::string name;
            long count = 0;
            ls >> name >> count;
            in_vertex_element = (name == "vertex");
            if (in_vertex_element) vertex_count = count;
        } else if (tok == "property" && in_vertex_element) {
            std::string type, name;
            ls >> type >> name;
            if (type == "list") throw std::runtime_error(path + ": list property on vertex element");
            props.push_back(name);
        } else if (tok == "end_header") {
            break;
        }
    }
    if (!ascii) throw std::runtime_error(path + ": only ASCII PLY is supported");
    if (vertex_count < 0) throw std::runtime_error(path + ": missing vertex element");

    auto index_of = [&](const std::string& name) {
        auto it = std::find(props.begin(), props.end(), name);
        return it == props.end() ? -1 : static_cast<int>(it - props.begin());
    };
    const int ix = index_of("x"), iy = index_of("y"), iz = index_of("z");
    if (ix < 0 || iy < 0 || iz < 0) throw std::runtime_error(path + ": vertex element lacks x/y/z");
    const int inx = index_of("nx"), iny = index_of("ny"), inz = index_of("nz");
    const bool has_normals = inx >= 0 && iny >= 0 && inz >= 0;

    PointCloud cloud;
    cloud.points.resize(vertex_count, 3);
    if (has_normals) cloud.normals.resize(vertex_count, 3);
    std::vector<double> values(props.size());
    for (long i = 0; i < vertex_count; ++i) {
        for (std::size_t p = 0; p < props.size(); ++p) {
            if (!(in >> values[p])) throw std::runtime_error(path + ": truncated vertex data");
        }
        cloud.points.row(i) << values[ix], values[iy], values[iz];
        if (has_normals) cloud.normals.row(i) << values[inx], values[iny], values[inz];
    }
    cloud.validate();
    return cloud;
}

PointCloud load_point_cloud_xyz(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    std::vector<Vec3> pts;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        Vec3 p;
        if (ls >> p.x() >> p.y() >> p.z()) pts.push_back(p);
    }
    PointCloud cloud;
    cloud.points = rows_to_matrix(pts);
    cloud.validate();
    return cloud;
}

void save_point_cloud_ply(const std::string& path, const PointCloud& cloud) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << cloud.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (cloud.has_normals())
        out << "property double nx\nproperty double ny\nproperty double nz\n";
    out << "end_header\n";
    char buf[256];
    for (Eigen::Index i = 0; i < cloud.size(); ++i) {
        if (cloud.has_normals()) {
            std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g\n",
                          cloud.points(i, 0), cloud.points(i, 1), cloud.points(i, 2),
                          cloud.normals(i, 0), cloud.normals(i, 1), cloud.normals(i, 2));
        } else {
            std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n",
                          cloud.points(i, 0), cloud.points(i, 1), cloud.points(i, 2));
        }
        out << buf;
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<std::pair<int, int>> load_matches(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    std::vector<std::pair<int, int>> matches;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        int i = 0, j = 0;
        if (ls >> i >> j) matches.emplace_back(i, j);
    }
    return matches;
}

void save_matches(const std::string& path, const std::vector<std::pair<int, int>>& matches) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    for (const auto& [i, j] : matches) out << i << " " << j << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

void save_mesh_obj(const std::string& path, const TriMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    char buf[256];
    for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n",
                      mesh.vertices(i, 0), mesh.vertices(i, 1), mesh.vertices(i, 2));
        out << buf;
    }
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        out << "f " << mesh.faces(f, 0) + 1 << " " << mesh.faces(f, 1) + 1 << " "
            << mesh.faces(f, 2) + 1 << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

TriMesh load_mesh_obj(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    std::vector<Vec3> verts;
    std::vector<Eigen::Vector3i> faces;
    std::string line;
    auto face_index = [](const std::string& tok) {
        // "7", "7/1", "7/1/3", "7//3" all refer to vertex 7
        return std::stoi(tok.substr(0, tok.find('/')));
    };
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z())) throw std::runtime_error(path + ": bad vertex line");
            verts.push_back(p);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ls >> tok) idx.push_back(face_index(tok));
            if (idx.size() < 3) throw std::runtime_error(path + ": face with fewer than 3 vertices");
            // triangulate fans for robustness; output is v/f triangles anyway
            for (std::size_t k = 2; k < idx.size(); ++k)
                faces.emplace_back(idx[0] - 1, idx[k - 1] - 1, idx[k] - 1);
        }
    }
    TriMesh mesh;
    mesh.vertices = rows_to_matrix(verts);
    mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f)
        mesh.faces.row(f) = faces[static_cast<std::size_t>(f)].transpose();
    mesh.validate();
    return mesh;
}

}  // namespace veloform
