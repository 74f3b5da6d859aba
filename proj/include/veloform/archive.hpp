#pragma once

#include <Eigen/Dense>

#include "json.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace veloform {

// Self-describing checkpoint container: a JSON manifest followed by named
// little-endian tensor blobs. Parameters are exported as float32 by default;
// training state is stored as float64 so interrupted runs resume exactly.
// Loading then saving an archive reproduces the file byte for byte.
//
// Layout: "VELOFRM1" magic, u64 manifest length, manifest JSON, blob data.
// The manifest's "tensors" array records name/dtype/shape/offset for each
// blob in name order.

struct Tensor {
    std::string dtype = "float32";  // "float32" or "float64"
    std::vector<std::int64_t> shape;
    Eigen::VectorXd data;  // always held as doubles in memory

    Eigen::Index rows() const { return shape.empty() ? 0 : static_cast<Eigen::Index>(shape[0]); }
    Eigen::Index cols() const {
        return shape.size() < 2 ? 1 : static_cast<Eigen::Index>(shape[1]);
    }
    Eigen::MatrixXd matrix() const;
    static Tensor from_matrix(const Eigen::MatrixXd& m, const std::string& dtype);
    static Tensor from_vector(const Eigen::VectorXd& v, const std::string& dtype);
};

struct Archive {
    nlohmann::json manifest;  // free-form metadata; "tensors" is overwritten on save
    std::map<std::string, Tensor> tensors;

    void save(const std::string& path) const;
    static Archive load(const std::string& path);

    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return tensors.count(name) > 0; }
};

}  // namespace veloform
