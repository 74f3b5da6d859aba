#include "veloform/archive.hpp"

#include "veloform/util.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace veloform {

namespace {

constexpr char kMagic[8] = {'V', 'E', 'L', 'O', 'F', 'R', 'M', '1'};

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::size_t dtype_size(const std::string& dtype) {
    if (dtype == "float32") return 4;
    if (dtype == "float64") return 8;
    throw std::runtime_error("unknown tensor dtype: " + dtype);
}

void encode(const Tensor& t, std::string& out) {
    if (t.dtype == "float32") {
        for (Eigen::Index i = 0; i < t.data.size(); ++i) {
            const float f = static_cast<float>(t.data[i]);
            char bytes[4];
            std::memcpy(bytes, &f, 4);
            out.append(bytes, 4);
        }
    } else {
        for (Eigen::Index i = 0; i < t.data.size(); ++i) {
            char bytes[8];
            std::memcpy(bytes, &t.data[i], 8);
            out.append(bytes, 8);
        }
    }
}

void decode(Tensor& t, const char* bytes, std::size_t nbytes) {
    const Eigen::Index n = static_cast<Eigen::Index>(element_count(t.shape));
    if (nbytes != static_cast<std::size_t>(n) * dtype_size(t.dtype))
        throw std::runtime_error("tensor blob size mismatch");
    t.data.resize(n);
    if (t.dtype == "float32") {
        for (Eigen::Index i = 0; i < n; ++i) {
            float f;
            std::memcpy(&f, bytes + 4 * i, 4);
            t.data[i] = static_cast<double>(f);
        }
    } else {
        for (Eigen::Index i = 0; i < n; ++i) std::memcpy(&t.data[i], bytes + 8 * i, 8);
    }
}

}  // namespace

Eigen::MatrixXd Tensor::matrix() const {
    if (shape.size() != 2) throw std::runtime_error("tensor is not 2-D");
    // stored row-major
    Eigen::MatrixXd m(rows(), cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data[r * m.cols() + c];
    return m;
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m, const std::string& dtype) {
    Tensor t;
    t.dtype = dtype;
    t.shape = {m.rows(), m.cols()};
    t.data.resize(m.size());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) t.data[r * m.cols() + c] = m(r, c);
    return t;
}

Tensor Tensor::from_vector(const Eigen::VectorXd& v, const std::string& dtype) {
    Tensor t;
    t.dtype = dtype;
    t.shape = {v.size()};
    t.data = v;
    return t;
}

void Archive::save(const std::string& path) const {
    nlohmann::json manifest = this->manifest;
    nlohmann::json tensor_index = nlohmann::json::array();
    std::string blob;
    for (const auto& [name, t] : tensors) {  // std::map: deterministic name order
        nlohmann::json entry;
        entry["name"] = name;
        entry["dtype"] = t.dtype;
        entry["shape"] = t.shape;
        entry["offset"] = blob.size();
        entry["nbytes"] = static_cast<std::size_t>(element_count(t.shape)) * dtype_size(t.dtype);
        tensor_index.push_back(entry);
        encode(t, blob);
    }
    manifest["tensors"] = tensor_index;

    const std::string mjson = manifest.dump();
    std::string out;
    out.reserve(8 + 8 + mjson.size() + blob.size());
    out.append(kMagic, 8);
    const std::uint64_t mlen = mjson.size();
    char lenbytes[8];
    std::memcpy(lenbytes, &mlen, 8);
    out.append(lenbytes, 8);
    out += mjson;
    out += blob;
    atomic_write_file(path, out);
}

Archive Archive::load(const std::string& path) {
    const std::string raw = read_text_file(path);
    if (raw.size() < 16 || std::memcmp(raw.data(), kMagic, 8) != 0)
        throw std::runtime_error(path + ": not a veloform archive");
    std::uint64_t mlen = 0;
    std::memcpy(&mlen, raw.data() + 8, 8);
    if (16 + mlen > raw.size()) throw std::runtime_error(path + ": truncated manifest");

    Archive a;
    a.manifest = nlohmann::json::parse(raw.substr(16, mlen));
    const char* blob = raw.data() + 16 + mlen;
    const std::size_t blob_size = raw.size() - 16 - mlen;
    for (const auto& entry : a.manifest.at("tensors")) {
        Tensor t;
        t.dtype = entry.at("dtype").get<std::string>();
        t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        const std::size_t nbytes = entry.at("nbytes").get<std::size_t>();
        if (offset + nbytes > blob_size) throw std::runtime_error(path + ": truncated tensor data");
        decode(t, blob + offset, nbytes);
        a.tensors[entry.at("name").get<std::string>()] = t;
    }
    return a;
}

const Tensor& Archive::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw std::runtime_error("archive tensor missing: " + name);
    return it->second;
}

}  // namespace veloform
