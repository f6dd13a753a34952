#pragma once

// Checkpoint files: <path>.json manifest (names, shapes, dtype, total size,
// content hash) plus <path>.bin with raw little-endian row-major payloads.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cplab/tensor.hpp"

namespace cplab {

struct TensorEntry {
    std::string name;
    std::vector<std::int64_t> shape;  // {rows, cols}
    std::vector<double> data;         // row-major, converted to dtype on write
};

// dtype is "f32" or "f64". extra_json, when non-empty, must be a JSON object
// payload stored under the manifest's "extra" key.
void save_tensors(const std::string& path_prefix, const std::vector<TensorEntry>& tensors,
                  const std::string& dtype, const std::string& extra_json = "");

struct LoadedTensors {
    std::vector<TensorEntry> tensors;
    std::string dtype;
    std::string extra_json;
    std::uint64_t content_hash = 0;
};

LoadedTensors load_tensors(const std::string& path_prefix);

bool checkpoint_exists(const std::string& path_prefix);

template <typename S>
TensorEntry to_entry(const std::string& name, const Mat<S>& m) {
    TensorEntry e;
    e.name = name;
    e.shape = {m.rows(), m.cols()};
    e.data.assign(m.data(), m.data() + m.size());
    return e;
}

template <typename S>
Mat<S> from_entry(const TensorEntry& e) {
    if (e.shape.size() != 2) throw UsageError("checkpoint tensor '" + e.name + "': expected 2-d shape");
    Mat<S> m(e.shape[0], e.shape[1]);
    if (static_cast<std::int64_t>(e.data.size()) != m.size()) {
        throw UsageError("checkpoint tensor '" + e.name + "': payload size mismatch");
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(e.data[static_cast<std::size_t>(i)]);
    return m;
}

}  // namespace cplab
