#pragma once

#include <string>
#include <vector>

#include "dap/common.hpp"
#include "dap/fom.hpp"
#include "dap/pipeline.hpp"

namespace dap::io {

/// Binary tensor container: magic "DAPT", version u16, dtype u8 (1 = f64),
/// rank u8, dims u64 little-endian, then row-major little-endian f64 payload.
struct TensorData {
    std::vector<std::uint64_t> dims;
    std::vector<double> data;
};

void write_tensor(const std::string& path, const TensorData& tensor);
TensorData read_tensor(const std::string& path);

void write_matrix(const std::string& path, const Mat& m);
Mat read_matrix(const std::string& path);

/// Dataset directory: manifest.json plus one trajectory TensorFile per
/// parameter.
void save_snapshots(const std::string& dir, const fom::SnapshotSet& set);
fom::SnapshotSet load_snapshots(const std::string& dir);

/// Single-file checkpoint: magic "DAPC", version u16, u64 JSON length, JSON
/// metadata (architecture, normalization, grid, tensor table), raw f64 blobs.
void save_bundle(const std::string& path, const pipeline::ModelBundle& bundle);
pipeline::ModelBundle load_bundle(const std::string& path);

/// RFC-4180-style CSV with a header row and '.' decimal separator.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

std::vector<pipeline::Query> load_queries_csv(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace dap::io
