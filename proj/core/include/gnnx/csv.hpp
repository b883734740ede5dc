#pragma once

#include <filesystem>
#include <vector>

#include "gnnx/graph.hpp"
#include "gnnx/matrix.hpp"

namespace gnnx {

// Arc list: header `src,dst,weight`, one arc per line.
void write_arcs_csv(const std::filesystem::path& path, const std::vector<Arc>& arcs);
std::vector<Arc> read_arcs_csv(const std::filesystem::path& path);

// Feature matrix: header `node,f0,...,f{d-1}`, rows in node order.
void write_features_csv(const std::filesystem::path& path, const DenseMatrix& features);
DenseMatrix read_features_csv(const std::filesystem::path& path);

// Labels: header `node,label`.
void write_labels_csv(const std::filesystem::path& path, const std::vector<int>& labels);
std::vector<int> read_labels_csv(const std::filesystem::path& path);

}  // namespace gnnx
