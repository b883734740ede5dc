#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gnnx {

// Row-major dense matrix of doubles. Everything trainable or explainable
// in this project (weights, masks, features, edge weights) lives in one of
// these; graphs are small enough that dense storage is the simple answer.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  DenseMatrix(std::size_t r, std::size_t c, std::vector<double> values);
  static DenseMatrix row_vector(std::span<const double> values);
  static DenseMatrix scalar(double v);
  static DenseMatrix identity(std::size_t n);

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const DenseMatrix& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_str() const;
  bool all_finite() const;

  DenseMatrix row(std::size_t r) const;
  DenseMatrix transposed() const;

  bool operator==(const DenseMatrix& o) const = default;
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

// Shortest decimal representation that round-trips the exact double.
// Used by every text artifact (CSV, DOT); JSON output already does this.
std::string format_double(double v);

}  // namespace gnnx
