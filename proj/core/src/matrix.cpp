#include "gnnx/matrix.hpp"

#include <charconv>
#include <cmath>

#include "gnnx/error.hpp"

namespace gnnx {

DenseMatrix::DenseMatrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (data.size() != rows * cols) {
    throw Error("DenseMatrix: " + std::to_string(data.size()) + " values for shape " +
                shape_str());
  }
}

DenseMatrix DenseMatrix::row_vector(std::span<const double> values) {
  return DenseMatrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

DenseMatrix DenseMatrix::scalar(double v) { return DenseMatrix(1, 1, {v}); }

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

std::string DenseMatrix::shape_str() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

bool DenseMatrix::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

DenseMatrix DenseMatrix::row(std::size_t r) const {
  DenseMatrix out(1, cols);
  for (std::size_t c = 0; c < cols; ++c) out.data[c] = at(r, c);
  return out;
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix out(cols, rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.at(c, r) = at(r, c);
  return out;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols != b.rows) {
    throw Error("matmul: shape mismatch (" + a.shape_str() + " vs " + b.shape_str() + ")");
  }
  DenseMatrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      const double* brow = &b.data[k * b.cols];
      double* orow = &out.data[i * out.cols];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace gnnx
