#pragma once

#include <functional>
#include <map>
#include <vector>

#include "gnnx/matrix.hpp"

namespace gnnx {

enum class Op {
  Leaf,
  MatMul,
  Add,            // n-ary, all operands same shape
  Mul,            // elementwise
  Relu,
  Sigmoid,
  Tanh,
  Log,            // clamped below at kLogFloor to keep values finite
  Sum,            // all entries -> 1x1
  SoftmaxRows,    // row-wise, with row-max subtraction
  Concat,         // payload axis: 0 stacks rows, 1 joins columns
  Scale,          // payload: constant factor
};

const char* op_name(Op op);

inline constexpr double kLogFloor = 1e-12;

struct TapeNode {
  Op op = Op::Leaf;
  std::vector<int> args;
  DenseMatrix value;
  DenseMatrix adjoint;  // materialized during backward
  double factor = 1.0;  // Scale payload
  int axis = 0;         // Concat payload
};

// Flat eagerly-evaluated tape. Single-owner while recording; once a tape is
// no longer being appended to, values may be read from any thread.
class Tape {
public:
  int record(Op op, std::vector<int> args, double factor = 1.0, int axis = 0);

  int leaf(DenseMatrix v) { return record(Op::Leaf, {}, 1.0, 0, std::move(v)); }
  int constant(double v) { return leaf(DenseMatrix::scalar(v)); }
  int matmul(int a, int b) { return record(Op::MatMul, {a, b}); }
  int add(std::vector<int> xs) { return record(Op::Add, std::move(xs)); }
  int add(int a, int b) { return record(Op::Add, {a, b}); }
  int mul(int a, int b) { return record(Op::Mul, {a, b}); }
  int relu(int a) { return record(Op::Relu, {a}); }
  int sigmoid(int a) { return record(Op::Sigmoid, {a}); }
  int tanh(int a) { return record(Op::Tanh, {a}); }
  int log(int a) { return record(Op::Log, {a}); }
  int sum(int a) { return record(Op::Sum, {a}); }
  int softmax_rows(int a) { return record(Op::SoftmaxRows, {a}); }
  int concat(std::vector<int> xs, int axis) { return record(Op::Concat, std::move(xs), 1.0, axis); }
  int scale(int a, double factor) { return record(Op::Scale, {a}, factor); }

  const DenseMatrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse pass from a 1x1 node. Adjoints are reset on every call; the
  // result maps every leaf reachable from `loss` to its gradient.
  std::map<int, DenseMatrix> backward(int loss);

private:
  int record(Op op, std::vector<int> args, double factor, int axis, DenseMatrix value);
  DenseMatrix evaluate(Op op, const std::vector<int>& args, double factor, int axis) const;
  void check_id(int id) const;

  std::vector<TapeNode> nodes_;
};

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued function of a single leaf. `build` receives a fresh
// tape and the leaf id and must return the id of a 1x1 node.
double grad_check(const std::function<int(Tape&, int)>& build, const DenseMatrix& point,
                  double step);

}  // namespace gnnx
