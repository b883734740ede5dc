#include "gnnx/tape.hpp"

#include <algorithm>
#include <cmath>

#include "gnnx/error.hpp"

namespace gnnx {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Mul: return "elementwise-mul";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Log: return "log";
    case Op::Sum: return "sum";
    case Op::SoftmaxRows: return "softmax-rows";
    case Op::Concat: return "concat";
    case Op::Scale: return "scale";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_error(Op op, const DenseMatrix& a, const DenseMatrix& b) {
  throw Error(std::string(op_name(op)) + ": shape mismatch (" + a.shape_str() + " vs " +
              b.shape_str() + ")");
}

}  // namespace

void Tape::check_id(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw Error("tape: node id " + std::to_string(id) + " not on tape");
  }
}

int Tape::record(Op op, std::vector<int> args, double factor, int axis) {
  if (op == Op::Leaf) throw Error("tape: leaf nodes carry a value, use leaf()");
  for (int a : args) check_id(a);
  DenseMatrix value = evaluate(op, args, factor, axis);
  return record(op, std::move(args), factor, axis, std::move(value));
}

int Tape::record(Op op, std::vector<int> args, double factor, int axis, DenseMatrix value) {
  if (!value.all_finite()) {
    throw Error(std::string(op_name(op)) + ": non-finite result");
  }
  TapeNode node;
  node.op = op;
  node.args = std::move(args);
  node.value = std::move(value);
  node.factor = factor;
  node.axis = axis;
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

DenseMatrix Tape::evaluate(Op op, const std::vector<int>& args, double factor, int axis) const {
  auto arg = [&](std::size_t i) -> const DenseMatrix& { return nodes_[static_cast<std::size_t>(args[i])].value; };
  switch (op) {
    case Op::Leaf:
      throw Error("tape: leaf has no evaluation");
    case Op::MatMul: {
      if (args.size() != 2) throw Error("matmul: expects 2 operands");
      const DenseMatrix& a = arg(0);
      const DenseMatrix& b = arg(1);
      if (a.cols != b.rows) shape_error(op, a, b);
      return gnnx::matmul(a, b);
    }
    case Op::Add: {
      if (args.empty()) throw Error("add: expects at least 1 operand");
      DenseMatrix out = arg(0);
      for (std::size_t i = 1; i < args.size(); ++i) {
        const DenseMatrix& x = arg(i);
        if (!out.same_shape(x)) shape_error(op, out, x);
        for (std::size_t j = 0; j < out.size(); ++j) out.data[j] += x.data[j];
      }
      return out;
    }
    case Op::Mul: {
      if (args.size() != 2) throw Error("elementwise-mul: expects 2 operands");
      DenseMatrix out = arg(0);
      const DenseMatrix& b = arg(1);
      if (!out.same_shape(b)) shape_error(op, out, b);
      for (std::size_t j = 0; j < out.size(); ++j) out.data[j] *= b.data[j];
      return out;
    }
    case Op::Relu: {
      DenseMatrix out = arg(0);
      for (double& v : out.data) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case Op::Sigmoid: {
      DenseMatrix out = arg(0);
      for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
      return out;
    }
    case Op::Tanh: {
      DenseMatrix out = arg(0);
      for (double& v : out.data) v = std::tanh(v);
      return out;
    }
    case Op::Log: {
      DenseMatrix out = arg(0);
      for (double& v : out.data) v = std::log(v < kLogFloor ? kLogFloor : v);
      return out;
    }
    case Op::Sum: {
      const DenseMatrix& a = arg(0);
      double s = 0.0;
      for (double v : a.data) s += v;
      return DenseMatrix::scalar(s);
    }
    case Op::SoftmaxRows: {
      DenseMatrix out = arg(0);
      for (std::size_t r = 0; r < out.rows; ++r) {
        double* row = &out.data[r * out.cols];
        double mx = row[0];
        for (std::size_t c = 1; c < out.cols; ++c) mx = std::max(mx, row[c]);
        double denom = 0.0;
        for (std::size_t c = 0; c < out.cols; ++c) {
          row[c] = std::exp(row[c] - mx);
          denom += row[c];
        }
        for (std::size_t c = 0; c < out.cols; ++c) row[c] /= denom;
      }
      return out;
    }
    case Op::Concat: {
      if (args.empty()) throw Error("concat: expects at least 1 operand");
      const DenseMatrix& first = arg(0);
      if (axis == 0) {
        std::size_t rows = 0;
        for (std::size_t i = 0; i < args.size(); ++i) {
          if (arg(i).cols != first.cols) shape_error(op, first, arg(i));
          rows += arg(i).rows;
        }
        DenseMatrix out(rows, first.cols);
        std::size_t offset = 0;
        for (std::size_t i = 0; i < args.size(); ++i) {
          const DenseMatrix& x = arg(i);
          std::copy(x.data.begin(), x.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(offset));
          offset += x.size();
        }
        return out;
      }
      if (axis == 1) {
        std::size_t cols = 0;
        for (std::size_t i = 0; i < args.size(); ++i) {
          if (arg(i).rows != first.rows) shape_error(op, first, arg(i));
          cols += arg(i).cols;
        }
        DenseMatrix out(first.rows, cols);
        std::size_t col_offset = 0;
        for (std::size_t i = 0; i < args.size(); ++i) {
          const DenseMatrix& x = arg(i);
          for (std::size_t r = 0; r < x.rows; ++r)
            for (std::size_t c = 0; c < x.cols; ++c) out.at(r, col_offset + c) = x.at(r, c);
          col_offset += x.cols;
        }
        return out;
      }
      throw Error("concat: axis must be 0 or 1");
    }
    case Op::Scale: {
      DenseMatrix out = arg(0);
      for (double& v : out.data) v *= factor;
      return out;
    }
  }
  throw Error("tape: unknown op");
}

std::map<int, DenseMatrix> Tape::backward(int loss) {
  check_id(loss);
  const TapeNode& loss_node = nodes_[static_cast<std::size_t>(loss)];
  if (loss_node.value.rows != 1 || loss_node.value.cols != 1) {
    throw Error("backward: loss must be 1x1, got " + loss_node.value.shape_str());
  }

  // mark nodes reachable from the loss
  std::vector<char> reachable(nodes_.size(), 0);
  {
    std::vector<int> stack{loss};
    reachable[static_cast<std::size_t>(loss)] = 1;
    while (!stack.empty()) {
      int id = stack.back();
      stack.pop_back();
      for (int a : nodes_[static_cast<std::size_t>(id)].args) {
        if (!reachable[static_cast<std::size_t>(a)]) {
          reachable[static_cast<std::size_t>(a)] = 1;
          stack.push_back(a);
        }
      }
    }
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (reachable[i]) {
      nodes_[i].adjoint = DenseMatrix(nodes_[i].value.rows, nodes_[i].value.cols);
    } else {
      nodes_[i].adjoint = DenseMatrix();
    }
  }
  nodes_[static_cast<std::size_t>(loss)].adjoint.data[0] = 1.0;

  for (int id = loss; id >= 0; --id) {
    if (!reachable[static_cast<std::size_t>(id)]) continue;
    const TapeNode& n = nodes_[static_cast<std::size_t>(id)];
    const DenseMatrix& g = n.adjoint;
    auto adj = [&](std::size_t i) -> DenseMatrix& { return nodes_[static_cast<std::size_t>(n.args[i])].adjoint; };
    auto val = [&](std::size_t i) -> const DenseMatrix& { return nodes_[static_cast<std::size_t>(n.args[i])].value; };
    switch (n.op) {
      case Op::Leaf:
        break;
      case Op::MatMul: {
        const DenseMatrix& a = val(0);
        const DenseMatrix& b = val(1);
        // dA += G * B^T, dB += A^T * G
        DenseMatrix& da = adj(0);
        for (std::size_t i = 0; i < a.rows; ++i)
          for (std::size_t j = 0; j < b.cols; ++j) {
            const double gij = g.at(i, j);
            if (gij == 0.0) continue;
            for (std::size_t k = 0; k < a.cols; ++k) da.at(i, k) += gij * b.at(k, j);
          }
        DenseMatrix& db = adj(1);
        for (std::size_t i = 0; i < a.rows; ++i)
          for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) db.at(k, j) += aik * g.at(i, j);
          }
        break;
      }
      case Op::Add: {
        for (std::size_t i = 0; i < n.args.size(); ++i) {
          DenseMatrix& d = adj(i);
          for (std::size_t j = 0; j < d.size(); ++j) d.data[j] += g.data[j];
        }
        break;
      }
      case Op::Mul: {
        DenseMatrix& da = adj(0);
        DenseMatrix& db = adj(1);
        const DenseMatrix& a = val(0);
        const DenseMatrix& b = val(1);
        for (std::size_t j = 0; j < g.size(); ++j) {
          da.data[j] += g.data[j] * b.data[j];
          db.data[j] += g.data[j] * a.data[j];
        }
        break;
      }
      case Op::Relu: {
        DenseMatrix& d = adj(0);
        const DenseMatrix& x = val(0);
        for (std::size_t j = 0; j < g.size(); ++j)
          if (x.data[j] > 0.0) d.data[j] += g.data[j];
        break;
      }
      case Op::Sigmoid: {
        DenseMatrix& d = adj(0);
        for (std::size_t j = 0; j < g.size(); ++j) {
          const double s = n.value.data[j];
          d.data[j] += g.data[j] * s * (1.0 - s);
        }
        break;
      }
      case Op::Tanh: {
        DenseMatrix& d = adj(0);
        for (std::size_t j = 0; j < g.size(); ++j) {
          const double t = n.value.data[j];
          d.data[j] += g.data[j] * (1.0 - t * t);
        }
        break;
      }
      case Op::Log: {
        DenseMatrix& d = adj(0);
        const DenseMatrix& x = val(0);
        for (std::size_t j = 0; j < g.size(); ++j)
          if (x.data[j] >= kLogFloor) d.data[j] += g.data[j] / x.data[j];
        break;
      }
      case Op::Sum: {
        DenseMatrix& d = adj(0);
        const double gs = g.data[0];
        for (std::size_t j = 0; j < d.size(); ++j) d.data[j] += gs;
        break;
      }
      case Op::SoftmaxRows: {
        DenseMatrix& d = adj(0);
        const DenseMatrix& s = n.value;
        for (std::size_t r = 0; r < s.rows; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < s.cols; ++c) dot += g.at(r, c) * s.at(r, c);
          for (std::size_t c = 0; c < s.cols; ++c)
            d.at(r, c) += s.at(r, c) * (g.at(r, c) - dot);
        }
        break;
      }
      case Op::Concat: {
        if (n.axis == 0) {
          std::size_t offset = 0;
          for (std::size_t i = 0; i < n.args.size(); ++i) {
            DenseMatrix& d = adj(i);
            for (std::size_t j = 0; j < d.size(); ++j) d.data[j] += g.data[offset + j];
            offset += d.size();
          }
        } else {
          std::size_t col_offset = 0;
          for (std::size_t i = 0; i < n.args.size(); ++i) {
            DenseMatrix& d = adj(i);
            for (std::size_t r = 0; r < d.rows; ++r)
              for (std::size_t c = 0; c < d.cols; ++c) d.at(r, c) += g.at(r, col_offset + c);
            col_offset += d.cols;
          }
        }
        break;
      }
      case Op::Scale: {
        DenseMatrix& d = adj(0);
        for (std::size_t j = 0; j < g.size(); ++j) d.data[j] += n.factor * g.data[j];
        break;
      }
    }
  }

  std::map<int, DenseMatrix> grads;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (reachable[i] && nodes_[i].op == Op::Leaf) {
      grads.emplace(static_cast<int>(i), nodes_[i].adjoint);
    }
  }
  return grads;
}

double grad_check(const std::function<int(Tape&, int)>& build, const DenseMatrix& point,
                  double step) {
  if (step <= 0.0) throw Error("grad_check: step must be positive");

  auto eval = [&](const DenseMatrix& x, DenseMatrix* grad) {
    Tape tape;
    int leaf = tape.leaf(x);
    int out = build(tape, leaf);
    const DenseMatrix& v = tape.value(out);
    if (v.rows != 1 || v.cols != 1) {
      throw Error("grad_check: function must be scalar, got " + v.shape_str());
    }
    if (grad) {
      auto grads = tape.backward(out);
      auto it = grads.find(leaf);
      *grad = it == grads.end() ? DenseMatrix(x.rows, x.cols) : it->second;
    }
    return v.data[0];
  };

  DenseMatrix analytic;
  eval(point, &analytic);

  double worst = 0.0;
  for (std::size_t j = 0; j < point.size(); ++j) {
    DenseMatrix lo = point;
    DenseMatrix hi = point;
    lo.data[j] -= step;
    hi.data[j] += step;
    const double numeric = (eval(hi, nullptr) - eval(lo, nullptr)) / (2.0 * step);
    const double a = analytic.data[j];
    const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace gnnx
