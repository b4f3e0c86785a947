#include "softner/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace softner::num {

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  std::size_t n = 1;
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor dimension must be positive, got shape " + shape_str());
    n *= d;
  }
  if (shape_.empty()) throw ShapeError("tensor rank must be >= 1");
  data_.assign(n, 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  std::size_t n = 1;
  for (std::size_t d : shape_) n *= d;
  if (shape_.empty() || n != data_.size())
    throw ShapeError("tensor data size does not match shape " + shape_str());
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vector(std::vector<double> v) {
  std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ')';
  return os.str();
}

double sigmoid_stable(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

void matmul_accum(const Tensor& a, const Tensor& b, Tensor& out) {
  // (m,n) x (n,p) += into out (m,p); caller guarantees shapes.
  std::size_t m = a.rows(), n = a.cols(), p = b.cols();
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* od = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      double aik = ad[i * n + k];
      if (aik == 0.0) continue;
      const double* brow = bd + k * p;
      double* orow = od + i * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
}

namespace {

enum class Op : std::uint8_t {
  Input, Param, MatMul, Add, Hadamard, Scale, Concat,
  Sigmoid, Tanh, Softmax, LogSumExp, Tile, Pick, Block, Flatten, StackCols,
};

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                   b.shape_str());
}

}  // namespace

struct Graph::Node {
  Op op;
  std::array<std::uint32_t, 2> in{0, 0};
  std::vector<std::uint32_t> extra;
  const Tensor* external = nullptr;
  Tensor val;
  Tensor grad;
  double c = 0.0;
  int axis = 0;
  std::size_t i0 = 0, i1 = 0, j0 = 0, j1 = 0;
};

Graph::Graph() { nodes_.reserve(512); }

const Tensor& Graph::val_of(std::uint32_t i) const {
  const Node& n = nodes_[i];
  return n.op == Op::Param ? *n.external : n.val;
}

void Graph::check_same_graph(Value v) const {
  if (v.graph != this || v.index >= nodes_.size())
    throw std::logic_error("value does not belong to this graph");
}

Value Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Value{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Value Graph::input(Tensor t) {
  Node n;
  n.op = Op::Input;
  n.val = std::move(t);
  return push(std::move(n));
}

Value Graph::param(const Tensor& stored) {
  for (const auto& [ptr, idx] : params_)
    if (ptr == &stored) return Value{this, idx};
  Node n;
  n.op = Op::Param;
  n.external = &stored;
  Value v = push(std::move(n));
  params_.emplace_back(&stored, v.index);
  return v;
}

Value Graph::matmul(Value a, Value b) {
  check_same_graph(a);
  check_same_graph(b);
  const Tensor& ta = val_of(a.index);
  const Tensor& tb = val_of(b.index);
  Node n;
  n.op = Op::MatMul;
  n.in = {a.index, b.index};
  if (ta.rank() == 2 && tb.rank() == 2) {
    if (ta.cols() != tb.rows()) shape_fail("matmul", ta, tb);
    n.val = Tensor::zeros(ta.rows(), tb.cols());
    matmul_accum(ta, tb, n.val);
  } else if (ta.rank() == 2 && tb.rank() == 1) {
    if (ta.cols() != tb.size()) shape_fail("matmul", ta, tb);
    n.val = Tensor::zeros(ta.rows());
    for (std::size_t i = 0; i < ta.rows(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < ta.cols(); ++k) s += ta.at(i, k) * tb[k];
      n.val[i] = s;
    }
  } else if (ta.rank() == 1 && tb.rank() == 2) {
    if (ta.size() != tb.rows()) shape_fail("matmul", ta, tb);
    n.val = Tensor::zeros(tb.cols());
    for (std::size_t k = 0; k < tb.rows(); ++k) {
      double ak = ta[k];
      if (ak == 0.0) continue;
      for (std::size_t j = 0; j < tb.cols(); ++j) n.val[j] += ak * tb.at(k, j);
    }
  } else {
    shape_fail("matmul", ta, tb);
  }
  return push(std::move(n));
}

Value Graph::add(Value a, Value b) {
  check_same_graph(a);
  check_same_graph(b);
  const Tensor& ta = val_of(a.index);
  const Tensor& tb = val_of(b.index);
  if (!ta.same_shape(tb)) shape_fail("add", ta, tb);
  Node n;
  n.op = Op::Add;
  n.in = {a.index, b.index};
  n.val = ta;
  for (std::size_t i = 0; i < tb.size(); ++i) n.val[i] += tb[i];
  return push(std::move(n));
}

Value Graph::hadamard(Value a, Value b) {
  check_same_graph(a);
  check_same_graph(b);
  const Tensor& ta = val_of(a.index);
  const Tensor& tb = val_of(b.index);
  if (!ta.same_shape(tb)) shape_fail("hadamard", ta, tb);
  Node n;
  n.op = Op::Hadamard;
  n.in = {a.index, b.index};
  n.val = ta;
  for (std::size_t i = 0; i < tb.size(); ++i) n.val[i] *= tb[i];
  return push(std::move(n));
}

Value Graph::scale(Value a, double c) {
  check_same_graph(a);
  Node n;
  n.op = Op::Scale;
  n.in = {a.index, a.index};
  n.c = c;
  n.val = val_of(a.index);
  for (double& x : n.val.data()) x *= c;
  return push(std::move(n));
}

Value Graph::concat(Value a, Value b, int axis) {
  check_same_graph(a);
  check_same_graph(b);
  const Tensor& ta = val_of(a.index);
  const Tensor& tb = val_of(b.index);
  Node n;
  n.op = Op::Concat;
  n.in = {a.index, b.index};
  n.axis = axis;
  if (ta.rank() == 1 && tb.rank() == 1) {
    if (axis != 0) throw ShapeError("concat: vector concat requires axis 0");
    n.val = Tensor::zeros(ta.size() + tb.size());
    std::copy(ta.data().begin(), ta.data().end(), n.val.data().begin());
    std::copy(tb.data().begin(), tb.data().end(), n.val.data().begin() + ta.size());
  } else if (ta.rank() == 2 && tb.rank() == 2 && axis == 0) {
    if (ta.cols() != tb.cols()) shape_fail("concat axis 0", ta, tb);
    n.val = Tensor::zeros(ta.rows() + tb.rows(), ta.cols());
    std::copy(ta.data().begin(), ta.data().end(), n.val.data().begin());
    std::copy(tb.data().begin(), tb.data().end(), n.val.data().begin() + ta.size());
  } else if (ta.rank() == 2 && tb.rank() == 2 && axis == 1) {
    if (ta.rows() != tb.rows()) shape_fail("concat axis 1", ta, tb);
    n.val = Tensor::zeros(ta.rows(), ta.cols() + tb.cols());
    for (std::size_t i = 0; i < ta.rows(); ++i) {
      for (std::size_t j = 0; j < ta.cols(); ++j) n.val.at(i, j) = ta.at(i, j);
      for (std::size_t j = 0; j < tb.cols(); ++j) n.val.at(i, ta.cols() + j) = tb.at(i, j);
    }
  } else {
    shape_fail("concat", ta, tb);
  }
  return push(std::move(n));
}

Value Graph::sigmoid(Value a) {
  check_same_graph(a);
  Node n;
  n.op = Op::Sigmoid;
  n.in = {a.index, a.index};
  n.val = val_of(a.index);
  for (double& x : n.val.data()) x = sigmoid_stable(x);
  return push(std::move(n));
}

Value Graph::tanh(Value a) {
  check_same_graph(a);
  Node n;
  n.op = Op::Tanh;
  n.in = {a.index, a.index};
  n.val = val_of(a.index);
  for (double& x : n.val.data()) x = std::tanh(x);
  return push(std::move(n));
}

Value Graph::softmax(Value a) {
  check_same_graph(a);
  const Tensor& ta = val_of(a.index);
  if (ta.rank() != 1) throw ShapeError("softmax: expected rank-1, got " + ta.shape_str());
  Node n;
  n.op = Op::Softmax;
  n.in = {a.index, a.index};
  n.val = ta;
  double mx = *std::max_element(n.val.data().begin(), n.val.data().end());
  double z = 0.0;
  for (double& x : n.val.data()) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : n.val.data()) x /= z;
  return push(std::move(n));
}

Value Graph::log_sum_exp(Value a) {
  check_same_graph(a);
  const Tensor& ta = val_of(a.index);
  if (ta.rank() != 1) throw ShapeError("log_sum_exp: expected rank-1, got " + ta.shape_str());
  Node n;
  n.op = Op::LogSumExp;
  n.in = {a.index, a.index};
  n.axis = -1;
  double mx = *std::max_element(ta.data().begin(), ta.data().end());
  double s = 0.0;
  for (double x : ta.data()) s += std::exp(x - mx);
  n.val = Tensor::scalar(mx + std::log(s));
  return push(std::move(n));
}

Value Graph::log_sum_exp(Value a, int axis) {
  check_same_graph(a);
  const Tensor& ta = val_of(a.index);
  if (ta.rank() != 2) throw ShapeError("log_sum_exp(axis): expected rank-2, got " + ta.shape_str());
  if (axis != 0 && axis != 1) throw ShapeError("log_sum_exp: axis must be 0 or 1");
  Node n;
  n.op = Op::LogSumExp;
  n.in = {a.index, a.index};
  n.axis = axis;
  std::size_t out_n = axis == 0 ? ta.cols() : ta.rows();
  n.val = Tensor::zeros(out_n);
  for (std::size_t o = 0; o < out_n; ++o) {
    std::size_t cnt = axis == 0 ? ta.rows() : ta.cols();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cnt; ++i) {
      double x = axis == 0 ? ta.at(i, o) : ta.at(o, i);
      mx = std::max(mx, x);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < cnt; ++i) {
      double x = axis == 0 ? ta.at(i, o) : ta.at(o, i);
      s += std::exp(x - mx);
    }
    n.val[o] = mx + std::log(s);
  }
  return push(std::move(n));
}

Value Graph::tile(Value v, int axis, std::size_t cnt) {
  check_same_graph(v);
  const Tensor& tv = val_of(v.index);
  if (tv.rank() != 1) throw ShapeError("tile: expected rank-1, got " + tv.shape_str());
  if (axis != 0 && axis != 1) throw ShapeError("tile: axis must be 0 or 1");
  Node n;
  n.op = Op::Tile;
  n.in = {v.index, v.index};
  n.axis = axis;
  n.i0 = cnt;
  if (axis == 1) {  // vector becomes each column: (|v|, cnt)
    n.val = Tensor::zeros(tv.size(), cnt);
    for (std::size_t i = 0; i < tv.size(); ++i)
      for (std::size_t j = 0; j < cnt; ++j) n.val.at(i, j) = tv[i];
  } else {  // vector becomes each row: (cnt, |v|)
    n.val = Tensor::zeros(cnt, tv.size());
    for (std::size_t i = 0; i < cnt; ++i)
      for (std::size_t j = 0; j < tv.size(); ++j) n.val.at(i, j) = tv[j];
  }
  return push(std::move(n));
}

Value Graph::pick(Value a, std::size_t flat_index) {
  check_same_graph(a);
  const Tensor& ta = val_of(a.index);
  if (flat_index >= ta.size())
    throw ShapeError("pick: index " + std::to_string(flat_index) + " out of range for " +
                     ta.shape_str());
  Node n;
  n.op = Op::Pick;
  n.in = {a.index, a.index};
  n.i0 = flat_index;
  n.val = Tensor::scalar(ta[flat_index]);
  return push(std::move(n));
}

Value Graph::block(Value a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  check_same_graph(a);
  const Tensor& ta = val_of(a.index);
  if (ta.rank() != 2 || r1 > ta.rows() || c1 > ta.cols() || r0 >= r1 || c0 >= c1)
    throw ShapeError("block: invalid range for " + ta.shape_str());
  Node n;
  n.op = Op::Block;
  n.in = {a.index, a.index};
  n.i0 = r0;
  n.i1 = r1;
  n.j0 = c0;
  n.j1 = c1;
  n.val = Tensor::zeros(r1 - r0, c1 - c0);
  for (std::size_t i = r0; i < r1; ++i)
    for (std::size_t j = c0; j < c1; ++j) n.val.at(i - r0, j - c0) = ta.at(i, j);
  return push(std::move(n));
}

Value Graph::flatten(Value a) {
  check_same_graph(a);
  const Tensor& ta = val_of(a.index);
  Node n;
  n.op = Op::Flatten;
  n.in = {a.index, a.index};
  n.val = Tensor::vector(std::vector<double>(ta.data().begin(), ta.data().end()));
  return push(std::move(n));
}

Value Graph::stack_cols(std::span<const Value> columns) {
  if (columns.empty()) throw ShapeError("stack_cols: no columns");
  Node n;
  n.op = Op::StackCols;
  std::size_t k = 0;
  for (const Value& c : columns) {
    check_same_graph(c);
    const Tensor& tc = val_of(c.index);
    if (tc.rank() != 1) throw ShapeError("stack_cols: expected rank-1, got " + tc.shape_str());
    if (k == 0) k = tc.size();
    if (tc.size() != k) shape_fail("stack_cols", val_of(columns[0].index), tc);
    n.extra.push_back(c.index);
  }
  n.val = Tensor::zeros(k, columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const Tensor& tc = val_of(columns[j].index);
    for (std::size_t i = 0; i < k; ++i) n.val.at(i, j) = tc[i];
  }
  return push(std::move(n));
}

const Tensor& Graph::value(Value v) const {
  check_same_graph(v);
  return val_of(v.index);
}

const Tensor& Graph::grad(Value v) const {
  check_same_graph(v);
  if (!has_grads_) throw std::logic_error("grad() before backward()");
  return nodes_[v.index].grad;
}

const Tensor* Graph::grad_for(const Tensor& param) const {
  if (!has_grads_) throw std::logic_error("grad_for() before backward()");
  for (const auto& [ptr, idx] : params_)
    if (ptr == &param) return &nodes_[idx].grad;
  return nullptr;
}

void Graph::for_each_param_grad(
    const std::function<void(const Tensor&, const Tensor&)>& fn) const {
  if (!has_grads_) throw std::logic_error("for_each_param_grad() before backward()");
  for (const auto& [ptr, idx] : params_) fn(*ptr, nodes_[idx].grad);
}

void Graph::backward(Value loss) {
  check_same_graph(loss);
  const Tensor& lt = val_of(loss.index);
  if (lt.size() != 1)
    throw ShapeError("backward: loss must be scalar, got " + lt.shape_str());

  for (std::uint32_t i = 0; i <= loss.index; ++i) {
    const Tensor& v = val_of(i);
    Node& n = nodes_[i];
    if (n.grad.size() != v.size() || !n.grad.same_shape(v)) {
      n.grad = Tensor(v.shape());
    } else {
      n.grad.fill(0.0);
    }
  }
  nodes_[loss.index].grad[0] = 1.0;
  has_grads_ = true;

  for (std::uint32_t ii = loss.index + 1; ii-- > 0;) {
    Node& n = nodes_[ii];
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::Input:
      case Op::Param:
        break;
      case Op::MatMul: {
        const Tensor& ta = val_of(n.in[0]);
        const Tensor& tb = val_of(n.in[1]);
        Tensor& ga = nodes_[n.in[0]].grad;
        Tensor& gb = nodes_[n.in[1]].grad;
        if (ta.rank() == 2 && tb.rank() == 2) {
          // dA += g . B^T ; dB += A^T . g
          for (std::size_t i = 0; i < ta.rows(); ++i)
            for (std::size_t j = 0; j < tb.cols(); ++j) {
              double gij = g.at(i, j);
              if (gij == 0.0) continue;
              for (std::size_t k = 0; k < ta.cols(); ++k) {
                ga.at(i, k) += gij * tb.at(k, j);
                gb.at(k, j) += ta.at(i, k) * gij;
              }
            }
        } else if (ta.rank() == 2 && tb.rank() == 1) {
          for (std::size_t i = 0; i < ta.rows(); ++i) {
            double gi = g[i];
            if (gi == 0.0) continue;
            for (std::size_t k = 0; k < ta.cols(); ++k) {
              ga.at(i, k) += gi * tb[k];
              gb[k] += ta.at(i, k) * gi;
            }
          }
        } else {
          for (std::size_t j = 0; j < tb.cols(); ++j) {
            double gj = g[j];
            if (gj == 0.0) continue;
            for (std::size_t k = 0; k < tb.rows(); ++k) {
              ga[k] += tb.at(k, j) * gj;
              gb.at(k, j) += ta[k] * gj;
            }
          }
        }
        break;
      }
      case Op::Add: {
        Tensor& ga = nodes_[n.in[0]].grad;
        Tensor& gb = nodes_[n.in[1]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::Hadamard: {
        const Tensor& ta = val_of(n.in[0]);
        const Tensor& tb = val_of(n.in[1]);
        Tensor& ga = nodes_[n.in[0]].grad;
        Tensor& gb = nodes_[n.in[1]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * tb[i];
          gb[i] += g[i] * ta[i];
        }
        break;
      }
      case Op::Scale: {
        Tensor& ga = nodes_[n.in[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.c;
        break;
      }
      case Op::Concat: {
        const Tensor& ta = val_of(n.in[0]);
        const Tensor& tb = val_of(n.in[1]);
        Tensor& ga = nodes_[n.in[0]].grad;
        Tensor& gb = nodes_[n.in[1]].grad;
        if (n.val.rank() == 1 || n.axis == 0) {
          for (std::size_t i = 0; i < ta.size(); ++i) ga[i] += g[i];
          for (std::size_t i = 0; i < tb.size(); ++i) gb[i] += g[ta.size() + i];
        } else {
          for (std::size_t i = 0; i < ta.rows(); ++i) {
            for (std::size_t j = 0; j < ta.cols(); ++j) ga.at(i, j) += g.at(i, j);
            for (std::size_t j = 0; j < tb.cols(); ++j) gb.at(i, j) += g.at(i, ta.cols() + j);
          }
        }
        break;
      }
      case Op::Sigmoid: {
        Tensor& ga = nodes_[n.in[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          double s = n.val[i];
          ga[i] += g[i] * s * (1.0 - s);
        }
        break;
      }
      case Op::Tanh: {
        Tensor& ga = nodes_[n.in[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          double t = n.val[i];
          ga[i] += g[i] * (1.0 - t * t);
        }
        break;
      }
      case Op::Softmax: {
        // dx_i = s_i * (g_i - sum_j g_j s_j)
        Tensor& ga = nodes_[n.in[0]].grad;
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * n.val[i];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.val[i] * (g[i] - dot);
        break;
      }
      case Op::LogSumExp: {
        const Tensor& ta = val_of(n.in[0]);
        Tensor& ga = nodes_[n.in[0]].grad;
        if (n.axis == -1) {
          double out = n.val[0], go = g[0];
          for (std::size_t i = 0; i < ta.size(); ++i) ga[i] += go * std::exp(ta[i] - out);
        } else if (n.axis == 0) {
          for (std::size_t j = 0; j < ta.cols(); ++j) {
            double out = n.val[j], go = g[j];
            if (go == 0.0) continue;
            for (std::size_t i = 0; i < ta.rows(); ++i)
              ga.at(i, j) += go * std::exp(ta.at(i, j) - out);
          }
        } else {
          for (std::size_t i = 0; i < ta.rows(); ++i) {
            double out = n.val[i], go = g[i];
            if (go == 0.0) continue;
            for (std::size_t j = 0; j < ta.cols(); ++j)
              ga.at(i, j) += go * std::exp(ta.at(i, j) - out);
          }
        }
        break;
      }
      case Op::Tile: {
        Tensor& ga = nodes_[n.in[0]].grad;
        if (n.axis == 1) {
          for (std::size_t i = 0; i < ga.size(); ++i)
            for (std::size_t j = 0; j < n.i0; ++j) ga[i] += g.at(i, j);
        } else {
          for (std::size_t i = 0; i < n.i0; ++i)
            for (std::size_t j = 0; j < ga.size(); ++j) ga[j] += g.at(i, j);
        }
        break;
      }
      case Op::Pick: {
        nodes_[n.in[0]].grad[n.i0] += g[0];
        break;
      }
      case Op::Block: {
        Tensor& ga = nodes_[n.in[0]].grad;
        for (std::size_t i = n.i0; i < n.i1; ++i)
          for (std::size_t j = n.j0; j < n.j1; ++j)
            ga.at(i, j) += g.at(i - n.i0, j - n.j0);
        break;
      }
      case Op::Flatten: {
        Tensor& ga = nodes_[n.in[0]].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
      case Op::StackCols: {
        for (std::size_t j = 0; j < n.extra.size(); ++j) {
          Tensor& gc = nodes_[n.extra[j]].grad;
          for (std::size_t i = 0; i < gc.size(); ++i) gc[i] += g.at(i, j);
        }
        break;
      }
    }
  }
}

}  // namespace softner::num
