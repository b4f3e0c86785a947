#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace softner::num {

class ShapeError : public std::runtime_error {
public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Dense row-major tensor of 64-bit floats. Rank 1 (vector) or 2 (matrix);
/// single-element rank-1 tensors double as scalars.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> v);
  static Tensor zeros(std::size_t n) { return Tensor({n}); }
  static Tensor zeros(std::size_t r, std::size_t c) { return Tensor({r, c}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void fill(double v);
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

  std::string shape_str() const;

private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

class Graph;

/// Lightweight handle to a node inside a Graph.
struct Value {
  Graph* graph = nullptr;
  std::uint32_t index = 0;
  bool valid() const { return graph != nullptr; }
  bool operator==(const Value& o) const { return graph == o.graph && index == o.index; }
};

/// Define-by-run computation graph with reverse-mode differentiation.
/// Nodes are appended in evaluation order, so creation order is already a
/// topological order of the DAG and backward() is a single reverse sweep.
///
/// Parameter nodes reference tensors owned by the caller; the caller must
/// keep them alive and unmodified for the lifetime of the graph.
class Graph {
public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  Value input(Tensor t);
  Value param(const Tensor& stored);

  // Arithmetic. All shape checks throw ShapeError naming both shapes.
  Value matmul(Value a, Value b);          // (m,n)x(n,p); (m,n)x(n); (n)x(n,p)
  Value add(Value a, Value b);
  Value hadamard(Value a, Value b);
  Value scale(Value a, double c);
  Value concat(Value a, Value b, int axis);

  // Nonlinearities (elementwise, numerically stable).
  Value sigmoid(Value a);
  Value tanh(Value a);

  // Reductions / normalizers with max-subtraction.
  Value softmax(Value a);                  // rank-1 only
  Value log_sum_exp(Value a);              // rank-1 -> scalar
  Value log_sum_exp(Value a, int axis);    // rank-2, reduce given axis

  // Structural ops.
  Value tile(Value v, int axis, std::size_t n);    // vector -> matrix
  Value pick(Value a, std::size_t flat_index);     // -> scalar
  Value block(Value a, std::size_t r0, std::size_t r1,
              std::size_t c0, std::size_t c1);     // submatrix
  Value flatten(Value a);                          // reshape to rank-1
  Value stack_cols(std::span<const Value> columns);// k-vectors -> (k,T)

  const Tensor& value(Value v) const;
  /// Gradient of the last backward() loss w.r.t. node v.
  const Tensor& grad(Value v) const;
  /// Gradient w.r.t. an external parameter tensor, or nullptr if the
  /// parameter does not appear in this graph.
  const Tensor* grad_for(const Tensor& param) const;
  /// Registered (param tensor, grad) pairs, in creation order.
  void for_each_param_grad(const std::function<void(const Tensor&, const Tensor&)>& fn) const;

  /// Reverse-mode sweep from a scalar loss. Throws if loss is not a
  /// single-element tensor. May be called repeatedly; grads are reset.
  void backward(Value loss);

  std::size_t node_count() const { return nodes_.size(); }

private:
  struct Node;
  Value push(Node n);
  const Tensor& val_of(std::uint32_t i) const;
  void check_same_graph(Value v) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<const Tensor*, std::uint32_t>> params_;
  bool has_grads_ = false;
};

// Shared numeric kernels (also used outside graphs).
double sigmoid_stable(double x);
void matmul_accum(const Tensor& a, const Tensor& b, Tensor& out);

}  // namespace softner::num
