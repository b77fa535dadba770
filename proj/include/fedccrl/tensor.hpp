#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedccrl {

using Shape = std::vector<std::size_t>;

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_to_string(const Shape& s);
std::size_t shape_numel(const Shape& s);

struct TensorStorage;

/// One recorded operation. The tape is the DAG of TapeNodes reachable from a
/// loss root; it is rebuilt on every forward pass (define-by-run) and dropped
/// when the result tensors go out of scope.
struct TapeNode {
  std::string op;
  std::vector<std::shared_ptr<TensorStorage>> parents;
  // Reads out.grad and accumulates into the parents' grad buffers.
  std::function<void(const TensorStorage& out)> backprop;
};

struct TensorStorage {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first written; data.size() afterwards
  bool requires_grad = false;
  std::shared_ptr<TapeNode> node;  // null for leaves and detached tensors
};

/// Dense float64 tensor, row-major. Value-semantic handle over shared storage;
/// clone() for a deep copy. Participates in reverse-mode differentiation when
/// marked requires_grad or produced from an attached input.
class Tensor {
 public:
  Tensor() : s_(std::make_shared<TensorStorage>()) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_data(Shape shape, std::vector<double> values);

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t size() const { return s_->data.size(); }
  std::size_t extent(std::size_t axis) const { return s_->shape.at(axis); }

  std::span<const double> data() const { return s_->data; }
  std::span<double> mutable_data() { return s_->data; }
  double at(std::size_t flat_index) const { return s_->data.at(flat_index); }

  /// Value of a single-element tensor.
  double item() const;

  Tensor& set_requires_grad(bool v) {
    s_->requires_grad = v;
    return *this;
  }
  bool requires_grad() const { return s_->requires_grad; }

  /// True when this tensor participates in the current tape (leaf marked
  /// requires_grad, or result of an op over attached inputs).
  bool attached() const { return s_->requires_grad || s_->node != nullptr; }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const double> grad() const;
  void zero_grad();

  /// Deep copy of the data, no tape link, no grad.
  Tensor clone() const;
  /// Same data (copied), detached from the tape.
  Tensor detach() const { return clone(); }

  std::shared_ptr<TensorStorage> storage() const { return s_; }

 private:
  explicit Tensor(std::shared_ptr<TensorStorage> s) : s_(std::move(s)) {}
  std::shared_ptr<TensorStorage> s_;

  friend Tensor make_result(Shape shape, std::vector<double> data, std::string op,
                            std::vector<Tensor> inputs,
                            std::function<void(const TensorStorage&)> backprop);
};

// Elementwise binary ops with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// div guards the denominator with +1e-12 (see kDivEpsilon).
Tensor divide(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);

// Elementwise unary ops. log computes log(x + 1e-12).
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor relu(const Tensor& a);

// Reductions.
Tensor sum(const Tensor& a);   // -> rank-0 scalar
Tensor mean(const Tensor& a);  // -> rank-0 scalar
// Sum over the last axis, keeping it as extent 1: [..., n] -> [..., 1].
Tensor sum_last_axis(const Tensor& a);

// Linear algebra (2-D).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Shape ops.
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
Tensor index_select(const Tensor& a, std::size_t axis, const std::vector<std::size_t>& indices);

// Row-wise softmax over the last axis (numerically stable).
Tensor softmax(const Tensor& a);

// Max over the last axis as a detached constant [..., 1]; not differentiable.
Tensor rowmax_detached(const Tensor& a);

/// Reverse-mode sweep from a single-element root. Gradients of intermediate
/// results are recomputed from scratch; leaf gradients accumulate across calls
/// until zero_grad().
void backward(const Tensor& root);

inline constexpr double kDivEpsilon = 1e-12;
inline constexpr double kLogEpsilon = 1e-12;

}  // namespace fedccrl
