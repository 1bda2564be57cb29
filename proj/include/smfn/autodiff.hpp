#pragma once

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "smfn/tensor.hpp"

namespace smfn {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid for the
/// lifetime of its tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Straight-line reverse-mode record. Nodes are appended in evaluation order,
/// so creation order is a topological order and backward simply walks it in
/// reverse. One tape per training step.
template <typename T>
class Tape {
 public:
  /// Receives the gradient of the node's output and accumulates into input
  /// gradients through Tape::grad_of().
  using BackwardFn = std::function<void(Tape&, std::span<const T> out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A value that never receives gradient.
  Var<T> constant(Tensor<T> value);
  /// Binds an external tensor. When it requires grad, backward() accumulates
  /// into tensor.grad(). The tensor must outlive the tape.
  Var<T> leaf(Tensor<T>& tensor);
  /// Records an op output. `fn` is dropped when no input needs gradient.
  Var<T> record(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn fn);

  const Tensor<T>& value(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }
  /// Gradient buffer of a node, allocated lazily. Only valid during backward.
  std::span<T> grad_of(std::size_t id);

  std::size_t size() const { return nodes_.size(); }
  bool owns(const Var<T>& v) const { return v.tape() == this && v.id() < nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and replays every node in reverse creation
  /// order, then flushes leaf gradients into their tensors.
  void backward(const Var<T>& loss);

 private:
  struct Node {
    Tensor<T> owned;
    Tensor<T>* external = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
    std::vector<T> grad;
  };
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

template <typename T>
void backward(Tape<T>& tape, const Var<T>& loss) {
  tape.backward(loss);
}

enum class ElementwiseKind { Add, Sub, Mul };
enum class ReduceKind { Sum, Mean };

/// Singleton-extent broadcasting; a lower-rank operand is padded with
/// leading singleton axes.
template <typename T>
Var<T> elementwise(const Var<T>& a, const Var<T>& b, ElementwiseKind kind);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) { return elementwise(a, b, ElementwiseKind::Add); }
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) { return elementwise(a, b, ElementwiseKind::Sub); }
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) { return elementwise(a, b, ElementwiseKind::Mul); }

/// Reduces over `axes` keeping them as singleton extents. Empty `axes`
/// reduces everything to shape (1).
template <typename T>
Var<T> reduce(const Var<T>& a, ReduceKind kind, std::vector<std::size_t> axes = {});

template <typename T>
Var<T> sum(const Var<T>& a) { return reduce(a, ReduceKind::Sum); }
template <typename T>
Var<T> mean(const Var<T>& a) { return reduce(a, ReduceKind::Mean); }

template <typename T>
Var<T> scale(const Var<T>& a, T factor);

/// Concatenation along `axis` (channels for image tensors).
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis = 1);

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape);

/// Broadcast shape of two operands, or ValidationError.
Shape broadcast_shape(const Shape& a, const Shape& b);

/// Central differences (f(x + eps e_k) - f(x - eps e_k)) / 2 eps for every
/// element of x.
template <typename T>
Tensor<T> finite_difference_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T eps);

/// Same estimate restricted to `indices`; other entries are zero.
template <typename T>
Tensor<T> finite_difference_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T eps,
                                 std::span<const std::size_t> indices);

}  // namespace smfn
