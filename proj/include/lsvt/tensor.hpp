#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lsvt/errors.hpp"

namespace lsvt {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until the first accumulation
  bool requires_grad = false;
  bool is_leaf = true;

  void accumulate(std::span<const T> g);
};

}  // namespace detail

// Dense row-major array with optional reverse-mode linkage. Copies of a Tensor share the
// same storage (handle semantics); use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Node = detail::Node<T>;

  Tensor();
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);
  // Builds a 2-D tensor from nested rows; all rows must have equal length.
  static Tensor from_rows(const std::vector<std::vector<T>>& rows, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return node_->data.size(); }
  // Row count / column count of a 2-D tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const T> data() const { return node_->data; }
  // Direct write access. Intended for parameter updates and initialisation, never for
  // tensors that are already referenced by a recorded tape entry.
  std::span<T> mutable_data() { return node_->data; }
  const std::vector<T>& values() const { return node_->data; }

  T item() const;
  T at(std::size_t i) const { return node_->data[i]; }
  T at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value);
  bool is_leaf() const { return node_->is_leaf; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient view; all zeros when nothing has been accumulated yet.
  std::vector<T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  // Same values, no tape linkage, requires_grad=false.
  Tensor detach() const;
  // Deep copy keeping requires_grad of this tensor (as a fresh leaf).
  Tensor clone() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;

  template <typename U>
  friend Tensor<U> make_result(Shape shape, std::vector<U> data,
                               std::vector<std::shared_ptr<detail::Node<U>>> inputs,
                               std::string_view op,
                               std::function<void(const detail::Node<U>&)> backward);
};

// Ordered record of executed operations. Operations are recorded only while a tape is
// active on the current thread (see TapeScope) and at least one input requires grad.
// Because entries are appended in execution order, walking them in reverse is a valid
// reverse topological order.
template <typename T>
class Tape {
 public:
  using Node = detail::Node<T>;
  using BackwardFn = std::function<void(const Node& output)>;

  struct Entry {
    std::string op;
    std::vector<std::shared_ptr<Node>> inputs;
    std::shared_ptr<Node> output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  void record(std::string_view op, std::vector<std::shared_ptr<Node>> inputs,
              std::shared_ptr<Node> output, BackwardFn backward);

  // Populates grad on every requires_grad leaf reachable from `loss`.
  // Throws ContractError for non-scalar or detached losses, and when called a second
  // time without an intervening reset().
  void backward(const Tensor<T>& loss);

  // Drops all entries and re-arms the tape.
  void reset();

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  const std::vector<Entry>& entries() const { return entries_; }
  // Ops visited by the last backward(), in visit order.
  const std::vector<std::string>& visit_log() const { return visit_log_; }
  // Distinct requires_grad leaves referenced as inputs by recorded entries.
  std::vector<const Node*> leaves() const;
  bool references(const Tensor<T>& leaf) const;

  static Tape* active();

 private:
  template <typename U>
  friend class TapeScope;

  std::vector<Entry> entries_;
  std::vector<std::string> visit_log_;
  bool consumed_ = false;
};

// Activates a tape for the current thread for the lifetime of the scope.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope();

 private:
  Tape<T>* previous_;
};

// Suspends recording for the current thread (e.g. the gradient-free teacher forward).
template <typename T>
class NoTapeScope {
 public:
  NoTapeScope();
  NoTapeScope(const NoTapeScope&) = delete;
  NoTapeScope& operator=(const NoTapeScope&) = delete;
  ~NoTapeScope();

 private:
  Tape<T>* previous_;
};

// Creates an op result. Records a tape entry when a tape is active and any input
// requires grad; otherwise the result is a plain constant.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::vector<std::shared_ptr<detail::Node<T>>> inputs, std::string_view op,
                      std::function<void(const detail::Node<T>&)> backward);

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  std::vector<To> out(t.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(t.at(i));
  return Tensor<To>(t.shape(), std::move(out), t.requires_grad());
}

}  // namespace lsvt
