#include "lsvt/tensor.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>
#include <unordered_set>

namespace lsvt {

namespace {
bool g_warnings_enabled = true;
}

void warn(const std::string& message) {
  if (g_warnings_enabled) std::cerr << "warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_warnings_enabled = enabled; }

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace detail {

template <typename T>
void Node<T>::accumulate(std::span<const T> g) {
  if (!requires_grad) return;
  if (grad.empty()) {
    grad.assign(g.begin(), g.end());
    return;
  }
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
}

}  // namespace detail

template <typename T>
Tensor<T>::Tensor() : node_(std::make_shared<Node>()) {
  node_->shape = {1};
  node_->data = {T{0}};
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
  if (numel(shape) != data.size()) {
    throw ShapeError("shape " + to_string(shape) + " needs " + std::to_string(numel(shape)) +
                     " values, got " + std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T{0}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_rows(const std::vector<std::vector<T>>& rows, bool requires_grad) {
  if (rows.empty() || rows.front().empty()) throw ShapeError("from_rows: empty input");
  const auto cols = rows.front().size();
  std::vector<T> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data), requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(shape()));
  }
  return node_->shape[axis];
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  if (rank() != 2) throw ShapeError("expected a 2-D tensor, got " + to_string(shape()));
  return node_->shape[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  if (rank() != 2) throw ShapeError("expected a 2-D tensor, got " + to_string(shape()));
  return node_->shape[1];
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::size_t r, std::size_t c) const {
  return node_->data[r * cols() + c];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
  node_->requires_grad = value;
  if (!value) node_->grad.clear();
}

template <typename T>
std::vector<T> Tensor<T>::grad() const {
  if (node_->grad.empty()) return std::vector<T>(size(), T{0});
  return node_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(size(), T{0});
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  node_->grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(node_->shape, node_->data, node_->requires_grad);
}

// ---------------------------------------------------------------------------

namespace {
template <typename T>
thread_local Tape<T>* g_active_tape = nullptr;
}

template <typename T>
Tape<T>::~Tape() {
  if (g_active_tape<T> == this) g_active_tape<T> = nullptr;
}

template <typename T>
Tape<T>* Tape<T>::active() {
  return g_active_tape<T>;
}

template <typename T>
void Tape<T>::record(std::string_view op, std::vector<std::shared_ptr<Node>> inputs,
                     std::shared_ptr<Node> output, BackwardFn backward) {
  if (consumed_) throw ContractError("tape already consumed by backward(); call reset() first");
  entries_.push_back(Entry{std::string(op), std::move(inputs), std::move(output), std::move(backward)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (consumed_) throw ContractError("backward() called twice on the same tape without reset()");
  if (loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  const Node* root = loss.node().get();
  auto it = std::find_if(entries_.rbegin(), entries_.rend(),
                         [root](const Entry& e) { return e.output.get() == root; });
  if (it == entries_.rend()) {
    throw ContractError("backward() on a loss that is not connected to this tape");
  }
  visit_log_.clear();
  loss.node()->grad.assign(1, T{1});
  for (; it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    visit_log_.push_back(it->op);
    it->backward(*it->output);
  }
  consumed_ = true;
}

template <typename T>
void Tape<T>::reset() {
  entries_.clear();
  visit_log_.clear();
  consumed_ = false;
}

template <typename T>
std::vector<const detail::Node<T>*> Tape<T>::leaves() const {
  std::vector<const Node*> out;
  std::unordered_set<const Node*> seen;
  for (const auto& e : entries_) {
    for (const auto& in : e.inputs) {
      if (in->is_leaf && in->requires_grad && seen.insert(in.get()).second) out.push_back(in.get());
    }
  }
  return out;
}

template <typename T>
bool Tape<T>::references(const Tensor<T>& leaf) const {
  for (const auto& e : entries_) {
    for (const auto& in : e.inputs) {
      if (in == leaf.node()) return true;
    }
  }
  return false;
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(g_active_tape<T>) {
  g_active_tape<T> = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  g_active_tape<T> = previous_;
}

template <typename T>
NoTapeScope<T>::NoTapeScope() : previous_(g_active_tape<T>) {
  g_active_tape<T> = nullptr;
}

template <typename T>
NoTapeScope<T>::~NoTapeScope() {
  g_active_tape<T> = previous_;
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::vector<std::shared_ptr<detail::Node<T>>> inputs, std::string_view op,
                      std::function<void(const detail::Node<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(data), false);
  Tape<T>* tape = Tape<T>::active();
  if (!tape) return out;
  const bool track = std::any_of(inputs.begin(), inputs.end(),
                                 [](const auto& n) { return n->requires_grad; });
  if (!track) return out;
  out.node_->requires_grad = true;
  out.node_->is_leaf = false;
  tape->record(op, std::move(inputs), out.node_, std::move(backward));
  return out;
}

#define LSVT_INSTANTIATE(T)                                                                   \
  template struct detail::Node<T>;                                                           \
  template class Tensor<T>;                                                                  \
  template class Tape<T>;                                                                    \
  template class TapeScope<T>;                                                               \
  template class NoTapeScope<T>;                                                             \
  template Tensor<T> make_result<T>(Shape, std::vector<T>,                                   \
                                    std::vector<std::shared_ptr<detail::Node<T>>>,           \
                                    std::string_view,                                        \
                                    std::function<void(const detail::Node<T>&)>);

LSVT_INSTANTIATE(float)
LSVT_INSTANTIATE(double)

#undef LSVT_INSTANTIATE

}  // namespace lsvt
