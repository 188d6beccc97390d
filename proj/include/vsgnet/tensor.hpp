#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vsgnet/common.hpp"

namespace vsg {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (const int d : shape) {
    if (d <= 0) throw DataError("tensor shape has non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {

template <typename Real>
struct TensorStorage {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // sized like value iff requires_grad
  bool requires_grad = false;
  bool leaf = true;  // false for op outputs
};

}  // namespace detail

// Dense row-major tensor. Copies are cheap handles sharing the underlying
// buffer (clone() for a deep copy); this is what lets the tape observe
// in-place parameter updates between training steps.
template <typename Real>
class Tensor {
 public:
  using Storage = detail::TensorStorage<Real>;

  Tensor() = default;

  explicit Tensor(Shape shape, Real fill = Real(0))
      : st_(std::make_shared<Storage>()) {
    st_->shape = std::move(shape);
    st_->value.assign(shape_numel(st_->shape), fill);
  }

  static Tensor from_data(Shape shape, std::vector<Real> data) {
    Tensor t;
    t.st_ = std::make_shared<Storage>();
    const std::size_t n = shape_numel(shape);
    if (n != data.size())
      throw DataError("tensor data length " + std::to_string(data.size()) +
                      " does not match shape " + shape_str(shape));
    t.st_->shape = std::move(shape);
    t.st_->value = std::move(data);
    return t;
  }

  static Tensor scalar(Real v) { return from_data({1}, {v}); }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), Real(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), Real(1)); }
  static Tensor full(Shape shape, Real v) { return Tensor(std::move(shape), v); }

  bool defined() const { return st_ != nullptr; }
  const Shape& shape() const { return st_->shape; }
  int rank() const { return static_cast<int>(st_->shape.size()); }
  int dim(int i) const { return st_->shape[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return st_->value.size(); }

  Real* data() { return st_->value.data(); }
  const Real* data() const { return st_->value.data(); }
  std::vector<Real>& values() { return st_->value; }
  const std::vector<Real>& values() const { return st_->value; }
  Real& operator[](std::size_t i) { return st_->value[i]; }
  Real operator[](std::size_t i) const { return st_->value[i]; }

  Real item() const {
    if (numel() != 1) throw UsageError("item(): tensor is not a scalar");
    return st_->value[0];
  }

  bool requires_grad() const { return st_->requires_grad; }

  Tensor& set_requires_grad(bool on) {
    st_->requires_grad = on;
    if (on)
      st_->grad.assign(st_->value.size(), Real(0));
    else
      st_->grad.clear();
    return *this;
  }

  Real* grad() { return st_->grad.data(); }
  const Real* grad() const { return st_->grad.data(); }
  std::vector<Real>& grad_values() { return st_->grad; }
  const std::vector<Real>& grad_values() const { return st_->grad; }

  void zero_grad() {
    if (st_->requires_grad) std::fill(st_->grad.begin(), st_->grad.end(), Real(0));
  }

  bool is_leaf() const { return st_->leaf; }

  // Deep copy of the values; result is a fresh leaf with no grad history.
  Tensor clone() const {
    Tensor t;
    t.st_ = std::make_shared<Storage>();
    t.st_->shape = st_->shape;
    t.st_->value = st_->value;
    return t;
  }

  bool same_storage(const Tensor& o) const { return st_ == o.st_; }
  std::shared_ptr<Storage> storage() const { return st_; }

 private:
  std::shared_ptr<Storage> st_;
};

template <typename Real>
inline void check_finite(const Tensor<Real>& t, const char* op) {
  for (const Real v : t.values())
    if (!std::isfinite(static_cast<double>(v)))
      throw NumericError(std::string(op) + ": non-finite value produced");
}

// Reverse-mode gradient tape. Constructing a Tape makes it the active
// recorder for the current thread; destruction restores the previous one.
// Ops append a backward closure after computing their forward values, so the
// node list is already a topological order and reverse iteration is a valid
// backward schedule.
template <typename Real>
class Tape {
 public:
  Tape() : prev_(active_) { active_ = this; }
  ~Tape() { active_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  void record(std::shared_ptr<detail::TensorStorage<Real>> out,
              std::function<void()> back) {
    nodes_.push_back(Node{std::move(out), std::move(back)});
  }

  std::size_t size() const { return nodes_.size(); }

  // Reverse accumulation from a scalar loss. Grads of op outputs are reset
  // before each pass; leaf grads accumulate across calls until zeroed by the
  // caller.
  void backward(const Tensor<Real>& loss) {
    if (!loss.defined() || loss.numel() != 1)
      throw UsageError("backward: loss must be a defined scalar tensor");
    if (loss.is_leaf() || !loss.requires_grad())
      throw UsageError("backward: loss was not produced by a recorded computation");
    for (auto& n : nodes_)
      if (n.out->requires_grad)
        std::fill(n.out->grad.begin(), n.out->grad.end(), Real(0));
    loss.storage()->grad[0] = Real(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
    for (auto& n : nodes_)
      for (const Real g : n.out->grad)
        if (!std::isfinite(static_cast<double>(g)))
          throw NumericError("backward: non-finite gradient");
  }

 private:
  struct Node {
    std::shared_ptr<detail::TensorStorage<Real>> out;
    std::function<void()> back;
  };

  std::vector<Node> nodes_;
  Tape* prev_ = nullptr;
  static inline thread_local Tape* active_ = nullptr;
};

namespace detail {

// Marks `out` as an op output and records its backward closure when any
// input participates in gradient tracking.
template <typename Real>
void finalize_op(Tensor<Real>& out, bool track, std::function<void()> back) {
  if (track) {
    out.set_requires_grad(true);
    out.storage()->leaf = false;
    Tape<Real>::active()->record(out.storage(), std::move(back));
  }
}

template <typename Real>
bool tracking() {
  return Tape<Real>::active() != nullptr;
}

}  // namespace detail

}  // namespace vsg
