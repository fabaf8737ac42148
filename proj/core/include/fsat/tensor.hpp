#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <new>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsat {

/// Shape mismatch, bad spec or invalid configuration value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse: calling an operation outside its precondition.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// NaN or Inf produced by a forward or backward computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing, truncated or malformed file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

/// Cache-line aligned storage. Vectorised kernels peel a scalar prologue up to
/// the first aligned element, and the scalar and packed paths round
/// differently (FMA); fixing the alignment keeps results independent of where
/// the allocator happens to place a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. A rank-0 shape holds one scalar.
class Tensor {
 public:
  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double item() const;

  /// Same buffer, new shape of equal size.
  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  Buffer data_;
};

class Tape;
class BackwardContext;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  std::uint32_t id() const { return id_; }
  Tape& tape() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Ordered record of executed ops; replayed once in reverse by backward().
///
/// Ops append nodes in execution order, so reverse insertion order is a valid
/// reverse topological order. A node whose inputs do not require gradients keeps
/// no backward closure. Every recorded value is checked for NaN/Inf.
class Tape {
 public:
  using BackwardFn = std::function<void(BackwardContext&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  Var record(const char* op, Tensor value, std::span<const Var> inputs,
             BackwardFn backward);

  /// Accumulates d(loss)/d(node) for every node that requires grad.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  /// Gradient of the last backward() w.r.t. v; zeros if v was unreachable.
  Tensor grad(Var v) const;

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class BackwardContext;

  struct Node {
    const char* op = "leaf";
    Tensor value;
    std::optional<Tensor> grad;
    bool requires_grad = false;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
  };

  std::uint32_t check_input(Var v) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// View handed to an op's backward closure.
class BackwardContext {
 public:
  const Tensor& grad_output() const;
  const Tensor& output() const;
  const Tensor& input(std::size_t i) const;
  bool needs_grad(std::size_t i) const;
  /// Zero-initialised accumulator for input i; contributions add across fan-out.
  Tensor& input_grad(std::size_t i);

 private:
  friend class Tape;
  BackwardContext(Tape& tape, std::uint32_t node) : tape_(tape), node_(node) {}

  Tape& tape_;
  std::uint32_t node_;
};

}  // namespace fsat
