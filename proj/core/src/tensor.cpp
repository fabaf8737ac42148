#include "fsat/tensor.hpp"

#include <cmath>
#include <sstream>

namespace fsat {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (shape_size(shape_) != data_.size()) {
    throw ConfigError("tensor shape " + shape_string(shape_) + " does not match " +
                      std::to_string(data_.size()) + " values");
  }
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw UsageError("item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ConfigError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

const Tensor& Var::value() const { return tape().value(*this); }

bool Var::requires_grad() const { return tape().requires_grad(*this); }

Tape& Var::tape() const {
  if (!tape_) throw UsageError("use of unbound Var");
  return *tape_;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (consumed_) throw UsageError("tape already consumed by backward()");
  if (!value.all_finite()) throw NumericalError("non-finite value in leaf tensor");
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs,
                 BackwardFn backward) {
  if (consumed_) throw UsageError("tape already consumed by backward()");
  if (!value.all_finite()) {
    throw NumericalError(std::string("non-finite value produced by ") + op);
  }
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    std::uint32_t id = check_input(v);
    node.inputs.push_back(id);
    node.requires_grad = node.requires_grad || nodes_[id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

std::uint32_t Tape::check_input(Var v) const {
  if (&v.tape() != this || v.id() >= nodes_.size()) {
    throw UsageError("Var belongs to a different tape");
  }
  return v.id();
}

const Tensor& Tape::value(Var v) const { return nodes_[check_input(v)].value; }

bool Tape::requires_grad(Var v) const { return nodes_[check_input(v)].requires_grad; }

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_[check_input(v)];
  if (node.grad) return *node.grad;
  return Tensor(node.value.shape(), 0.0);
}

void Tape::backward(Var loss) {
  std::uint32_t root = check_input(loss);
  if (consumed_) throw UsageError("backward() called twice on the same tape");
  if (nodes_[root].value.size() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " +
                     shape_string(nodes_[root].value.shape()));
  }
  consumed_ = true;
  if (!nodes_[root].requires_grad) return;
  nodes_[root].grad = Tensor(nodes_[root].value.shape(), 1.0);
  for (std::uint32_t i = root + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.grad) continue;
    if (!node.grad->all_finite()) {
      throw NumericalError(std::string("non-finite gradient flowing into ") + node.op);
    }
    if (!node.backward) continue;
    BackwardContext ctx(*this, i);
    node.backward(ctx);
  }
}

const Tensor& BackwardContext::grad_output() const { return *tape_.nodes_[node_].grad; }

const Tensor& BackwardContext::output() const { return tape_.nodes_[node_].value; }

const Tensor& BackwardContext::input(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].value;
}

bool BackwardContext::needs_grad(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].requires_grad;
}

Tensor& BackwardContext::input_grad(std::size_t i) {
  auto& target = tape_.nodes_[tape_.nodes_[node_].inputs.at(i)];
  if (!target.grad) target.grad = Tensor(target.value.shape(), 0.0);
  return *target.grad;
}

}  // namespace fsat
