#include "cag/autodiff/tensor.hpp"

#include <sstream>

namespace cag::ad {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const long r = static_cast<long>(rank);
  const long a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

namespace {

void check_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->values.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                     " values, got " + std::to_string(values.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const TensorImpl& Tensor::checked() const {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return *impl_;
}

TensorImpl& Tensor::checked() {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return checked().shape; }
std::size_t Tensor::numel() const { return checked().values.size(); }
std::size_t Tensor::dim(int axis) const { return shape()[normalize_axis(axis, rank())]; }

std::span<const double> Tensor::values() const { return checked().values; }
std::span<double> Tensor::mutable_values() { return checked().values; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return checked().values[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("index rank mismatch for " + shape_str(s));
  std::size_t flat = 0;
  std::size_t i = 0;
  for (std::size_t v : index) {
    if (v >= s[i]) throw ShapeError("index out of range for " + shape_str(s));
    flat = flat * s[i] + v;
    ++i;
  }
  return checked().values[flat];
}

bool Tensor::requires_grad() const { return checked().requires_grad; }
void Tensor::set_requires_grad(bool on) { checked().requires_grad = on; }
bool Tensor::is_leaf() const { return checked().is_leaf; }

bool Tensor::has_grad() const { return !checked().grad.empty(); }

std::vector<double> Tensor::grad() const {
  const auto& impl = checked();
  if (impl.grad.empty()) return std::vector<double>(impl.values.size(), 0.0);
  return impl.grad;
}

void Tensor::zero_grad() { checked().grad.clear(); }

Tensor Tensor::clone() const {
  Tensor t = from(shape(), checked().values, requires_grad());
  return t;
}

Tensor Tensor::detach() const { return from(shape(), checked().values, false); }

}  // namespace cag::ad
