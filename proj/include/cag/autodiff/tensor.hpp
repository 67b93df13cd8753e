#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cag::ad {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Storage behind a Tensor handle. Values are immutable once an op has
// consumed them, except for leaf parameters updated between tape resets.
struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;
  bool is_leaf = true;
};

// Shared handle to a dense row-major 64-bit tensor. Copies alias the same
// storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Negative axes count from the back.
  std::size_t dim(int axis) const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;

  bool has_grad() const;
  // Gradient buffer; all zeros when no gradient has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad();

  Tensor clone() const;   // deep copy, keeps requires_grad
  Tensor detach() const;  // deep copy, no grad

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  const TensorImpl& checked() const;
  TensorImpl& checked();

  std::shared_ptr<TensorImpl> impl_;
};

std::size_t normalize_axis(int axis, std::size_t rank);

}  // namespace cag::ad
