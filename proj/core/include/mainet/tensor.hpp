#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "mainet/error.hpp"

namespace mainet {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

/// Dense double-precision tensor in row-major order.
///
/// A Tensor is a cheap handle: copies share the underlying value and gradient
/// stores. Values are immutable after construction except through explicit
/// parameter-update access (`mutable_data`), so handles are safe to read from
/// any thread. The gradient store exists only while `requires_grad` is set and
/// is written during `GradTape::backward`.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(shape_numel(shape_), fill)) {}

  Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (values.size() != shape_numel(shape_))
      throw ShapeError("tensor: " + std::to_string(values.size()) +
                       " values do not fill shape " + shape_str(shape_));
    data_ = std::make_shared<std::vector<double>>(std::move(values));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  // Accessors returning references are ref-qualified: calling them on a
  // temporary hands back a copy instead of a reference into a dying object.
  const Shape& shape() const& { return shape_; }
  Shape shape() && { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  bool defined() const { return data_ != nullptr; }

  bool requires_grad() const { return requires_grad_; }

  Tensor& set_requires_grad(bool on) {
    requires_grad_ = on;
    if (on && !grad_) grad_ = std::make_shared<std::vector<double>>(size(), 0.0);
    return *this;
  }

  const std::vector<double>& data() const& { return *data_; }
  std::vector<double> data() && { return *data_; }

  /// Direct write access. Reserved for parameter updates and constructors of
  /// fresh tensors; everything else goes through ops.
  std::vector<double>& mutable_data() { return *data_; }

  const std::vector<double>& grad() const& {
    if (!grad_) throw ContractError("tensor: gradient requested but none allocated");
    return *grad_;
  }
  std::vector<double> grad() && {
    if (!grad_) throw ContractError("tensor: gradient requested but none allocated");
    return *grad_;
  }

  std::vector<double>& mutable_grad() {
    if (!grad_) throw ContractError("tensor: gradient requested but none allocated");
    return *grad_;
  }

  void zero_grad() {
    if (grad_)
      for (auto& g : *grad_) g = 0.0;
  }

  /// Value of a single-element tensor.
  double item() const {
    if (size() != 1) throw ContractError("tensor: item() on shape " + shape_str(shape_));
    return (*data_)[0];
  }

  double operator()(std::size_t i) const { return (*data_)[i]; }
  double operator()(std::size_t i, std::size_t j) const {
    return (*data_)[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return (*data_)[(i * shape_[1] + j) * shape_[2] + k];
  }

  bool same_storage(const Tensor& o) const { return data_ == o.data_; }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<std::vector<double>> grad_;
  bool requires_grad_ = false;
};

}  // namespace mainet
