#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dualfete::autograd {

class Tape;

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Dense row-major array of doubles. Storage is shared between copies and
// duplicated on the first write (copy-on-write), so passing tensors by value
// is cheap. A tensor that lives on a Tape carries its node id.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from(std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_->size(); }
  bool is_scalar() const noexcept { return size() == 1; }

  std::span<const double> data() const noexcept { return *data_; }
  std::span<double> mutable_data();
  const std::vector<double>& values() const noexcept { return *data_; }

  double operator[](std::size_t i) const { return (*data_)[i]; }
  double item() const;

  bool requires_grad() const noexcept { return node_.has_value(); }
  std::optional<std::size_t> node_id() const noexcept { return node_; }
  Tape* tape() const noexcept { return tape_; }

  // Same values with the tape link dropped.
  Tensor detach() const;

  bool bitwise_equal(const Tensor& other) const;

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::optional<std::size_t> node_;
  Tape* tape_ = nullptr;
};

}  // namespace dualfete::autograd
