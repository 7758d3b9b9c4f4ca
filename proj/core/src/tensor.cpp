#include "dualfete/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

#include "dualfete/error.hpp"
#include "dualfete/rng.hpp"

namespace dualfete {

namespace detail {
void throw_contract(const std::string& msg) { throw ContractViolation(msg); }
}  // namespace detail

double normal(Rng& rng) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  double u1 = uniform(rng, 0.0, 1.0);
  while (u1 <= 0.0) u1 = uniform(rng, 0.0, 1.0);
  const double u2 = uniform(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

}  // namespace dualfete

namespace dualfete::autograd {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor::Tensor() : data_(std::make_shared<std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(std::make_shared<std::vector<double>>(numel(shape_), 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::make_shared<std::vector<double>>(std::move(data))) {
  DUALFETE_REQUIRE(numel(shape_) == data_->size(), "tensor: shape " + to_string(shape_) + " does not match " +
                                                       std::to_string(data_->size()) + " elements");
}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

std::span<double> Tensor::mutable_data() {
  if (data_.use_count() > 1) data_ = std::make_shared<std::vector<double>>(*data_);
  return *data_;
}

double Tensor::item() const {
  DUALFETE_REQUIRE(size() == 1, "item: tensor of shape " + to_string(shape_) + " is not a scalar");
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor out = *this;
  out.node_.reset();
  out.tape_ = nullptr;
  return out;
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape_ != other.shape_ || size() != other.size()) return false;
  return size() == 0 || std::memcmp(data_->data(), other.data_->data(), size() * sizeof(double)) == 0;
}

}  // namespace dualfete::autograd
