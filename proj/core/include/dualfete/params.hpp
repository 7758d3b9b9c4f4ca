#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dualfete/tensor.hpp"

namespace dualfete::autograd {

// Insertion-ordered name -> tensor map. The Tag parameter keeps parameter
// sets and gradient sets from being mixed up at compile time.
template <class Tag>
class NamedTensors {
 public:
  using Entry = std::pair<std::string, Tensor>;

  NamedTensors() = default;

  void insert(std::string name, Tensor value);

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor* find(const std::string& name) const;
  bool contains(const std::string& name) const { return find(name) != nullptr; }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t total_elements() const;

  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  // Same names, same shapes.
  template <class OtherTag>
  bool same_layout(const NamedTensors<OtherTag>& other) const;

  bool bitwise_equal(const NamedTensors& other) const;

  // Flattened copy of every element, in entry order.
  std::vector<double> flatten() const;

 private:
  std::vector<Entry> entries_;
};

struct ParamsTag {};
struct GradTag {};

using ModelParams = NamedTensors<ParamsTag>;
using GradientVector = NamedTensors<GradTag>;

template <class Tag>
const Tensor& NamedTensors<Tag>::at(const std::string& name) const {
  if (const Tensor* t = find(name)) return *t;
  throw std::out_of_range("no tensor named '" + name + "'");
}

template <class Tag>
Tensor& NamedTensors<Tag>::at(const std::string& name) {
  for (auto& [n, t] : entries_)
    if (n == name) return t;
  throw std::out_of_range("no tensor named '" + name + "'");
}

template <class Tag>
const Tensor* NamedTensors<Tag>::find(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return &t;
  return nullptr;
}

template <class Tag>
std::size_t NamedTensors<Tag>::total_elements() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

template <class Tag>
template <class OtherTag>
bool NamedTensors<Tag>::same_layout(const NamedTensors<OtherTag>& other) const {
  if (size() != other.size()) return false;
  auto it = other.begin();
  for (const auto& [name, t] : entries_) {
    if (it->first != name || it->second.shape() != t.shape()) return false;
    ++it;
  }
  return true;
}

template <class Tag>
bool NamedTensors<Tag>::bitwise_equal(const NamedTensors& other) const {
  if (!same_layout(other)) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (!entries_[i].second.bitwise_equal(other.entries_[i].second)) return false;
  return true;
}

template <class Tag>
std::vector<double> NamedTensors<Tag>::flatten() const {
  std::vector<double> out;
  out.reserve(total_elements());
  for (const auto& e : entries_) out.insert(out.end(), e.second.data().begin(), e.second.data().end());
  return out;
}

template <class Tag>
void NamedTensors<Tag>::insert(std::string name, Tensor value) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate tensor name '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(value));
}

// params - step * grads. Inputs are left untouched.
ModelParams axpy_params(const ModelParams& params, const GradientVector& grads, double step);

GradientVector zeros_like(const ModelParams& params);

struct SgdResult {
  ModelParams params;
  GradientVector velocity;
};

// v <- momentum * v + grad + weight_decay * param;  param <- param - lr * v
SgdResult sgd_step(const ModelParams& params, const GradientVector& grads, const GradientVector& velocity,
                   double lr, double momentum, double weight_decay);

double grad_norm(const GradientVector& grads);
GradientVector scale_grads(const GradientVector& grads, double s);
GradientVector add_grads(const GradientVector& a, const GradientVector& b);
double dot(const GradientVector& a, const GradientVector& b);

}  // namespace dualfete::autograd
