#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dualfete/params.hpp"
#include "dualfete/tensor.hpp"

namespace dualfete::autograd {

// Accumulation target handed to a backward rule: one gradient buffer per
// recorded input. Buffers of inputs that do not require grad are empty.
class GradSink {
 public:
  explicit GradSink(std::vector<std::span<double>> inputs) : inputs_(std::move(inputs)) {}
  std::span<double> input(std::size_t i) const { return inputs_.at(i); }
  bool wants(std::size_t i) const { return !inputs_.at(i).empty(); }

 private:
  std::vector<std::span<double>> inputs_;
};

using BackwardFn = std::function<void(std::span<const double> grad_out, const GradSink& sink)>;

// Linear record of operations. Nodes are appended in execution order, which
// is already a topological order, so backward is a single reverse sweep.
// Tensors keep a raw pointer to their tape: a tape must outlive every tensor
// recorded on it and cannot be moved.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a named leaf whose gradient is reported by backward().
  Tensor watch(const Tensor& value, std::string name);
  ModelParams watch(const ModelParams& params);

  // Appends an operation. Returns an untracked tensor when no input is on the tape.
  Tensor record(Tensor value, const std::vector<const Tensor*>& inputs, BackwardFn fn);

  // d(loss)/d(leaf) for every watched leaf, in watch order. Leaves the loss
  // does not depend on get zero gradients. The tape can be swept repeatedly.
  GradientVector backward(const Tensor& loss) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t leaf_count() const noexcept { return leaves_.size(); }

 private:
  struct Node {
    std::vector<std::size_t> inputs;  // node ids; kUntracked for constants
    std::size_t numel = 0;
    BackwardFn backward;
  };
  struct Leaf {
    std::string name;
    std::size_t node;
    Shape shape;
  };

  std::vector<Node> nodes_;
  std::vector<Leaf> leaves_;
};

inline constexpr std::size_t kUntracked = static_cast<std::size_t>(-1);

}  // namespace dualfete::autograd
