#include "dualfete/autograd.hpp"

#include "dualfete/error.hpp"

namespace dualfete::autograd {

Tensor Tape::watch(const Tensor& value, std::string name) {
  Tensor out = value.detach();
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{{}, out.size(), nullptr});
  leaves_.push_back(Leaf{std::move(name), id, out.shape()});
  out.node_ = id;
  out.tape_ = this;
  return out;
}

ModelParams Tape::watch(const ModelParams& params) {
  ModelParams out;
  for (const auto& [name, t] : params) out.insert(name, watch(t, name));
  return out;
}

Tensor Tape::record(Tensor value, const std::vector<const Tensor*>& inputs, BackwardFn fn) {
  bool any = false;
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (const Tensor* in : inputs) {
    if (in->requires_grad()) {
      DUALFETE_REQUIRE(in->tape() == this, "tape: input recorded on a different tape");
      ids.push_back(*in->node_id());
      any = true;
    } else {
      ids.push_back(kUntracked);
    }
  }
  value.node_.reset();
  value.tape_ = nullptr;
  if (!any) return value;
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{std::move(ids), value.size(), std::move(fn)});
  value.node_ = id;
  value.tape_ = this;
  return value;
}

GradientVector Tape::backward(const Tensor& loss) const {
  DUALFETE_REQUIRE(loss.size() == 1, "backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  GradientVector out;
  if (!loss.requires_grad()) {
    for (const auto& leaf : leaves_) out.insert(leaf.name, Tensor::zeros(leaf.shape));
    return out;
  }
  DUALFETE_REQUIRE(loss.tape() == this, "backward: loss lives on a different tape");

  const std::size_t root = *loss.node_id();
  std::vector<std::vector<double>> grads(root + 1);
  grads[root].assign(1, 1.0);

  for (std::size_t id = root + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (grads[id].empty() || !node.backward) continue;
    std::vector<std::span<double>> sinks;
    sinks.reserve(node.inputs.size());
    for (std::size_t in : node.inputs) {
      if (in == kUntracked) {
        sinks.emplace_back();
        continue;
      }
      if (grads[in].empty()) grads[in].assign(nodes_[in].numel, 0.0);
      sinks.emplace_back(grads[in]);
    }
    node.backward(grads[id], GradSink(std::move(sinks)));
    // Interior gradients are no longer needed once propagated.
    if (id != root) std::vector<double>().swap(grads[id]);
  }

  for (const auto& leaf : leaves_) {
    if (leaf.node <= root && !grads[leaf.node].empty())
      out.insert(leaf.name, Tensor(leaf.shape, std::move(grads[leaf.node])));
    else
      out.insert(leaf.name, Tensor::zeros(leaf.shape));
  }
  return out;
}

}  // namespace dualfete::autograd
