#include <cmath>

#include "dualfete/error.hpp"
#include "dualfete/params.hpp"

namespace dualfete::autograd {
namespace {

template <class A, class B>
void require_layout(const char* op, const A& a, const B& b) {
  DUALFETE_REQUIRE(a.same_layout(b), std::string(op) + ": parameter names or shapes do not match");
}

}  // namespace

ModelParams axpy_params(const ModelParams& params, const GradientVector& grads, double step) {
  require_layout("axpy_params", params, grads);
  ModelParams out;
  auto g = grads.begin();
  for (const auto& [name, p] : params) {
    std::vector<double> v(p.size());
    const auto pd = p.data();
    const auto gd = g->second.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = pd[i] - step * gd[i];
    out.insert(name, Tensor(p.shape(), std::move(v)));
    ++g;
  }
  return out;
}

GradientVector zeros_like(const ModelParams& params) {
  GradientVector out;
  for (const auto& [name, p] : params) out.insert(name, Tensor::zeros(p.shape()));
  return out;
}

SgdResult sgd_step(const ModelParams& params, const GradientVector& grads, const GradientVector& velocity, double lr,
                   double momentum, double weight_decay) {
  DUALFETE_REQUIRE(lr >= 0.0, "sgd_step: negative learning rate");
  require_layout("sgd_step", params, grads);
  require_layout("sgd_step", params, velocity);
  SgdResult out;
  auto g = grads.begin();
  auto v = velocity.begin();
  for (const auto& [name, p] : params) {
    const auto pd = p.data();
    const auto gd = g->second.data();
    const auto vd = v->second.data();
    std::vector<double> np(p.size()), nv(p.size());
    for (std::size_t i = 0; i < np.size(); ++i) {
      nv[i] = momentum * vd[i] + gd[i] + weight_decay * pd[i];
      np[i] = pd[i] - lr * nv[i];
    }
    out.params.insert(name, Tensor(p.shape(), std::move(np)));
    out.velocity.insert(name, Tensor(p.shape(), std::move(nv)));
    ++g;
    ++v;
  }
  return out;
}

double grad_norm(const GradientVector& grads) {
  double s = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.data()) s += v * v;
  return std::sqrt(s);
}

GradientVector scale_grads(const GradientVector& grads, double s) {
  DUALFETE_REQUIRE(std::isfinite(s), "scale_grads: scale must be finite");
  GradientVector out;
  for (const auto& [name, g] : grads) {
    std::vector<double> v(g.data().begin(), g.data().end());
    for (double& x : v) x *= s;
    out.insert(name, Tensor(g.shape(), std::move(v)));
  }
  return out;
}

GradientVector add_grads(const GradientVector& a, const GradientVector& b) {
  require_layout("add_grads", a, b);
  GradientVector out;
  auto it = b.begin();
  for (const auto& [name, g] : a) {
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = g[i] + it->second[i];
    out.insert(name, Tensor(g.shape(), std::move(v)));
    ++it;
  }
  return out;
}

double dot(const GradientVector& a, const GradientVector& b) {
  require_layout("dot", a, b);
  double s = 0.0;
  auto it = b.begin();
  for (const auto& [name, g] : a) {
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * it->second[i];
    ++it;
  }
  return s;
}

}  // namespace dualfete::autograd
