#include "dualfete/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "dualfete/error.hpp"
#include "dualfete/rng.hpp"

namespace dualfete::autograd {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Tape* tape_of(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->requires_grad()) continue;
    DUALFETE_REQUIRE(tape == nullptr || tape == t->tape(), "op: inputs recorded on different tapes");
    tape = t->tape();
  }
  return tape;
}

Tensor finish(Tensor value, std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  Tape* tape = tape_of(inputs);
  if (tape == nullptr) return value;
  return tape->record(std::move(value), std::vector<const Tensor*>(inputs), std::move(fn));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  DUALFETE_REQUIRE(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                                               to_string(b.shape()));
}

void require_rank4(const char* op, const Tensor& x) {
  DUALFETE_REQUIRE(x.rank() == 4, std::string(op) + ": expected (B, C, H, W), got " + to_string(x.shape()));
}

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, k, stride, pad, ho, wo;
  std::size_t col_rows() const { return cin * k * k; }
  std::size_t col_cols() const { return ho * wo; }
};

// col[(ci*k + ky)*k + kx][oy*wo + ox] = x[ci][oy*s + ky - p][ox*s + kx - p]
void im2col(const ConvGeometry& g, const double* x, double* col) {
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = col + ((ci * g.k + ky) * g.k + kx) * g.col_cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = x + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
}

void col2im_add(const ConvGeometry& g, const double* col, double* x) {
  for (std::size_t ci = 0; ci < g.cin; ++ci)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = col + ((ci * g.k + ky) * g.k + kx) * g.col_cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          const double* src = row + oy * g.wo;
          double* dst = x + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
}

template <class F, class D>
Tensor unary(const Tensor& x, F f, D dfdx) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  Tensor y(x.shape(), std::move(out));
  Tensor xs = x.detach();
  Tensor ys = y.detach();
  return finish(y, {&x}, [xs, ys, dfdx](std::span<const double> g, const GradSink& sink) {
    auto gx = sink.input(0);
    const auto xv = xs.data();
    const auto yv = ys.data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t padding) {
  require_rank4("conv2d", x);
  DUALFETE_REQUIRE(weight.rank() == 4 && weight.dim(2) == weight.dim(3),
                   "conv2d: weight must be (Co, Ci, K, K), got " + to_string(weight.shape()));
  DUALFETE_REQUIRE(weight.dim(1) == x.dim(1), "conv2d: input " + to_string(x.shape()) + " has " +
                                                  std::to_string(x.dim(1)) + " channels but weight " +
                                                  to_string(weight.shape()) + " expects " +
                                                  std::to_string(weight.dim(1)));
  DUALFETE_REQUIRE(bias.rank() == 1 && bias.dim(0) == weight.dim(0),
                   "conv2d: bias " + to_string(bias.shape()) + " does not match weight " + to_string(weight.shape()));
  DUALFETE_REQUIRE(stride >= 1, "conv2d: stride must be >= 1");
  const std::size_t k = weight.dim(2);
  DUALFETE_REQUIRE(x.dim(2) + 2 * padding >= k && x.dim(3) + 2 * padding >= k,
                   "conv2d: kernel larger than padded input " + to_string(x.shape()));

  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), k, stride, padding, 0, 0};
  g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;

  const std::size_t in_plane = g.cin * g.h * g.w;
  const std::size_t out_plane = g.cout * g.ho * g.wo;
  std::vector<double> out(g.batch * out_plane);
  std::vector<double> col(g.col_rows() * g.col_cols());
  ConstMapMat wmat(weight.data().data(), static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(g.col_rows()));
  const Eigen::Map<const Eigen::VectorXd> bvec(bias.data().data(), static_cast<Eigen::Index>(g.cout));
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(g, x.data().data() + b * in_plane, col.data());
    ConstMapMat cmat(col.data(), static_cast<Eigen::Index>(g.col_rows()), static_cast<Eigen::Index>(g.col_cols()));
    MapMat omat(out.data() + b * out_plane, static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(g.col_cols()));
    omat.noalias() = wmat * cmat;
    omat.colwise() += bvec;
  }

  Tensor y({g.batch, g.cout, g.ho, g.wo}, std::move(out));
  Tensor xs = x.detach();
  Tensor ws = weight.detach();
  return finish(y, {&x, &weight, &bias}, [g, xs, ws](std::span<const double> gout, const GradSink& sink) {
    const std::size_t in_plane = g.cin * g.h * g.w;
    const std::size_t out_plane = g.cout * g.ho * g.wo;
    const auto rows = static_cast<Eigen::Index>(g.col_rows());
    const auto cols = static_cast<Eigen::Index>(g.col_cols());
    const auto cout = static_cast<Eigen::Index>(g.cout);
    ConstMapMat wmat(ws.data().data(), cout, rows);
    std::vector<double> col(g.col_rows() * g.col_cols());
    std::vector<double> dcol(sink.wants(0) ? col.size() : 0);
    for (std::size_t b = 0; b < g.batch; ++b) {
      ConstMapMat go(gout.data() + b * out_plane, cout, cols);
      if (sink.wants(1)) {
        im2col(g, xs.data().data() + b * in_plane, col.data());
        ConstMapMat cmat(col.data(), rows, cols);
        MapMat dw(sink.input(1).data(), cout, rows);
        dw.noalias() += go * cmat.transpose();
      }
      if (sink.wants(2)) {
        Eigen::Map<Eigen::VectorXd> db(sink.input(2).data(), cout);
        db += go.rowwise().sum();
      }
      if (sink.wants(0)) {
        MapMat dc(dcol.data(), rows, cols);
        dc.noalias() = wmat.transpose() * go;
        col2im_add(g, dcol.data(), sink.input(0).data() + b * in_plane);
      }
    }
  });
}

Tensor upsample_nearest2x(const Tensor& x) {
  require_rank4("upsample_nearest2x", x);
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<double> out(planes * 4 * h * w);
  const auto in = x.data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < 2 * h; ++oy)
      for (std::size_t ox = 0; ox < 2 * w; ++ox)
        out[(p * 2 * h + oy) * 2 * w + ox] = in[(p * h + oy / 2) * w + ox / 2];
  Tensor y({x.dim(0), x.dim(1), 2 * h, 2 * w}, std::move(out));
  return finish(y, {&x}, [planes, h, w](std::span<const double> g, const GradSink& sink) {
    auto gx = sink.input(0);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t oy = 0; oy < 2 * h; ++oy)
        for (std::size_t ox = 0; ox < 2 * w; ++ox) gx[(p * h + oy / 2) * w + ox / 2] += g[(p * 2 * h + oy) * 2 * w + ox];
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank4("concat_channels", a);
  require_rank4("concat_channels", b);
  DUALFETE_REQUIRE(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
                   "concat_channels: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  const std::size_t batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<double> out(batch * (ca + cb) * hw);
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(a.data().data() + n * ca * hw, ca * hw, out.data() + n * (ca + cb) * hw);
    std::copy_n(b.data().data() + n * cb * hw, cb * hw, out.data() + n * (ca + cb) * hw + ca * hw);
  }
  Tensor y({batch, ca + cb, a.dim(2), a.dim(3)}, std::move(out));
  return finish(y, {&a, &b}, [batch, ca, cb, hw](std::span<const double> g, const GradSink& sink) {
    for (std::size_t n = 0; n < batch; ++n) {
      const double* src = g.data() + n * (ca + cb) * hw;
      if (sink.wants(0)) {
        double* ga = sink.input(0).data() + n * ca * hw;
        for (std::size_t i = 0; i < ca * hw; ++i) ga[i] += src[i];
      }
      if (sink.wants(1)) {
        double* gb = sink.input(1).data() + n * cb * hw;
        for (std::size_t i = 0; i < cb * hw; ++i) gb[i] += src[ca * hw + i];
      }
    }
  });
}

Tensor softmax_channels(const Tensor& x) {
  require_rank4("softmax_channels", x);
  const std::size_t batch = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t base = n * c * hw + p;
      double mx = in[base];
      for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, in[base + k * hw]);
      double z = 0.0;
      for (std::size_t k = 0; k < c; ++k) z += (out[base + k * hw] = std::exp(in[base + k * hw] - mx));
      for (std::size_t k = 0; k < c; ++k) out[base + k * hw] /= z;
    }
  Tensor y(x.shape(), std::move(out));
  Tensor ys = y.detach();
  return finish(y, {&x}, [ys, batch, c, hw](std::span<const double> g, const GradSink& sink) {
    auto gx = sink.input(0);
    const auto yv = ys.data();
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t p = 0; p < hw; ++p) {
        const std::size_t base = n * c * hw + p;
        double dotp = 0.0;
        for (std::size_t k = 0; k < c; ++k) dotp += g[base + k * hw] * yv[base + k * hw];
        for (std::size_t k = 0; k < c; ++k) gx[base + k * hw] += yv[base + k * hw] * (g[base + k * hw] - dotp);
      }
  });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  DUALFETE_REQUIRE(lo <= hi, "clamp: lo > hi");
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor clamped_log(const Tensor& x, double lo, double hi) {
  DUALFETE_REQUIRE(lo > 0.0 && lo <= hi, "clamped_log: need 0 < lo <= hi");
  static constexpr double kTiny = 1e-300;
  return unary(
      x, [lo, hi](double v) { return std::log(std::clamp(v, lo, hi)); },
      [](double v, double) { return 1.0 / std::max(v, kTiny); });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return finish(Tensor(a.shape(), std::move(out)), {&a, &b}, [](std::span<const double> g, const GradSink& sink) {
    for (std::size_t k = 0; k < 2; ++k)
      if (sink.wants(k)) {
        auto gi = sink.input(k);
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i];
      }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return finish(Tensor(a.shape(), std::move(out)), {&a, &b}, [](std::span<const double> g, const GradSink& sink) {
    if (sink.wants(0)) {
      auto ga = sink.input(0);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    }
    if (sink.wants(1)) {
      auto gb = sink.input(1);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor as = a.detach(), bs = b.detach();
  return finish(Tensor(a.shape(), std::move(out)), {&a, &b},
                [as, bs](std::span<const double> g, const GradSink& sink) {
                  if (sink.wants(0)) {
                    auto ga = sink.input(0);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bs[i];
                  }
                  if (sink.wants(1)) {
                    auto gb = sink.input(1);
                    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * as[i];
                  }
                });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape("div", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
  Tensor as = a.detach(), bs = b.detach();
  return finish(Tensor(a.shape(), std::move(out)), {&a, &b},
                [as, bs](std::span<const double> g, const GradSink& sink) {
                  if (sink.wants(0)) {
                    auto ga = sink.input(0);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / bs[i];
                  }
                  if (sink.wants(1)) {
                    auto gb = sink.input(1);
                    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i] * as[i] / (bs[i] * bs[i]);
                  }
                });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return finish(Tensor::scalar(s), {&x}, [](std::span<const double> g, const GradSink& sink) {
    auto gx = sink.input(0);
    for (double& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  DUALFETE_REQUIRE(x.size() > 0, "mean: empty tensor");
  const double n = static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x.data()) s += v;
  return finish(Tensor::scalar(s / n), {&x}, [n](std::span<const double> g, const GradSink& sink) {
    auto gx = sink.input(0);
    for (double& v : gx) v += g[0] / n;
  });
}

Tensor masked_sum(const Tensor& x, const Tensor& mask) {
  require_same_shape("masked_sum", x, mask);
  DUALFETE_REQUIRE(!mask.requires_grad(), "masked_sum: mask must be a constant");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (mask[i] != 0.0) s += x[i];
  Tensor ms = mask.detach();
  return finish(Tensor::scalar(s), {&x}, [ms](std::span<const double> g, const GradSink& sink) {
    auto gx = sink.input(0);
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (ms[i] != 0.0) gx[i] += g[0];
  });
}

Tensor dropout(const Tensor& x, double rate, std::uint64_t seed) {
  DUALFETE_REQUIRE(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
  if (rate == 0.0) return x;
  Rng rng(mix_seed(seed));
  std::vector<double> scale(x.size());
  const double keep = 1.0 / (1.0 - rate);
  for (double& s : scale) s = uniform(rng, 0.0, 1.0) < rate ? 0.0 : keep;
  return mul(x, Tensor(x.shape(), std::move(scale)));
}

}  // namespace dualfete::autograd
