#include "dualfete/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dualfete/error.hpp"

namespace dualfete::metrics {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Felzenszwalb-Huttenlocher lower envelope of parabolas, in place on one line.
void edt_1d(std::vector<double>& f, std::size_t n, std::vector<double>& d, std::vector<std::size_t>& v,
            std::vector<double>& z) {
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q)
    if (f[q] < kInf) {
      first = q;
      break;
    }
  if (first == n) return;  // no feature on this line: stays infinite
  v[0] = first;
  z[0] = -kInf;
  z[1] = kInf;
  for (std::size_t q = first + 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    const auto fq = f[q] + static_cast<double>(q * q);
    auto intersect = [&](std::size_t vk) {
      return (fq - (f[vk] + static_cast<double>(vk * vk))) /
             (2.0 * static_cast<double>(q) - 2.0 * static_cast<double>(vk));
    };
    double s = intersect(v[k]);
    while (s <= z[k]) s = intersect(v[--k]);  // z[0] == -inf stops the loop
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double diff = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = diff * diff + f[v[k]];
  }
  for (std::size_t q = 0; q < n; ++q) f[q] = d[q];
}

// Squared distance of every pixel to the nearest feature pixel.
std::vector<double> squared_edt(const std::vector<std::uint8_t>& features, std::size_t h, std::size_t w) {
  std::vector<double> grid(h * w);
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = features[i] ? 0.0 : kInf;
  const std::size_t n = std::max(h, w);
  std::vector<double> line(n), d(n), z(n + 1);
  std::vector<std::size_t> v(n);
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) line[y] = grid[y * w + x];
    edt_1d(line, h, d, v, z);
    for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = line[y];
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) line[x] = grid[y * w + x];
    edt_1d(line, w, d, v, z);
    for (std::size_t x = 0; x < w; ++x) grid[y * w + x] = line[x];
  }
  return grid;
}

void append_nearest(const std::vector<std::uint8_t>& from, const std::vector<std::uint8_t>& to, std::size_t h,
                    std::size_t w, std::vector<double>& out) {
  const auto dist2 = squared_edt(to, h, w);
  for (std::size_t i = 0; i < from.size(); ++i)
    if (from[i]) out.push_back(std::sqrt(dist2[i]));
}

}  // namespace

double dice(MaskView pred, MaskView gt) {
  DUALFETE_REQUIRE(pred.size() == gt.size(), "dice: mask sizes differ");
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, g = gt[i] != 0;
    a += p;
    b += g;
    both += p && g;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

std::vector<std::uint8_t> boundary(MaskView mask, std::size_t h, std::size_t w) {
  DUALFETE_REQUIRE(mask.size() == h * w, "boundary: mask size does not match H x W");
  std::vector<std::uint8_t> out(h * w, 0);
  auto bg = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) || x >= static_cast<std::ptrdiff_t>(w)) return true;
    return mask[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] == 0;
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (!mask[y * w + x]) continue;
      const auto iy = static_cast<std::ptrdiff_t>(y), ix = static_cast<std::ptrdiff_t>(x);
      if (bg(iy - 1, ix) || bg(iy + 1, ix) || bg(iy, ix - 1) || bg(iy, ix + 1)) out[y * w + x] = 1;
    }
  return out;
}

double percentile_sorted(std::span<const double> sorted, double q) {
  DUALFETE_REQUIRE(!sorted.empty(), "percentile: empty input");
  const double rank = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = static_cast<std::size_t>(std::ceil(rank));
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - static_cast<double>(lo));
}

std::optional<double> hd95(MaskView pred, MaskView gt, std::size_t h, std::size_t w) {
  DUALFETE_REQUIRE(pred.size() == gt.size() && pred.size() == h * w, "hd95: mask sizes differ");
  const auto nonempty = [](MaskView m) { return std::any_of(m.begin(), m.end(), [](auto v) { return v != 0; }); };
  if (!nonempty(pred) || !nonempty(gt)) return std::nullopt;
  const auto bp = boundary(pred, h, w);
  const auto bg = boundary(gt, h, w);
  std::vector<double> d;
  append_nearest(bp, bg, h, w, d);
  append_nearest(bg, bp, h, w, d);
  std::sort(d.begin(), d.end());
  return percentile_sorted(d, 95.0);
}

double disagreement(MaskView pred_phi, MaskView pred_psi) { return 1.0 - dice(pred_phi, pred_psi); }

double pl_error(MaskView pseudo_labels, MaskView gt) { return 1.0 - dice(pseudo_labels, gt); }

std::vector<double> entropy_sum(const autograd::Tensor& probs) {
  DUALFETE_REQUIRE(probs.rank() == 4, "entropy_sum: expected (B, C, H, W)");
  const std::size_t b = probs.dim(0), per = probs.size() / b;
  std::vector<double> out(b, 0.0);
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < per; ++i) {
      const double p = probs[n * per + i];
      if (p > 0.0) out[n] -= p * std::log(p);
    }
  return out;
}

}  // namespace dualfete::metrics
