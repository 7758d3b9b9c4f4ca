#include "dualfete/oracles/exhaustive_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dualfete/metrics.hpp"
#include "dualfete/rng.hpp"

namespace dualfete::oracles {

namespace {

struct Pixel {
  long y, x;
};

std::vector<Pixel> boundary_pixels(std::span<const std::uint8_t> m, std::size_t h, std::size_t w) {
  const long H = static_cast<long>(h), W = static_cast<long>(w);
  auto fg = [&](long y, long x) { return y >= 0 && x >= 0 && y < H && x < W && m[y * W + x] != 0; };
  std::vector<Pixel> out;
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x)
      if (fg(y, x) && !(fg(y - 1, x) && fg(y + 1, x) && fg(y, x - 1) && fg(y, x + 1))) out.push_back({y, x});
  return out;
}

void nearest_all_pairs(const std::vector<Pixel>& from, const std::vector<Pixel>& to, std::vector<double>& out) {
  for (const auto& a : from) {
    long best = std::numeric_limits<long>::max();
    for (const auto& b : to) best = std::min(best, (a.y - b.y) * (a.y - b.y) + (a.x - b.x) * (a.x - b.x));
    out.push_back(std::sqrt(static_cast<double>(best)));
  }
}

}  // namespace

std::optional<double> hd95_all_pairs(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                                     std::size_t height, std::size_t width) {
  const auto bp = boundary_pixels(pred, height, width);
  const auto bg = boundary_pixels(gt, height, width);
  if (bp.empty() || bg.empty()) return std::nullopt;
  std::vector<double> d;
  nearest_all_pairs(bp, bg, d);
  nearest_all_pairs(bg, bp, d);
  std::sort(d.begin(), d.end());
  const double rank = 0.95 * static_cast<double>(d.size() - 1);
  const auto lo = static_cast<std::size_t>(rank);
  const std::size_t hi = std::min(lo + 1, d.size() - 1);
  return d[lo] + (d[hi] - d[lo]) * (rank - static_cast<double>(lo));
}

double dice_by_counting(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  long inter = 0, total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += (pred[i] != 0 && gt[i] != 0);
    total += (pred[i] != 0) + (gt[i] != 0);
  }
  return total == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

MetricSweep sweep_metrics(std::uint64_t seed, std::size_t pairs, std::size_t height, std::size_t width) {
  Rng rng = make_rng(seed, 0x4D);
  MetricSweep out;
  std::vector<std::uint8_t> a(height * width), b(height * width);
  for (std::size_t n = 0; n < pairs; ++n) {
    const double pa = uniform(rng, 0.05, 0.6), pb = uniform(rng, 0.05, 0.6);
    for (auto& v : a) v = coin(rng, pa);
    for (auto& v : b) v = coin(rng, pb);
    ++out.pairs;
    const auto fast = metrics::hd95(a, b, height, width);
    const auto slow = hd95_all_pairs(a, b, height, width);
    if (fast.has_value() != slow.has_value() || (fast && *fast != *slow)) ++out.hd95_mismatches;
    if (metrics::dice(a, b) != dice_by_counting(a, b)) ++out.dice_mismatches;
  }
  return out;
}

}  // namespace dualfete::oracles
