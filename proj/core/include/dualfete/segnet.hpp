#pragma once

#include <cstdint>
#include <filesystem>

#include "dualfete/params.hpp"
#include "dualfete/tensor.hpp"

namespace dualfete::segnet {

using autograd::ModelParams;
using autograd::Tensor;

struct NetConfig {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t base_channels = 4;
  std::size_t depth = 2;
  std::size_t num_classes = 2;
  double dropout_rate = 0.0;

  // Throws ContractViolation on H/W not divisible by 2^depth, C < 2, bad rate.
  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

// Encoder-decoder with skip concatenation:
//   enc0: 3x3 conv (1 -> b), relu                       at H
//   down{i}: 3x3 stride-2 conv (b*2^(i-1) -> b*2^i), relu, i = 1..depth
//   bottleneck: 3x3 conv, relu, dropout
//   up{i}: nearest 2x upsample, concat skip, 3x3 conv, relu, i = depth-1..0
//   head: 1x1 conv (b -> C), channel softmax
ModelParams build(const NetConfig& config, std::uint64_t seed);

// Closed-form parameter count of the architecture above.
std::size_t parameter_count(const NetConfig& config);

// images: (B, 1, H, W) -> probabilities (B, C, H, W). Dropout at the
// bottleneck is active only when dropout_on and config.dropout_rate > 0.
Tensor forward(const ModelParams& params, const NetConfig& config, const Tensor& images, bool dropout_on = false,
               std::uint64_t seed = 0);

// Recovers base_channels / depth / num_classes from tensor shapes; height and
// width are supplied by the caller.
NetConfig infer_config(const ModelParams& params, std::size_t height, std::size_t width);

// DFTE checkpoint: "DFTE", u32 version = 1, u32 tensor count, then per tensor
// u16 name length, UTF-8 name, u8 rank, u32 dims[rank], little-endian f64 data.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace dualfete::segnet
