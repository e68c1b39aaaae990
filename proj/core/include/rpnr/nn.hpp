#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <vector>

#include "rpnr/imaging.hpp"

namespace rpnr {

/// Encoder-decoder with a skip connection at every level. Level i runs at
/// 1/2^i resolution with min(base_width * 2^i, max_width) channels; the
/// bottleneck sits at 1/2^depth. An optional global head pools the
/// bottleneck into one logit per sample.
struct UNetSpec {
  int in_channels = 3;
  int out_channels = 1;
  int depth = 4;
  int base_width = 8;
  int max_width = 64;
  bool global_head = false;
  bool batch_norm = false;  // BatchNorm after every convolution

  int width_at(int level) const;
  int divisor() const { return 1 << depth; }
  friend bool operator==(const UNetSpec&, const UNetSpec&) = default;
};

struct UNetOutput {
  torch::Tensor map;     // [N, out_channels, H, W] logits
  torch::Tensor global;  // [N] logits; undefined without a global head
};

class UNetImpl : public torch::nn::Module {
 public:
  explicit UNetImpl(const UNetSpec& spec);

  /// Input spatial size must be divisible by spec().divisor(); see
  /// forward_padded for arbitrary sizes.
  UNetOutput forward(const torch::Tensor& x);

  /// Replicate-pads to the next multiple of the divisor and crops back.
  UNetOutput forward_padded(const torch::Tensor& x);

  const UNetSpec& spec() const { return spec_; }

 private:
  UNetSpec spec_;
  torch::nn::ModuleList encoders_;
  torch::nn::ModuleList downs_;
  torch::nn::ModuleList decoders_;
  torch::nn::Sequential bottleneck_{nullptr};
  torch::nn::Conv2d head_{nullptr};
  torch::nn::Linear global_{nullptr};
};
TORCH_MODULE(UNet);

/// [1, C, H, W] float tensor holding a copy of the raster.
torch::Tensor to_tensor(const Raster& raster);

/// Stacks same-shape rasters into [N, C, H, W].
torch::Tensor to_batch(std::span<const Raster* const> rasters);

/// Copies a [C, H, W] or [1, C, H, W] tensor into a raster.
Raster from_tensor(const torch::Tensor& tensor);

/// Mean squared error between two rasters of equal shape.
double mse(const Raster& a, const Raster& b);

/// Deterministic permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

/// Pins libtorch to one intra-op thread and seeds its global generator, so
/// that training and optimisation runs are bit-reproducible.
void seed_torch(std::uint64_t seed);

}  // namespace rpnr
