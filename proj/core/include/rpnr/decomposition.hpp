#pragma once

#include <filesystem>
#include <span>

#include "rpnr/checkpoint.hpp"
#include "rpnr/imaging.hpp"
#include "rpnr/nn.hpp"
#include "rpnr/synth.hpp"
#include "rpnr/training.hpp"

namespace rpnr {

/// Albedo-shading network: 3 image channels in, 3 albedo + 1 shading
/// channels out, each squashed into [0,1] by a logistic activation.
UNetSpec default_decomposition_arch();

struct Decomposition {
  AlbedoField albedo;
  ShadingField shading;
};

struct DecompositionLoss {
  torch::Tensor albedo;
  torch::Tensor shading;
  torch::Tensor reconstruction;
  torch::Tensor total;
};

/// Equal-weight sum of albedo MSE, shading MSE and the MSE of ρ̂⊙Ŝ against
/// the input image. `prediction` is the activated [N,4,H,W] output.
DecompositionLoss decomposition_loss(const torch::Tensor& prediction, const torch::Tensor& images,
                                     const torch::Tensor& albedo, const torch::Tensor& shading);

class DecompositionModel {
 public:
  explicit DecompositionModel(const UNetSpec& arch = default_decomposition_arch());

  bool trained() const noexcept { return trained_; }
  const UNetSpec& architecture() const noexcept { return arch_; }
  const TrainingLog& log() const noexcept { return log_; }
  std::uint64_t seed() const noexcept { return seed_; }
  int epochs() const noexcept { return static_cast<int>(log_.train_loss.size()); }

  /// [N,3,H,W] images to [N,4,H,W] fields in [0,1]; any H, W.
  torch::Tensor forward(const torch::Tensor& images) const;

  /// Throws UntrainedModelError before training.
  Decomposition decompose(const Image& image) const;

  void save(const std::filesystem::path& path) const;
  static DecompositionModel load(const std::filesystem::path& path);

  UNet& network() noexcept { return net_; }

 private:
  friend DecompositionModel train_decomposition(std::span<const DecompositionSample>,
                                                const TrainConfig&, const UNetSpec&);
  UNetSpec arch_;
  mutable UNet net_;
  bool trained_ = false;
  std::uint64_t seed_ = 0;
  TrainingLog log_;
};

/// Trains on in-memory samples; throws DatasetError if there are fewer
/// than two or their shapes differ.
DecompositionModel train_decomposition(std::span<const DecompositionSample> samples,
                                       const TrainConfig& config,
                                       const UNetSpec& arch = default_decomposition_arch());

/// Loads config.dataset_dir (decomposition layout), trains, and persists
/// the checkpoint when `checkpoint` is non-empty.
DecompositionModel train_decomposition(const TrainConfig& config,
                                       const std::filesystem::path& checkpoint = {},
                                       const UNetSpec& arch = default_decomposition_arch());

inline Decomposition decompose(const DecompositionModel& model, const Image& image) {
  return model.decompose(image);
}

/// Mean of ‖ρ̂⊙Ŝ − I‖² per pixel and channel over the samples.
double reconstruction_mse(const DecompositionModel& model,
                          std::span<const DecompositionSample> samples);

}  // namespace rpnr
