#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rpnr/checkpoint.hpp"
#include "rpnr/imaging.hpp"
#include "rpnr/nn.hpp"
#include "rpnr/synth.hpp"
#include "rpnr/training.hpp"

namespace rpnr {

/// 4 input channels (normals, then shading), one per-pixel head and a
/// global head.
UNetSpec default_discriminator_arch();

/// `pixel_labels` is 1 where shading agrees with the normals. A sample is
/// real exactly when every pixel label is 1.
struct DiscTrainSample {
  NormalField normals;
  ShadingField shading;
  bool real = true;
  Mask pixel_labels;
};

DiscTrainSample make_real_sample(NormalField normals, ShadingField shading);

/// Fake sample from a distortion: pixel labels are 0 inside the distortion.
DiscTrainSample make_fake_sample(NormalField normals, const DistortionSample& distortion);

/// Alternating real / fake samples from random Lambertian scenes.
std::vector<DiscTrainSample> make_discriminator_corpus(std::size_t count, int height, int width,
                                                       std::uint64_t seed);

/// Dataset written by write_distortion_dataset: each record yields one real
/// (clean) and one fake (distorted) sample.
std::vector<DiscTrainSample> discriminator_samples(std::span<const DistortionRecord> records);

struct Box {
  int y0 = 0;
  int x0 = 0;
  int height = 0;
  int width = 0;
};

/// Pastes the box of `b` into `a` across normals, shading and pixel labels.
DiscTrainSample cutmix_with_box(const DiscTrainSample& a, const DiscTrainSample& b, const Box& box);

/// Box area drawn uniformly from [0, 1] of the frame, position uniform.
DiscTrainSample cutmix_augment(const DiscTrainSample& a, const DiscTrainSample& b,
                               std::uint64_t seed);

struct DiscriminatorLoss {
  torch::Tensor enc;    // mean over the batch of the global BCE
  torch::Tensor dec;    // per-sample sum of per-pixel BCE, averaged over the batch
  torch::Tensor total;  // enc + dec
};

/// `global_targets` is [N], `pixel_targets` [N,1,H,W]; both in {0,1}.
DiscriminatorLoss discriminator_loss(const UNetOutput& logits, const torch::Tensor& global_targets,
                                     const torch::Tensor& pixel_targets);

struct DiscriminatorScore {
  double global = 0.0;
  RealnessMap map;
};

struct DiscriminatorTrainLog {
  std::vector<double> enc;
  std::vector<double> dec;
};

struct DiscriminatorOptions {
  /// Zeroes the normal channels in training and scoring.
  bool shading_only = false;
  /// Probability that a training sample is replaced by a CutMix composite.
  double cutmix_probability = 0.0;
};

class DiscriminatorModel {
 public:
  explicit DiscriminatorModel(const UNetSpec& arch = default_discriminator_arch(),
                              const DiscriminatorOptions& options = {});

  bool trained() const noexcept { return trained_; }
  const UNetSpec& architecture() const noexcept { return arch_; }
  const DiscriminatorOptions& options() const noexcept { return options_; }
  const DiscriminatorTrainLog& log() const noexcept { return log_; }

  /// Raw logits for [N,3,H,W] normals and [N,1,H,W] shading.
  UNetOutput logits(const torch::Tensor& normals, const torch::Tensor& shading) const;

  /// Probability that the pair is consistent, [N]; differentiable.
  torch::Tensor global_probability(const torch::Tensor& normals,
                                   const torch::Tensor& shading) const;

  /// Throws UntrainedModelError before training.
  DiscriminatorScore score(const NormalField& normals, const ShadingField& shading) const;

  void save(const std::filesystem::path& path) const;
  static DiscriminatorModel load(const std::filesystem::path& path);

  UNet& network() const noexcept { return net_; }

 private:
  friend DiscriminatorModel train_discriminator(std::span<const DiscTrainSample>,
                                                const TrainConfig&, const DiscriminatorOptions&,
                                                const UNetSpec&);
  torch::Tensor input(const torch::Tensor& normals, const torch::Tensor& shading) const;

  UNetSpec arch_;
  DiscriminatorOptions options_;
  mutable UNet net_;
  bool trained_ = false;
  std::uint64_t seed_ = 0;
  DiscriminatorTrainLog log_;
};

/// Throws DatasetError when only one label is present or shapes differ.
DiscriminatorModel train_discriminator(std::span<const DiscTrainSample> samples,
                                       const TrainConfig& config,
                                       const DiscriminatorOptions& options = {},
                                       const UNetSpec& arch = default_discriminator_arch());

/// Loads config.dataset_dir (distortion layout), trains, and saves the
/// checkpoint when `checkpoint` is non-empty.
DiscriminatorModel train_discriminator(const TrainConfig& config,
                                       const std::filesystem::path& checkpoint = {},
                                       const DiscriminatorOptions& options = {},
                                       const UNetSpec& arch = default_discriminator_arch());

inline DiscriminatorScore score(const DiscriminatorModel& model, const NormalField& normals,
                                const ShadingField& shading) {
  return model.score(normals, shading);
}

struct DiscriminatorEvaluation {
  double auc = 0.0;
  double mean_iou = 0.0;  // over fake samples, map < 0.5 vs distortion region
  double mean_real_score = 0.0;
  double mean_fake_score = 0.0;
};

DiscriminatorEvaluation evaluate_discriminator(const DiscriminatorModel& model,
                                               std::span<const DiscTrainSample> samples);

}  // namespace rpnr
