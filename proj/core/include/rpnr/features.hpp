#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rpnr/imaging.hpp"
#include "rpnr/training.hpp"

namespace rpnr {

/// Small AlexNet-style classifier. The designated feature layer is the last
/// convolutional map, spatially average-pooled; the classifier head reads
/// those pooled features.
struct ClassifierArch {
  int input_size = 64;  // native square resolution; inputs are resized to it
  int num_classes = 4;
  std::vector<int> widths{16, 32, 48, 48};

  int feature_dim() const { return widths.back(); }
};

class FeatureNetImpl : public torch::nn::Module {
 public:
  explicit FeatureNetImpl(const ClassifierArch& arch);

  /// Pooled last-conv features [N, D] of already-resized inputs.
  torch::Tensor features(const torch::Tensor& x);
  torch::Tensor classify(const torch::Tensor& features);

 private:
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(FeatureNet);

/// Same scene, same class, several lightings.
struct IlluminationGroup {
  std::string scene;
  int label = 0;
  std::vector<Image> images;
  std::vector<std::filesystem::path> paths;  // empty for in-memory groups
};

struct FineTuneLog {
  std::vector<double> classification;
  std::vector<double> consistency;
};

class FeatureExtractor {
 public:
  explicit FeatureExtractor(const ClassifierArch& arch = {});

  const ClassifierArch& architecture() const noexcept { return arch_; }
  int feature_dim() const noexcept { return arch_.feature_dim(); }
  bool trained() const noexcept { return trained_; }
  /// "pretrained" after classification-only training, "finetuned" after
  /// the consistency stage.
  const std::string& stage() const noexcept { return stage_; }
  double consistency_weight() const noexcept { return lambda_; }
  const FineTuneLog& log() const noexcept { return log_; }

  /// [N,3,H,W] in [0,1], any H, W → [N, D]; differentiable w.r.t. input.
  torch::Tensor features(const torch::Tensor& images) const;
  torch::Tensor logits(const torch::Tensor& images) const;

  std::vector<float> extract(const Image& image) const;
  int classify(const Image& image) const;

  void save(const std::filesystem::path& path) const;
  static FeatureExtractor load(const std::filesystem::path& path);

  FeatureNet& network() const noexcept { return net_; }

 private:
  friend FeatureExtractor pretrain_classifier(std::span<const IlluminationGroup>,
                                              const TrainConfig&, const ClassifierArch&);
  friend FeatureExtractor finetune_features(const FeatureExtractor&,
                                            std::span<const IlluminationGroup>, const TrainConfig&,
                                            double);
  FeatureExtractor clone() const;

  ClassifierArch arch_;
  mutable FeatureNet net_;
  bool trained_ = false;
  std::string stage_ = "untrained";
  double lambda_ = 0.0;
  std::uint64_t seed_ = 0;
  FineTuneLog log_;
};

inline constexpr double kDefaultConsistencyWeight = 1.0;

/// Mean over groups of the mean pairwise squared feature distance within
/// each group. `features` holds the groups back to back.
torch::Tensor consistency_loss(const torch::Tensor& features, std::span<const int> group_sizes);

struct FineTuneLoss {
  torch::Tensor classification;
  torch::Tensor consistency;
  torch::Tensor total;  // classification + lambda * consistency
};

FineTuneLoss finetune_loss(const FeatureExtractor& extractor,
                           std::span<const IlluminationGroup> groups, double lambda_c);

/// Classification-only training; stands in for an off-the-shelf pretrained
/// classifier when none is supplied.
FeatureExtractor pretrain_classifier(std::span<const IlluminationGroup> groups,
                                     const TrainConfig& config, const ClassifierArch& arch = {});

/// Multi-task fine-tuning: cross-entropy plus lambda_c times the
/// within-group feature distance. Returns a new extractor.
FeatureExtractor finetune_features(const FeatureExtractor& pretrained,
                                   std::span<const IlluminationGroup> groups,
                                   const TrainConfig& config,
                                   double lambda_c = kDefaultConsistencyWeight);

inline std::vector<float> extract_features(const FeatureExtractor& extractor, const Image& image) {
  return extractor.extract(image);
}

/// Squared Euclidean distance.
double feature_distance(std::span<const float> a, std::span<const float> b);

double mean_within_group_distance(const FeatureExtractor& extractor,
                                  std::span<const IlluminationGroup> groups);
double mean_between_group_distance(const FeatureExtractor& extractor,
                                   std::span<const IlluminationGroup> groups);
/// Fraction of images classified correctly.
double classification_accuracy(const FeatureExtractor& extractor,
                               std::span<const IlluminationGroup> groups);

/// Throws DatasetError for groups with fewer than two images or labels
/// outside [0, num_classes).
void validate_groups(std::span<const IlluminationGroup> groups, int num_classes);

// ---- multi-illumination corpus ----------------------------------------------

/// Layout: root/<class>/<scene>/<lighting>.png; classes sorted by name give
/// labels 0..K-1.
struct IlluminationDataset {
  std::vector<std::string> class_names;
  std::vector<IlluminationGroup> groups;
};

IlluminationDataset load_illumination_dataset(const std::filesystem::path& root);

/// Synthetic stand-in: each class has its own palette of Mondrian patches;
/// each scene is rendered under `lights_per_scene` random Lambertian lights.
struct IlluminationCorpusSpec {
  int num_classes = 4;
  int scenes_per_class = 24;
  int lights_per_scene = 4;
  int height = 64;
  int width = 64;
  std::uint64_t seed = 0;
};

IlluminationDataset make_illumination_corpus(const IlluminationCorpusSpec& spec);
void write_illumination_dataset(const std::filesystem::path& root, const IlluminationDataset& data);

}  // namespace rpnr
