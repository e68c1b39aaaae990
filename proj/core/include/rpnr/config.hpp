#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>

#include "rpnr/dip.hpp"
#include "rpnr/imaging.hpp"
#include "rpnr/training.hpp"

namespace rpnr {

/// Malformed or unknown configuration keys.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointPaths {
  std::filesystem::path decomposition;
  std::filesystem::path discriminator;
  std::filesystem::path features;
  std::filesystem::path features_pretrained;
  std::filesystem::path normals;
};

struct NormalsSection {
  std::string backend = "pretrained";
  double relief = 8.0;  // synthetic backend only
};

inline TrainConfig train_config(int epochs, int batch_size, double learning_rate) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = batch_size;
  c.learning_rate = learning_rate;
  return c;
}

struct DecompositionSection {
  TrainConfig train = train_config(20, 16, 2e-3);
  int samples = 2000;  // synthesized when train.dataset_dir is empty
};

struct DiscriminatorSection {
  TrainConfig train = train_config(20, 16, 2e-3);
  int samples = 1000;
  bool shading_only = false;
  double cutmix_probability = 0.0;
  /// Photos whose decomposed shading replaces the synthetic Lambertian scenes.
  std::filesystem::path landscape_dir;
};

struct FeaturesSection {
  TrainConfig pretrain = train_config(10, 16, 2e-3);
  TrainConfig train = train_config(20, 8, 2e-3);
  double consistency_weight = 1.0;
  int classes = 4;
  int scenes_per_class = 24;
  int lights_per_scene = 4;
};

/// Source, mask and target PNGs; all empty selects the bundled demo job.
struct JobSection {
  std::filesystem::path source;
  std::filesystem::path mask;
  std::filesystem::path target;
  Placement placement;

  bool bundled() const { return source.empty() && mask.empty() && target.empty(); }
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  int image_size = 64;
  CheckpointPaths checkpoints;
  NormalsSection normals;
  DecompositionSection decomposition;
  DiscriminatorSection discriminator;
  FeaturesSection features;
  DIPConfig dip;
  JobSection job;

  void validate() const;
};

/// Per-stage seeds, all derived from the global seed.
enum class SeedStream : std::uint64_t {
  decomposition_data = 1,
  decomposition_train,
  discriminator_data,
  discriminator_train,
  features_data,
  features_pretrain,
  features_train,
  dip,
};
std::uint64_t stage_seed(const PipelineConfig& config, SeedStream stream);

/// Unknown keys anywhere raise ConfigError.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& config);

PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const PipelineConfig& config);

/// RESHADE_CACHE_DIR if set, otherwise $HOME/.cache/rpnr (or ./.rpnr-cache).
std::filesystem::path cache_dir();

/// Fills empty checkpoint paths with their cache locations.
CheckpointPaths resolve_checkpoints(const CheckpointPaths& paths);

}  // namespace rpnr
