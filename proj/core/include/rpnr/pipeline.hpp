#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpnr/config.hpp"
#include "rpnr/decomposition.hpp"
#include "rpnr/dip.hpp"
#include "rpnr/discriminator.hpp"
#include "rpnr/features.hpp"
#include "rpnr/normals.hpp"

namespace rpnr {

/// Failure inside one pipeline stage; `stage()` names it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message);
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Sphere object (warm albedo, light from the upper left) pasted into a
/// flat scene lit from the right.
ReshadeJob bundled_demo_job(int size = 64);

/// Reads the job PNGs, or returns the bundled demo when none are given.
ReshadeJob load_job(const JobSection& job, int demo_size = 64);

// ---- per-stage training, as used by the CLI ---------------------------------

DecompositionModel train_decomposition_stage(const PipelineConfig& config);

/// Uses landscape photos when configured (needs decomposition and normals),
/// otherwise the distortion dataset in train.dataset_dir, otherwise a
/// synthetic corpus.
DiscriminatorModel train_discriminator_stage(const PipelineConfig& config,
                                             const DecompositionModel* decomposition = nullptr,
                                             const NormalEstimator* normals = nullptr);

/// Classification pretraining (or the checkpoint at `pretrained`, if it
/// exists) followed by consistency fine-tuning. The pretrained classifier is
/// saved to `pretrained` when it had to be trained.
FeatureExtractor finetune_features_stage(const PipelineConfig& config,
                                         const std::filesystem::path& pretrained = {});

std::unique_ptr<NormalEstimator> make_configured_estimator(const PipelineConfig& config);

struct ModelBundle {
  std::optional<DecompositionModel> decomposition;
  std::optional<DiscriminatorModel> discriminator;
  std::optional<FeatureExtractor> features;
  std::unique_ptr<NormalEstimator> normals;
  CheckpointPaths paths;
  std::map<std::string, double> training_seconds;  // stages trained in this call

  AuxiliaryModels view() const;
};

/// Loads every checkpoint; with `train_missing`, trains absent ones in
/// dependency order (decomposition, discriminator data, discriminator;
/// features independently) and saves them.
ModelBundle load_models(const PipelineConfig& config, bool train_missing);

struct InvariantCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct RunOptions {
  std::filesystem::path out_dir;
  bool train_missing = false;
  IterationObserver observer;
};

struct EndToEndResult {
  ReshadeResult reshade;
  PreparedState state;
  std::vector<InvariantCheck> checks;
  std::map<std::string, double> stage_seconds;
  std::filesystem::path report;
  std::filesystem::path manifest;

  bool all_checks_passed() const;
};

/// Loads or trains models, runs the job, writes outputs, a markdown report
/// and a manifest into options.out_dir.
EndToEndResult run_end_to_end(const PipelineConfig& config, const RunOptions& options);

/// Same outputs for an already-loaded model bundle.
EndToEndResult run_with_models(const PipelineConfig& config, const ModelBundle& models,
                               const RunOptions& options);

inline constexpr double kAlbedoInvarianceTolerance = 0.05;

/// MSE of decompose(Y) albedo against ρ_o over the masked pixels.
double albedo_invariance_mse(const DecompositionModel& model, const PreparedState& state,
                             const Image& output);

// ---- manifests --------------------------------------------------------------

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

nlohmann::json make_manifest(const PipelineConfig& config, const CheckpointPaths& paths,
                             const EndToEndResult& result, const std::filesystem::path& out_dir);

/// Config stored in a manifest, with checkpoints pinned to the recorded
/// paths. Throws StageError if a recorded checkpoint digest no longer matches.
PipelineConfig config_from_manifest(const std::filesystem::path& manifest);

// ---- validation -------------------------------------------------------------

struct ArtifactCheck {
  std::string name;
  std::filesystem::path path;
  std::string status;  // "ok", "missing", "corrupt", "failed"
  std::string detail;
};

struct ValidationReport {
  std::vector<ArtifactCheck> checks;

  bool ok() const;
  std::string to_text() const;
};

/// Checks the four checkpoints and any configured dataset directory,
/// continuing past failures.
ValidationReport validate_artifacts(const PipelineConfig& config);

}  // namespace rpnr
