#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpnr/decomposition.hpp"
#include "rpnr/discriminator.hpp"
#include "rpnr/features.hpp"
#include "rpnr/imaging.hpp"
#include "rpnr/nn.hpp"
#include "rpnr/normals.hpp"

namespace rpnr {

struct LossWeights {
  double shading = 1.0;
  double normal = 1.0;
  double feature = 1.0;
};

struct DIPConfig {
  int iterations = 3000;
  double learning_rate = 1e-2;
  int noise_channels = 32;
  int noise_batch = 1;
  double noise_perturb_sigma = 1.0 / 30.0;
  std::uint64_t seed = 0;
  LossWeights weights;
  /// Optional total-variation penalty on the raw output; 0 disables it.
  double tv_weight = 0.0;
  /// Use the mean per-pixel realness map instead of the global score in L_n.
  bool pixel_normal_loss = false;
  int depth = 5;
  int base_width = 16;
  int max_width = 64;
  bool batch_norm = true;

  void validate() const;
  UNetSpec backbone() const;
};

struct ReshadeJob {
  Image source;
  Mask source_mask;
  Image target;
  Placement placement;
};

/// Frozen models consumed by the optimisation. Decomposition and normals are
/// always needed; the discriminator and feature net only when their loss
/// weight is positive.
struct AuxiliaryModels {
  const DecompositionModel* decomposition = nullptr;
  const NormalEstimator* normals = nullptr;
  const DiscriminatorModel* discriminator = nullptr;
  const FeatureExtractor* features = nullptr;
};

/// Everything computed once per job. Fields are in the target frame.
struct PreparedState {
  Mask mask;                      // M, placed
  Image target;                   // T
  Image source_placed;            // S moved into the target frame
  Image naive;                    // C = CP(source_placed, T, M)
  AlbedoField albedo_object;      // ρ_o = M ⊙ placed ρ_S
  AlbedoField albedo_target;      // ρ_T
  AlbedoField albedo_composite;   // ρ_y = CP(ρ_o, ρ_T, M)
  ShadingField shading_target;    // S_T
  ShadingField shading_degraded;  // S_x = (1 − M) ⊙ S_T
  NormalField normals_composite;  // N_y = CP(N_s, N_t, M)

  torch::Tensor t_mask;            // [1,1,H,W]
  torch::Tensor t_target;          // [1,3,H,W]
  torch::Tensor t_albedo_object;   // [1,3,H,W]
  torch::Tensor t_shading_target;  // [1,1,H,W]
  torch::Tensor t_normals;         // [1,3,H,W]
  torch::Tensor t_naive_features;  // [1,D] or undefined

  int height() const { return target.height(); }
  int width() const { return target.width(); }
};

/// Builds the cached tensors from already-computed fields.
PreparedState make_prepared_state(Image target, Image source_placed, Mask mask,
                                  AlbedoField albedo_object, AlbedoField albedo_target,
                                  ShadingField shading_target, NormalField normals_composite,
                                  const FeatureExtractor* features = nullptr);

/// Places the mask, decomposes source and target separately, estimates
/// normals for both and pastes the source normals unchanged.
PreparedState prepare_job(const ReshadeJob& job, const AuxiliaryModels& models);

/// Raised when a loss turns NaN or infinite.
class LossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// −log σ(logit), i.e. −log of the realness probability, evaluated as
/// softplus(−logit): finite for any logit and its gradient never vanishes
/// when the discriminator is confident the shading is fake.
torch::Tensor normal_loss(const torch::Tensor& logit);

/// Per batch element, each [B].
struct LossTerms {
  torch::Tensor shading;
  torch::Tensor normal;
  torch::Tensor feature;
  torch::Tensor tv;
  torch::Tensor total;
};

/// `raw` is the network output [B,1,H,W] in [0,1]. L_s acts on the raw
/// full-frame output outside M (mean over pixels); L_n and L_f act on the
/// composites S_y = CP(raw, S_T, M) and Y = CP(ρ_o ⊙ raw, T, M).
LossTerms compute_losses(const PreparedState& state, const AuxiliaryModels& models,
                         const DIPConfig& config, const torch::Tensor& raw);

struct LossRecord {
  int iteration = 0;
  double shading = 0.0;
  double normal = 0.0;
  double feature = 0.0;
  double total = 0.0;
};

/// Scalar losses of a single candidate S*.
LossRecord evaluate_losses(const PreparedState& state, const AuxiliaryModels& models,
                           const DIPConfig& config, const ShadingField& s_star);

struct OutputFields {
  Image output;                    // Y
  AlbedoField composite_albedo;    // ρ_y
  ShadingField composite_shading;  // S_y
};

/// Y = CP(ρ_o ⊙ S*, T, M); outside M it copies T exactly.
OutputFields form_output(const PreparedState& state, const ShadingField& s_star);

/// The per-job optimisation network and its fixed noise.
class DIPGenerator {
 public:
  DIPGenerator(const DIPConfig& config, int height, int width);

  /// Fixed noise z, [1, noise_channels, H, W].
  const torch::Tensor& noise() const { return z_; }
  /// Batch of B inputs: copy 0 is z, copies 1..B-1 are z + ε with fresh ε.
  torch::Tensor batch_input(int batch);
  /// [B,1,H,W] in [0,1].
  torch::Tensor forward(const torch::Tensor& input);
  UNet& network() { return net_; }

 private:
  DIPConfig config_;
  UNet net_;
  torch::Tensor z_;
  at::Generator perturb_;
};

struct ReshadeResult {
  Image output;
  ShadingField generated_shading;
  AlbedoField composite_albedo;
  ShadingField composite_shading;
  std::vector<LossRecord> loss_history;
  int best_iteration = 0;
  double seconds = 0.0;
};

/// Called after every iteration with the unperturbed candidate S*.
using IterationObserver = std::function<void(const LossRecord&, const ShadingField& s_star)>;

ReshadeResult run_reshade(const PreparedState& state, const AuxiliaryModels& models,
                          const DIPConfig& config, const IterationObserver& observer = {});

ReshadeResult run_reshade(const ReshadeJob& job, const AuxiliaryModels& models,
                          const DIPConfig& config, const IterationObserver& observer = {});

/// Y.png, S_star.png16, albedo_y.png, shading_y.png16 and losses.csv.
void write_reshade_outputs(const std::filesystem::path& dir, const ReshadeResult& result);

struct BatchBenchmarkRow {
  int batch = 1;
  int iterations = 0;
  double seconds = 0.0;
  double iterations_per_second = 0.0;
  double initial_loss = 0.0;
  double best_loss = 0.0;
  /// (initial − best) / seconds.
  double loss_decrease_per_second = 0.0;
  /// (elapsed seconds, best loss so far) after every iteration.
  std::vector<std::pair<double, double>> progress;
};

/// Seconds until the row's best loss first reached `level`; infinity if it never did.
double seconds_to_reach(const BatchBenchmarkRow& row, double level);

/// Loss-decrease rate of `row` relative to `baseline`, both measured down to
/// the worse of their best losses: each rate is (initial − level) / seconds_to_reach(level).
double relative_progress_rate(const BatchBenchmarkRow& row, const BatchBenchmarkRow& baseline);

/// Runs the same job for a fixed wall-clock budget per batch size.
std::vector<BatchBenchmarkRow> benchmark_batched_noise(const PreparedState& state,
                                                       const AuxiliaryModels& models,
                                                       DIPConfig config,
                                                       const std::vector<int>& batch_values,
                                                       double seconds_per_row);

}  // namespace rpnr
