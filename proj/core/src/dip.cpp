#include "rpnr/dip.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "rpnr/image_io.hpp"
#include "rpnr/random.hpp"
#include "strings.hpp"

namespace rpnr {

namespace {
using torch::indexing::Slice;
}

void DIPConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("DIP iterations must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("DIP learning rate must be positive");
  if (noise_channels < 1) throw std::invalid_argument("noise_channels must be >= 1");
  if (noise_batch < 1) throw std::invalid_argument("noise_batch must be >= 1");
  if (!(noise_perturb_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  if (!(weights.shading >= 0.0 && weights.normal >= 0.0 && weights.feature >= 0.0 &&
        tv_weight >= 0.0)) {
    throw std::invalid_argument("loss weights must be >= 0");
  }
  if (depth < 1 || base_width < 1 || max_width < 1) {
    throw std::invalid_argument("invalid DIP backbone size");
  }
}

UNetSpec DIPConfig::backbone() const {
  UNetSpec spec;
  spec.in_channels = noise_channels;
  spec.out_channels = 1;
  spec.depth = depth;
  spec.base_width = base_width;
  spec.max_width = max_width;
  spec.batch_norm = batch_norm;
  return spec;
}

PreparedState make_prepared_state(Image target, Image source_placed, Mask mask,
                                  AlbedoField albedo_object, AlbedoField albedo_target,
                                  ShadingField shading_target, NormalField normals_composite,
                                  const FeatureExtractor* features) {
  require_same_extent(target, source_placed, "prepared source");
  require_same_extent(target, mask, "prepared mask");
  require_same_extent(target, albedo_object, "prepared object albedo");
  require_same_extent(target, albedo_target, "prepared target albedo");
  require_same_extent(target, shading_target, "prepared target shading");
  require_same_extent(target, normals_composite, "prepared normals");
  check_binary(mask, "mask");

  PreparedState s;
  s.naive = cut_and_paste(source_placed, target, mask);
  s.albedo_composite = cut_and_paste(albedo_object, albedo_target, mask);
  s.shading_degraded =
      cut_and_paste(ShadingField(target.height(), target.width()), shading_target, mask);
  s.mask = std::move(mask);
  s.target = std::move(target);
  s.source_placed = std::move(source_placed);
  s.albedo_object = std::move(albedo_object);
  s.albedo_target = std::move(albedo_target);
  s.shading_target = std::move(shading_target);
  s.normals_composite = std::move(normals_composite);

  s.t_mask = to_tensor(s.mask);
  s.t_target = to_tensor(s.target);
  s.t_albedo_object = to_tensor(s.albedo_object);
  s.t_shading_target = to_tensor(s.shading_target);
  s.t_normals = to_tensor(s.normals_composite);
  if (features != nullptr) {
    torch::NoGradGuard no_grad;
    s.t_naive_features = features->features(to_tensor(s.naive)).detach();
  }
  return s;
}

PreparedState prepare_job(const ReshadeJob& job, const AuxiliaryModels& models) {
  if (models.decomposition == nullptr || models.normals == nullptr) {
    throw std::invalid_argument("reshade needs a decomposition model and a normal estimator");
  }
  require_same_extent(job.source, job.source_mask, "source mask");
  check_binary(job.source_mask, "source mask");
  const int h = job.target.height();
  const int w = job.target.width();
  Mask mask = place_mask(job.source_mask, job.placement, h, w);

  const auto source_parts = models.decomposition->decompose(job.source);
  const auto target_parts = models.decomposition->decompose(job.target);
  Image placed_source(place_field(job.source, job.placement, h, w));
  const AlbedoField placed_albedo(place_field(source_parts.albedo, job.placement, h, w));
  AlbedoField albedo_object = extract_object(placed_albedo, mask);

  const float facing[] = {0.0f, 0.0f, 1.0f};
  const NormalField source_normals(
      place_field(models.normals->estimate(job.source), job.placement, h, w, facing));
  const NormalField target_normals = models.normals->estimate(job.target);
  NormalField composite = composite_normals(source_normals, target_normals, mask);

  return make_prepared_state(job.target, std::move(placed_source), std::move(mask),
                             std::move(albedo_object), target_parts.albedo, target_parts.shading,
                             std::move(composite), models.features);
}

namespace {

void require_finite(const torch::Tensor& t, const char* name) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw LossError(detail::cat("non-finite ", name, " loss"));
  }
}

}  // namespace

torch::Tensor normal_loss(const torch::Tensor& logit) { return torch::softplus(-logit); }

LossTerms compute_losses(const PreparedState& state, const AuxiliaryModels& models,
                         const DIPConfig& config, const torch::Tensor& raw) {
  const auto opts = raw.options();
  const auto batch = raw.size(0);
  const auto m = state.t_mask.to(raw.dtype());
  const auto keep = 1.0 - m;
  const auto s_t = state.t_shading_target.to(raw.dtype());

  LossTerms t;
  t.shading = ((s_t - raw) * keep).pow(2).mean({1, 2, 3});
  const auto s_y = m * raw + keep * s_t;

  if (config.weights.normal > 0.0) {
    if (models.discriminator == nullptr) {
      throw std::invalid_argument("normal loss weight > 0 needs a discriminator");
    }
    const auto normals = state.t_normals.to(raw.dtype()).expand({batch, 3, -1, -1});
    const auto logits = models.discriminator->logits(normals, s_y);
    t.normal = config.pixel_normal_loss ? normal_loss(logits.map).mean({1, 2, 3})
                                        : normal_loss(logits.global);
  } else {
    t.normal = torch::zeros({batch}, opts);
  }

  if (config.weights.feature > 0.0) {
    if (models.features == nullptr || !state.t_naive_features.defined()) {
      throw std::invalid_argument("feature loss weight > 0 needs a feature extractor");
    }
    const auto y =
        m * (state.t_albedo_object.to(raw.dtype()) * raw) + keep * state.t_target.to(raw.dtype());
    const auto f = models.features->features(y);
    t.feature = (f - state.t_naive_features.to(raw.dtype())).pow(2).sum(1);
  } else {
    t.feature = torch::zeros({batch}, opts);
  }

  if (config.tv_weight > 0.0) {
    const auto dy =
        (raw.index({Slice(), Slice(), Slice(1)}) - raw.index({Slice(), Slice(), Slice(0, -1)}))
            .abs()
            .mean({1, 2, 3});
    const auto dx = (raw.index({Slice(), Slice(), Slice(), Slice(1)}) -
                     raw.index({Slice(), Slice(), Slice(), Slice(0, -1)}))
                        .abs()
                        .mean({1, 2, 3});
    t.tv = dy + dx;
  } else {
    t.tv = torch::zeros({batch}, opts);
  }

  require_finite(t.shading, "shading");
  require_finite(t.normal, "normal");
  require_finite(t.feature, "feature");
  require_finite(t.tv, "total-variation");
  t.total = config.weights.shading * t.shading + config.weights.normal * t.normal +
            config.weights.feature * t.feature + config.tv_weight * t.tv;
  return t;
}

namespace {

LossRecord record_of(const LossTerms& t, int iteration) {
  return {iteration, t.shading[0].item<double>(), t.normal[0].item<double>(),
          t.feature[0].item<double>(), t.total[0].item<double>()};
}

// Keeps gradients out of the frozen auxiliary networks for one scope.
class FreezeGuard {
 public:
  explicit FreezeGuard(const AuxiliaryModels& models) {
    if (models.discriminator) freeze(models.discriminator->network()->parameters());
    if (models.features) freeze(models.features->network()->parameters());
  }
  ~FreezeGuard() {
    for (auto& p : frozen_) p.requires_grad_(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  void freeze(std::vector<torch::Tensor> params) {
    for (auto& p : params) {
      if (p.requires_grad()) {
        p.requires_grad_(false);
        frozen_.push_back(p);
      }
    }
  }
  std::vector<torch::Tensor> frozen_;
};

}  // namespace

LossRecord evaluate_losses(const PreparedState& state, const AuxiliaryModels& models,
                           const DIPConfig& config, const ShadingField& s_star) {
  require_same_extent(state.target, s_star, "candidate shading");
  torch::NoGradGuard no_grad;
  return record_of(compute_losses(state, models, config, to_tensor(s_star)), 0);
}

OutputFields form_output(const PreparedState& state, const ShadingField& s_star) {
  require_same_extent(state.target, s_star, "generated shading");
  OutputFields out;
  out.output = cut_and_paste(form_image(state.albedo_object, s_star), state.target, state.mask);
  out.composite_albedo = state.albedo_composite;
  out.composite_shading = cut_and_paste(s_star, state.shading_target, state.mask);
  return out;
}

DIPGenerator::DIPGenerator(const DIPConfig& config, int height, int width)
    : config_(config), net_(nullptr) {
  config_.validate();
  seed_torch(config_.seed);
  net_ = UNet(config_.backbone());
  // Uniform noise scaled to 0.1, as in the original prior.
  z_ = torch::rand({1, config_.noise_channels, height, width}) * 0.1;
  perturb_ = at::make_generator<at::CPUGeneratorImpl>(derive_seed(config_.seed, 1));
}

torch::Tensor DIPGenerator::batch_input(int batch) {
  if (batch <= 1) return z_;
  const auto eps = torch::randn({batch - 1, z_.size(1), z_.size(2), z_.size(3)}, perturb_) *
                   config_.noise_perturb_sigma;
  return torch::cat({z_, z_ + eps}, 0);
}

torch::Tensor DIPGenerator::forward(const torch::Tensor& input) {
  return torch::sigmoid(net_->forward_padded(input).map);
}

namespace {

void check_models(const AuxiliaryModels& models, const PreparedState& state,
                  const DIPConfig& config) {
  if (config.weights.normal > 0.0 && models.discriminator == nullptr) {
    throw std::invalid_argument("normal loss weight > 0 needs a discriminator");
  }
  if (config.weights.feature > 0.0 &&
      (models.features == nullptr || !state.t_naive_features.defined())) {
    throw std::invalid_argument("feature loss weight > 0 needs a feature extractor");
  }
}

}  // namespace

ReshadeResult run_reshade(const PreparedState& state, const AuxiliaryModels& models,
                          const DIPConfig& config, const IterationObserver& observer) {
  config.validate();
  check_models(models, state, config);
  FreezeGuard freeze(models);
  const auto start = std::chrono::steady_clock::now();

  DIPGenerator gen(config, state.height(), state.width());
  torch::optim::Adam optimizer(gen.network()->parameters(),
                               torch::optim::AdamOptions(config.learning_rate));
  ReshadeResult result;
  result.loss_history.reserve(config.iterations);
  double best = std::numeric_limits<double>::infinity();
  torch::Tensor best_raw;
  for (int it = 0; it < config.iterations; ++it) {
    const auto raw = gen.forward(gen.batch_input(config.noise_batch));
    const auto terms = compute_losses(state, models, config, raw);
    const auto rec = record_of(terms, it);
    result.loss_history.push_back(rec);
    if (rec.total < best) {
      best = rec.total;
      best_raw = raw[0].detach().clone();
      result.best_iteration = it;
    }
    if (observer) observer(rec, ShadingField(from_tensor(raw[0].detach())));
    optimizer.zero_grad();
    terms.total.mean().backward();
    optimizer.step();
  }

  result.generated_shading = ShadingField(from_tensor(best_raw));
  auto out = form_output(state, result.generated_shading);
  result.output = std::move(out.output);
  result.composite_albedo = std::move(out.composite_albedo);
  result.composite_shading = std::move(out.composite_shading);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

ReshadeResult run_reshade(const ReshadeJob& job, const AuxiliaryModels& models,
                          const DIPConfig& config, const IterationObserver& observer) {
  return run_reshade(prepare_job(job, models), models, config, observer);
}

void write_reshade_outputs(const std::filesystem::path& dir, const ReshadeResult& result) {
  std::filesystem::create_directories(dir);
  save_image(dir / "Y.png", result.output);
  save_shading16(dir / "S_star.png16", result.generated_shading);
  save_albedo(dir / "albedo_y.png", result.composite_albedo);
  save_shading16(dir / "shading_y.png16", result.composite_shading);
  std::ofstream csv(dir / "losses.csv");
  csv << "iteration,L_s,L_n,L_f,total\n" << std::setprecision(10);
  for (const auto& r : result.loss_history) {
    csv << r.iteration << ',' << r.shading << ',' << r.normal << ',' << r.feature << ',' << r.total
        << '\n';
  }
  if (!csv) throw IoError(detail::cat("cannot write ", (dir / "losses.csv").string()));
}

std::vector<BatchBenchmarkRow> benchmark_batched_noise(const PreparedState& state,
                                                       const AuxiliaryModels& models,
                                                       DIPConfig config,
                                                       const std::vector<int>& batch_values,
                                                       double seconds_per_row) {
  check_models(models, state, config);
  FreezeGuard freeze(models);
  std::vector<BatchBenchmarkRow> rows;
  for (int b : batch_values) {
    config.noise_batch = b;
    config.validate();
    DIPGenerator gen(config, state.height(), state.width());
    torch::optim::Adam optimizer(gen.network()->parameters(),
                                 torch::optim::AdamOptions(config.learning_rate));
    BatchBenchmarkRow row;
    row.batch = b;
    row.best_loss = std::numeric_limits<double>::infinity();
    const auto start = std::chrono::steady_clock::now();
    for (;;) {
      const auto raw = gen.forward(gen.batch_input(b));
      const auto terms = compute_losses(state, models, config, raw);
      const double total = terms.total[0].item<double>();
      if (row.iterations == 0) row.initial_loss = total;
      row.best_loss = std::min(row.best_loss, total);
      optimizer.zero_grad();
      terms.total.mean().backward();
      optimizer.step();
      ++row.iterations;
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      row.progress.emplace_back(row.seconds, row.best_loss);
      if (row.seconds >= seconds_per_row || row.iterations >= config.iterations) break;
    }
    row.iterations_per_second = row.iterations / row.seconds;
    row.loss_decrease_per_second = (row.initial_loss - row.best_loss) / row.seconds;
    rows.push_back(row);
  }
  return rows;
}

double seconds_to_reach(const BatchBenchmarkRow& row, double level) {
  for (const auto& [seconds, best] : row.progress) {
    if (best <= level) return seconds;
  }
  return std::numeric_limits<double>::infinity();
}

double relative_progress_rate(const BatchBenchmarkRow& row, const BatchBenchmarkRow& baseline) {
  const double level = std::max(row.best_loss, baseline.best_loss);
  const double rate = (row.initial_loss - level) / seconds_to_reach(row, level);
  const double base = (baseline.initial_loss - level) / seconds_to_reach(baseline, level);
  return rate / base;
}

}  // namespace rpnr
