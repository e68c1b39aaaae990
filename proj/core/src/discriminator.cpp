#include "rpnr/discriminator.hpp"

#include <algorithm>
#include <cmath>

#include "checkpoint_io.hpp"
#include "rpnr/metrics.hpp"
#include "rpnr/random.hpp"
#include "strings.hpp"

namespace rpnr {

namespace {
constexpr const char* kKind = "discriminator";
using torch::indexing::Slice;
}  // namespace

UNetSpec default_discriminator_arch() {
  UNetSpec spec;
  spec.in_channels = 4;
  spec.out_channels = 1;
  spec.depth = 4;
  spec.base_width = 16;
  spec.max_width = 64;
  spec.global_head = true;
  spec.batch_norm = true;
  return spec;
}

DiscTrainSample make_real_sample(NormalField normals, ShadingField shading) {
  require_same_extent(normals, shading, "real discriminator sample");
  Mask labels(shading.height(), shading.width(), 1.0f);
  return {std::move(normals), std::move(shading), true, std::move(labels)};
}

DiscTrainSample make_fake_sample(NormalField normals, const DistortionSample& distortion) {
  require_same_extent(normals, distortion.distorted, "fake discriminator sample");
  Mask labels = invert(distortion.distortion_mask);
  const bool real = mask_area(labels) == labels.plane_size();
  return {std::move(normals), distortion.distorted, real, std::move(labels)};
}

std::vector<DiscTrainSample> make_discriminator_corpus(std::size_t count, int height, int width,
                                                       std::uint64_t seed) {
  std::vector<DiscTrainSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto scene = random_lit_scene(height, width, derive_seed(seed, 2 * i));
    if (i % 2 == 0) {
      out.push_back(make_real_sample(std::move(scene.normals), std::move(scene.shading)));
    } else {
      const auto d = distort_shading(scene.shading, derive_seed(seed, 2 * i + 1));
      out.push_back(make_fake_sample(std::move(scene.normals), d));
    }
  }
  return out;
}

std::vector<DiscTrainSample> discriminator_samples(std::span<const DistortionRecord> records) {
  std::vector<DiscTrainSample> out;
  out.reserve(2 * records.size());
  for (const auto& r : records) {
    out.push_back(make_real_sample(r.normals, r.sample.clean));
    out.push_back(make_fake_sample(r.normals, r.sample));
  }
  return out;
}

DiscTrainSample cutmix_with_box(const DiscTrainSample& a, const DiscTrainSample& b,
                                const Box& box) {
  require_same_extent(a.shading, b.shading, "cutmix_augment");
  require_same_extent(a.normals, b.normals, "cutmix_augment");
  Mask region(a.shading.height(), a.shading.width());
  for (int y = std::max(box.y0, 0); y < std::min(box.y0 + box.height, region.height()); ++y) {
    for (int x = std::max(box.x0, 0); x < std::min(box.x0 + box.width, region.width()); ++x) {
      region(y, x) = 1.0f;
    }
  }
  DiscTrainSample out;
  out.normals = cut_and_paste(b.normals, a.normals, region);
  out.shading = cut_and_paste(b.shading, a.shading, region);
  out.pixel_labels = cut_and_paste(b.pixel_labels, a.pixel_labels, region);
  out.real = mask_area(out.pixel_labels) == out.pixel_labels.plane_size();
  return out;
}

DiscTrainSample cutmix_augment(const DiscTrainSample& a, const DiscTrainSample& b,
                               std::uint64_t seed) {
  Rng rng(seed);
  const int h = a.shading.height();
  const int w = a.shading.width();
  const double side = std::sqrt(rng.uniform());
  Box box;
  box.height = static_cast<int>(std::lround(side * h));
  box.width = static_cast<int>(std::lround(side * w));
  box.y0 = rng.uniform_int(0, h - box.height);
  box.x0 = rng.uniform_int(0, w - box.width);
  return cutmix_with_box(a, b, box);
}

DiscriminatorLoss discriminator_loss(const UNetOutput& logits, const torch::Tensor& global_targets,
                                     const torch::Tensor& pixel_targets) {
  DiscriminatorLoss loss;
  loss.enc = torch::binary_cross_entropy_with_logits(logits.global, global_targets);
  const auto per_pixel = torch::binary_cross_entropy_with_logits(logits.map, pixel_targets, {}, {},
                                                                 torch::Reduction::None);
  loss.dec = per_pixel.sum({1, 2, 3}).mean();
  loss.total = loss.enc + loss.dec;
  return loss;
}

DiscriminatorModel::DiscriminatorModel(const UNetSpec& arch, const DiscriminatorOptions& options)
    : arch_(arch), options_(options), net_(arch) {
  if (arch.in_channels != 4 || arch.out_channels != 1 || !arch.global_head) {
    throw std::invalid_argument("discriminator needs 4 inputs, 1 map output and a global head");
  }
  if (!(options.cutmix_probability >= 0.0 && options.cutmix_probability <= 1.0)) {
    throw std::invalid_argument("cutmix probability must lie in [0,1]");
  }
}

torch::Tensor DiscriminatorModel::input(const torch::Tensor& normals,
                                        const torch::Tensor& shading) const {
  const auto n = options_.shading_only ? torch::zeros_like(normals) : normals;
  return torch::cat({n, shading}, 1);
}

UNetOutput DiscriminatorModel::logits(const torch::Tensor& normals,
                                      const torch::Tensor& shading) const {
  return net_->forward_padded(input(normals, shading));
}

torch::Tensor DiscriminatorModel::global_probability(const torch::Tensor& normals,
                                                     const torch::Tensor& shading) const {
  return torch::sigmoid(logits(normals, shading).global);
}

DiscriminatorScore DiscriminatorModel::score(const NormalField& normals,
                                             const ShadingField& shading) const {
  if (!trained_) throw UntrainedModelError("discriminator has not been trained");
  require_same_extent(normals, shading, "discriminator score");
  torch::NoGradGuard no_grad;
  const auto out = logits(to_tensor(normals), to_tensor(shading));
  DiscriminatorScore s;
  s.global = torch::sigmoid(out.global)[0].item<double>();
  s.map = RealnessMap(from_tensor(torch::sigmoid(out.map)[0]));
  return s;
}

void DiscriminatorModel::save(const std::filesystem::path& path) const {
  nlohmann::json meta;
  meta["architecture"] = detail::to_json(arch_);
  meta["shading_only"] = options_.shading_only;
  meta["cutmix_probability"] = options_.cutmix_probability;
  meta["trained"] = trained_;
  meta["seed"] = seed_;
  meta["log"] = {{"enc", log_.enc}, {"dec", log_.dec}};
  detail::save_checkpoint(path, kKind, net_.ptr(), std::move(meta));
}

DiscriminatorModel DiscriminatorModel::load(const std::filesystem::path& path) {
  const auto meta = detail::read_sidecar(path, kKind);
  try {
    DiscriminatorOptions options;
    options.shading_only = meta.at("shading_only").get<bool>();
    options.cutmix_probability = meta.at("cutmix_probability").get<double>();
    DiscriminatorModel model(detail::unet_spec_from_json(meta.at("architecture")), options);
    detail::load_parameters(path, model.net_.ptr());
    model.trained_ = meta.at("trained").get<bool>();
    model.seed_ = meta.at("seed").get<std::uint64_t>();
    model.log_.enc = meta.at("log").at("enc").get<std::vector<double>>();
    model.log_.dec = meta.at("log").at("dec").get<std::vector<double>>();
    model.net_->eval();
    return model;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(
        detail::cat("bad discriminator sidecar for ", path.string(), ": ", e.what()));
  }
}

namespace {

struct Batch {
  torch::Tensor normals, shading, global, pixels;
};

Batch stack(std::span<const DiscTrainSample> samples) {
  std::vector<const Raster*> normals, shading, pixels;
  std::vector<float> global;
  for (const auto& s : samples) {
    normals.push_back(&s.normals);
    shading.push_back(&s.shading);
    pixels.push_back(&s.pixel_labels);
    global.push_back(s.real ? 1.0f : 0.0f);
  }
  return {to_batch(normals), to_batch(shading), torch::tensor(global), to_batch(pixels)};
}

}  // namespace

DiscriminatorModel train_discriminator(std::span<const DiscTrainSample> samples,
                                       const TrainConfig& config,
                                       const DiscriminatorOptions& options, const UNetSpec& arch) {
  config.validate();
  if (samples.empty()) throw DatasetError("discriminator training needs samples");
  bool any_real = false;
  bool any_fake = false;
  for (const auto& s : samples) {
    if (!s.shading.same_extent(samples[0].shading) || !s.normals.same_extent(s.shading) ||
        !s.pixel_labels.same_extent(s.shading)) {
      throw DatasetError("discriminator samples must share one shape");
    }
    any_real |= s.real;
    any_fake |= !s.real;
  }
  if (!any_real || !any_fake) {
    throw DatasetError("discriminator training needs both real and fake samples");
  }

  seed_torch(config.seed);
  DiscriminatorModel model(arch, options);
  model.seed_ = config.seed;
  auto& net = model.net_;
  torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(config.learning_rate));

  const auto n = samples.size();
  Batch all = stack(samples);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    net->train();
    Batch data = all;
    if (options.cutmix_probability > 0.0) {
      Rng rng(derive_seed(config.seed, 1000 + epoch));
      std::vector<DiscTrainSample> mixed(samples.begin(), samples.end());
      for (auto& s : mixed) {
        if (rng.uniform() < options.cutmix_probability) {
          const auto& other = samples[rng.uniform_int(0, static_cast<int>(n) - 1)];
          s = cutmix_augment(s, other, rng.next());
        }
      }
      data = stack(mixed);
    }
    const auto perm = shuffled_indices(n, derive_seed(config.seed, epoch + 1));
    const auto perm_t = torch::tensor(std::vector<int64_t>(perm.begin(), perm.end()), torch::kLong);
    double enc = 0.0;
    double dec = 0.0;
    for (int64_t start = 0; start < static_cast<int64_t>(n); start += config.batch_size) {
      const auto b = perm_t.index({Slice(start, std::min<int64_t>(start + config.batch_size, n))});
      optimizer.zero_grad();
      const auto out =
          model.logits(data.normals.index_select(0, b), data.shading.index_select(0, b));
      const auto loss =
          discriminator_loss(out, data.global.index_select(0, b), data.pixels.index_select(0, b));
      loss.total.backward();
      optimizer.step();
      enc += loss.enc.item<double>() * b.size(0);
      dec += loss.dec.item<double>() * b.size(0);
    }
    model.log_.enc.push_back(enc / n);
    model.log_.dec.push_back(dec / n);
  }
  net->eval();
  model.trained_ = true;
  return model;
}

DiscriminatorModel train_discriminator(const TrainConfig& config,
                                       const std::filesystem::path& checkpoint,
                                       const DiscriminatorOptions& options, const UNetSpec& arch) {
  config.validate();
  std::vector<DistortionRecord> records;
  try {
    records = load_distortion_dataset(config.dataset_dir);
  } catch (const std::exception& e) {
    throw DatasetError(e.what());
  }
  const auto samples = discriminator_samples(records);
  auto model = train_discriminator(samples, config, options, arch);
  if (!checkpoint.empty()) model.save(checkpoint);
  return model;
}

DiscriminatorEvaluation evaluate_discriminator(const DiscriminatorModel& model,
                                               std::span<const DiscTrainSample> samples) {
  std::vector<double> real, fake;
  double iou_sum = 0.0;
  for (const auto& s : samples) {
    const auto sc = model.score(s.normals, s.shading);
    if (s.real) {
      real.push_back(sc.global);
    } else {
      fake.push_back(sc.global);
      iou_sum += iou(below_threshold(sc.map, 0.5f), invert(s.pixel_labels));
    }
  }
  DiscriminatorEvaluation ev;
  ev.auc = roc_auc(real, fake);
  ev.mean_iou = iou_sum / static_cast<double>(fake.size());
  for (double v : real) ev.mean_real_score += v / real.size();
  for (double v : fake) ev.mean_fake_score += v / fake.size();
  return ev;
}

}  // namespace rpnr
