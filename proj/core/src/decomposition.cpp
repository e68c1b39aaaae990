#include "rpnr/decomposition.hpp"

#include <cmath>

#include "checkpoint_io.hpp"
#include "rpnr/random.hpp"
#include "strings.hpp"

namespace rpnr {

namespace {
constexpr const char* kKind = "decomposition";
using torch::indexing::Slice;
}  // namespace

UNetSpec default_decomposition_arch() {
  UNetSpec spec;
  spec.in_channels = 3;
  spec.out_channels = 4;
  spec.depth = 4;
  spec.base_width = 16;
  spec.max_width = 64;
  return spec;
}

DecompositionLoss decomposition_loss(const torch::Tensor& prediction, const torch::Tensor& images,
                                     const torch::Tensor& albedo, const torch::Tensor& shading) {
  const auto rho = prediction.index({Slice(), Slice(0, 3)});
  const auto s = prediction.index({Slice(), Slice(3, 4)});
  DecompositionLoss loss;
  loss.albedo = torch::mse_loss(rho, albedo);
  loss.shading = torch::mse_loss(s, shading);
  loss.reconstruction = torch::mse_loss(rho * s, images);
  loss.total = loss.albedo + loss.shading + loss.reconstruction;
  return loss;
}

DecompositionModel::DecompositionModel(const UNetSpec& arch) : arch_(arch), net_(arch) {
  if (arch.in_channels != 3 || arch.out_channels != 4) {
    throw std::invalid_argument("decomposition network maps 3 channels to 4");
  }
}

torch::Tensor DecompositionModel::forward(const torch::Tensor& images) const {
  return torch::sigmoid(net_->forward_padded(images).map);
}

Decomposition DecompositionModel::decompose(const Image& image) const {
  if (!trained_) throw UntrainedModelError("decomposition model has not been trained");
  torch::NoGradGuard no_grad;
  const auto out = forward(to_tensor(image))[0];
  return {AlbedoField(from_tensor(out.index({Slice(0, 3)}))),
          ShadingField(from_tensor(out.index({Slice(3, 4)})))};
}

void DecompositionModel::save(const std::filesystem::path& path) const {
  nlohmann::json meta;
  meta["architecture"] = detail::to_json(arch_);
  meta["trained"] = trained_;
  meta["seed"] = seed_;
  meta["epochs"] = epochs();
  meta["log"] = detail::to_json(log_);
  detail::save_checkpoint(path, kKind, net_.ptr(), std::move(meta));
}

DecompositionModel DecompositionModel::load(const std::filesystem::path& path) {
  const auto meta = detail::read_sidecar(path, kKind);
  try {
    DecompositionModel model(detail::unet_spec_from_json(meta.at("architecture")));
    detail::load_parameters(path, model.net_.ptr());
    model.trained_ = meta.at("trained").get<bool>();
    model.seed_ = meta.at("seed").get<std::uint64_t>();
    model.log_ = detail::training_log_from_json(meta.at("log"));
    model.net_->eval();
    return model;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(
        detail::cat("bad decomposition sidecar for ", path.string(), ": ", e.what()));
  }
}

namespace {

struct Tensors {
  torch::Tensor images, albedo, shading;
};

Tensors stack(std::span<const DecompositionSample> samples, std::span<const std::size_t> idx) {
  std::vector<const Raster*> images, albedo, shading;
  for (auto i : idx) {
    images.push_back(&samples[i].image);
    albedo.push_back(&samples[i].albedo);
    shading.push_back(&samples[i].shading);
  }
  return {to_batch(images), to_batch(albedo), to_batch(shading)};
}

}  // namespace

DecompositionModel train_decomposition(std::span<const DecompositionSample> samples,
                                       const TrainConfig& config, const UNetSpec& arch) {
  config.validate();
  if (samples.size() < 2) throw DatasetError("decomposition training needs at least two samples");
  for (const auto& s : samples) {
    if (!s.image.same_shape(samples[0].image) || !s.image.same_extent(s.albedo) ||
        !s.image.same_extent(s.shading)) {
      throw DatasetError("decomposition samples must share one shape");
    }
  }

  seed_torch(config.seed);
  DecompositionModel model(arch);
  model.seed_ = config.seed;

  const auto order = shuffled_indices(samples.size(), derive_seed(config.seed, 0));
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(config.validation_fraction * samples.size())), 1,
      samples.size() - 1);
  const std::span<const std::size_t> val_idx(order.data(), n_val);
  const std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());
  const Tensors train = stack(samples, train_idx);
  const Tensors val = stack(samples, val_idx);

  auto& net = model.net_;
  torch::optim::Adam optimizer(net->parameters(), torch::optim::AdamOptions(config.learning_rate));
  const auto n_train = static_cast<int64_t>(train_idx.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    net->train();
    const auto perm = shuffled_indices(train_idx.size(), derive_seed(config.seed, epoch + 1));
    const auto perm_t = torch::tensor(std::vector<int64_t>(perm.begin(), perm.end()), torch::kLong);
    double epoch_loss = 0.0;
    for (int64_t start = 0; start < n_train; start += config.batch_size) {
      const auto batch =
          perm_t.index({Slice(start, std::min<int64_t>(start + config.batch_size, n_train))});
      optimizer.zero_grad();
      const auto pred = model.forward(train.images.index_select(0, batch));
      const auto loss = decomposition_loss(pred, train.images.index_select(0, batch),
                                           train.albedo.index_select(0, batch),
                                           train.shading.index_select(0, batch));
      loss.total.backward();
      optimizer.step();
      epoch_loss += loss.total.item<double>() * batch.size(0);
    }
    model.log_.train_loss.push_back(epoch_loss / n_train);

    net->eval();
    torch::NoGradGuard no_grad;
    const auto pred = model.forward(val.images);
    model.log_.validation_loss.push_back(
        decomposition_loss(pred, val.images, val.albedo, val.shading).total.item<double>());
  }
  model.trained_ = true;
  return model;
}

DecompositionModel train_decomposition(const TrainConfig& config,
                                       const std::filesystem::path& checkpoint,
                                       const UNetSpec& arch) {
  config.validate();
  std::vector<DecompositionSample> samples;
  try {
    samples = load_decomposition_dataset(config.dataset_dir);
  } catch (const std::exception& e) {
    throw DatasetError(e.what());
  }
  auto model = train_decomposition(samples, config, arch);
  if (!checkpoint.empty()) model.save(checkpoint);
  return model;
}

double reconstruction_mse(const DecompositionModel& model,
                          std::span<const DecompositionSample> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : samples) {
    const auto d = model.decompose(s.image);
    acc += mse(form_image(d.albedo, d.shading), s.image);
  }
  return acc / static_cast<double>(samples.size());
}

}  // namespace rpnr
