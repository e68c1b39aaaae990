#include "rpnr/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "checkpoint_io.hpp"
#include "rpnr/image_io.hpp"
#include "rpnr/nn.hpp"
#include "rpnr/random.hpp"
#include "rpnr/synth.hpp"
#include "strings.hpp"

namespace rpnr {

namespace nn = torch::nn;
namespace fs = std::filesystem;
using torch::indexing::Slice;

namespace {
constexpr const char* kKind = "features";
}

FeatureNetImpl::FeatureNetImpl(const ClassifierArch& arch) {
  if (arch.widths.size() != 4 || arch.num_classes < 1 || arch.input_size < 8) {
    throw std::invalid_argument("feature classifier expects four conv widths");
  }
  const auto& w = arch.widths;
  trunk_ = nn::Sequential(nn::Conv2d(nn::Conv2dOptions(3, w[0], 5).padding(2)), nn::ReLU(),
                          nn::MaxPool2d(2), nn::Conv2d(nn::Conv2dOptions(w[0], w[1], 3).padding(1)),
                          nn::ReLU(), nn::MaxPool2d(2),
                          nn::Conv2d(nn::Conv2dOptions(w[1], w[2], 3).padding(1)), nn::ReLU(),
                          nn::Conv2d(nn::Conv2dOptions(w[2], w[3], 3).padding(1)), nn::ReLU());
  head_ = nn::Linear(w[3], arch.num_classes);
  register_module("trunk", trunk_);
  register_module("head", head_);
}

torch::Tensor FeatureNetImpl::features(const torch::Tensor& x) {
  return trunk_->forward(x).mean({2, 3});
}

torch::Tensor FeatureNetImpl::classify(const torch::Tensor& features) {
  return head_->forward(features);
}

FeatureExtractor::FeatureExtractor(const ClassifierArch& arch) : arch_(arch), net_(arch) {}

namespace {

torch::Tensor resize_to(const torch::Tensor& images, int size) {
  if (images.size(2) == size && images.size(3) == size) return images;
  return nn::functional::interpolate(images, nn::functional::InterpolateFuncOptions()
                                                 .size(std::vector<int64_t>{size, size})
                                                 .mode(torch::kBilinear)
                                                 .align_corners(false));
}

}  // namespace

torch::Tensor FeatureExtractor::features(const torch::Tensor& images) const {
  return net_->features(resize_to(images, arch_.input_size));
}

torch::Tensor FeatureExtractor::logits(const torch::Tensor& images) const {
  return net_->classify(features(images));
}

std::vector<float> FeatureExtractor::extract(const Image& image) const {
  torch::NoGradGuard no_grad;
  const auto f = features(to_tensor(image)).contiguous();
  return {f.data_ptr<float>(), f.data_ptr<float>() + f.numel()};
}

int FeatureExtractor::classify(const Image& image) const {
  torch::NoGradGuard no_grad;
  return static_cast<int>(logits(to_tensor(image)).argmax(1).item<int64_t>());
}

FeatureExtractor FeatureExtractor::clone() const {
  FeatureExtractor copy(arch_);
  torch::NoGradGuard no_grad;
  auto src = net_->named_parameters();
  for (auto& p : copy.net_->named_parameters()) p.value().copy_(src[p.key()]);
  copy.trained_ = trained_;
  copy.stage_ = stage_;
  copy.lambda_ = lambda_;
  copy.seed_ = seed_;
  copy.log_ = log_;
  return copy;
}

void FeatureExtractor::save(const fs::path& path) const {
  nlohmann::json meta;
  meta["architecture"] = {{"input_size", arch_.input_size},
                          {"num_classes", arch_.num_classes},
                          {"widths", arch_.widths},
                          {"feature_dim", arch_.feature_dim()},
                          {"feature_layer", "last_conv_avgpool"}};
  meta["trained"] = trained_;
  meta["stage"] = stage_;
  meta["consistency_weight"] = lambda_;
  meta["seed"] = seed_;
  meta["log"] = {{"classification", log_.classification}, {"consistency", log_.consistency}};
  detail::save_checkpoint(path, kKind, net_.ptr(), std::move(meta));
}

FeatureExtractor FeatureExtractor::load(const fs::path& path) {
  const auto meta = detail::read_sidecar(path, kKind);
  try {
    ClassifierArch arch;
    const auto& a = meta.at("architecture");
    arch.input_size = a.at("input_size").get<int>();
    arch.num_classes = a.at("num_classes").get<int>();
    arch.widths = a.at("widths").get<std::vector<int>>();
    FeatureExtractor extractor(arch);
    detail::load_parameters(path, extractor.net_.ptr());
    extractor.trained_ = meta.at("trained").get<bool>();
    extractor.stage_ = meta.at("stage").get<std::string>();
    extractor.lambda_ = meta.at("consistency_weight").get<double>();
    extractor.seed_ = meta.at("seed").get<std::uint64_t>();
    extractor.log_.classification = meta.at("log").at("classification").get<std::vector<double>>();
    extractor.log_.consistency = meta.at("log").at("consistency").get<std::vector<double>>();
    extractor.net_->eval();
    return extractor;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(detail::cat("bad features sidecar for ", path.string(), ": ", e.what()));
  }
}

torch::Tensor consistency_loss(const torch::Tensor& features, std::span<const int> group_sizes) {
  auto total = torch::zeros({}, features.options());
  int64_t offset = 0;
  for (int k : group_sizes) {
    const auto f = features.index({Slice(offset, offset + k)});
    offset += k;
    const auto sq = (f.unsqueeze(0) - f.unsqueeze(1)).pow(2).sum(-1);
    // The diagonal is zero, so the full sum counts each pair twice.
    total = total + sq.sum() / static_cast<double>(k * (k - 1));
  }
  if (offset != features.size(0)) throw ShapeError("consistency_loss: group sizes do not match");
  return total / static_cast<double>(group_sizes.size());
}

void validate_groups(std::span<const IlluminationGroup> groups, int num_classes) {
  if (groups.empty()) throw DatasetError("no illumination groups");
  for (const auto& g : groups) {
    if (g.images.size() < 2) {
      throw DatasetError(detail::cat("group '", g.scene, "' has ", g.images.size(),
                                     " image(s); at least two lightings are required"));
    }
    if (g.label < 0 || g.label >= num_classes) {
      throw DatasetError(detail::cat("group '", g.scene, "' label ", g.label,
                                     " is outside the classifier's ", num_classes, " classes"));
    }
  }
}

namespace {

struct GroupBatch {
  torch::Tensor images;
  torch::Tensor labels;
  std::vector<int> sizes;
};

GroupBatch gather(std::span<const IlluminationGroup> groups, std::span<const std::size_t> idx) {
  GroupBatch batch;
  std::vector<const Raster*> images;
  std::vector<int64_t> labels;
  for (auto i : idx) {
    for (const auto& img : groups[i].images) {
      images.push_back(&img);
      labels.push_back(groups[i].label);
    }
    batch.sizes.push_back(static_cast<int>(groups[i].images.size()));
  }
  batch.images = to_batch(images);
  batch.labels = torch::tensor(labels, torch::kLong);
  return batch;
}

FineTuneLoss loss_on(const FeatureExtractor& extractor, const GroupBatch& batch, double lambda_c) {
  FineTuneLoss loss;
  const auto f = extractor.features(batch.images);
  loss.classification = torch::cross_entropy_loss(extractor.network()->classify(f), batch.labels);
  loss.consistency = consistency_loss(f, batch.sizes);
  loss.total = loss.classification + lambda_c * loss.consistency;
  return loss;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

}  // namespace

FineTuneLoss finetune_loss(const FeatureExtractor& extractor,
                           std::span<const IlluminationGroup> groups, double lambda_c) {
  validate_groups(groups, extractor.architecture().num_classes);
  return loss_on(extractor, gather(groups, all_indices(groups.size())), lambda_c);
}

FeatureExtractor pretrain_classifier(std::span<const IlluminationGroup> groups,
                                     const TrainConfig& config, const ClassifierArch& arch) {
  config.validate();
  validate_groups(groups, arch.num_classes);
  seed_torch(config.seed);
  FeatureExtractor extractor(arch);
  extractor.seed_ = config.seed;

  const auto all = gather(groups, all_indices(groups.size()));
  const auto n = all.images.size(0);
  torch::optim::Adam optimizer(extractor.net_->parameters(),
                               torch::optim::AdamOptions(config.learning_rate));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto perm =
        shuffled_indices(static_cast<std::size_t>(n), derive_seed(config.seed, epoch));
    const auto perm_t = torch::tensor(std::vector<int64_t>(perm.begin(), perm.end()), torch::kLong);
    double acc = 0.0;
    for (int64_t start = 0; start < n; start += config.batch_size) {
      const auto b = perm_t.index({Slice(start, std::min<int64_t>(start + config.batch_size, n))});
      optimizer.zero_grad();
      const auto loss = torch::cross_entropy_loss(extractor.logits(all.images.index_select(0, b)),
                                                  all.labels.index_select(0, b));
      loss.backward();
      optimizer.step();
      acc += loss.item<double>() * b.size(0);
    }
    extractor.log_.classification.push_back(acc / n);
    extractor.log_.consistency.push_back(0.0);
  }
  extractor.trained_ = true;
  extractor.stage_ = "pretrained";
  return extractor;
}

FeatureExtractor finetune_features(const FeatureExtractor& pretrained,
                                   std::span<const IlluminationGroup> groups,
                                   const TrainConfig& config, double lambda_c) {
  config.validate();
  if (!pretrained.trained()) throw UntrainedModelError("fine-tuning needs a pretrained classifier");
  if (!(lambda_c >= 0.0)) throw std::invalid_argument("consistency weight must be >= 0");
  validate_groups(groups, pretrained.architecture().num_classes);
  seed_torch(config.seed);

  FeatureExtractor tuned = pretrained.clone();
  tuned.seed_ = config.seed;
  tuned.lambda_ = lambda_c;
  tuned.log_ = {};
  torch::optim::Adam optimizer(tuned.net_->parameters(),
                               torch::optim::AdamOptions(config.learning_rate));
  // batch_size counts groups per step.
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled_indices(groups.size(), derive_seed(config.seed, epoch));
    double cls = 0.0;
    double con = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      optimizer.zero_grad();
      const auto loss = loss_on(tuned, gather(groups, idx), lambda_c);
      loss.total.backward();
      optimizer.step();
      cls += loss.classification.item<double>();
      con += loss.consistency.item<double>();
      ++steps;
    }
    tuned.log_.classification.push_back(cls / steps);
    tuned.log_.consistency.push_back(con / steps);
  }
  tuned.trained_ = true;
  tuned.stage_ = "finetuned";
  return tuned;
}

double feature_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("feature_distance: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - b[i];
    acc += d * d;
  }
  return acc;
}

namespace {

std::vector<std::vector<std::vector<float>>> all_features(
    const FeatureExtractor& extractor, std::span<const IlluminationGroup> groups) {
  std::vector<std::vector<std::vector<float>>> out;
  for (const auto& g : groups) {
    auto& fs = out.emplace_back();
    for (const auto& img : g.images) fs.push_back(extractor.extract(img));
  }
  return out;
}

}  // namespace

double mean_within_group_distance(const FeatureExtractor& extractor,
                                  std::span<const IlluminationGroup> groups) {
  const auto feats = all_features(extractor, groups);
  double total = 0.0;
  for (const auto& g : feats) {
    double acc = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t j = i + 1; j < g.size(); ++j, ++pairs) acc += feature_distance(g[i], g[j]);
    }
    total += pairs ? acc / pairs : 0.0;
  }
  return feats.empty() ? 0.0 : total / static_cast<double>(feats.size());
}

double mean_between_group_distance(const FeatureExtractor& extractor,
                                   std::span<const IlluminationGroup> groups) {
  const auto feats = all_features(extractor, groups);
  double acc = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < feats.size(); ++a) {
    for (std::size_t b = a + 1; b < feats.size(); ++b) {
      for (const auto& fa : feats[a]) {
        for (const auto& fb : feats[b]) {
          acc += feature_distance(fa, fb);
          ++pairs;
        }
      }
    }
  }
  return pairs ? acc / static_cast<double>(pairs) : 0.0;
}

double classification_accuracy(const FeatureExtractor& extractor,
                               std::span<const IlluminationGroup> groups) {
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto& g : groups) {
    for (const auto& img : g.images) {
      correct += extractor.classify(img) == g.label;
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / total : 0.0;
}

IlluminationDataset load_illumination_dataset(const fs::path& root) {
  if (!fs::is_directory(root))
    throw DatasetError(detail::cat("no such dataset root ", root.string()));
  IlluminationDataset data;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) data.class_names.push_back(entry.path().filename().string());
  }
  std::sort(data.class_names.begin(), data.class_names.end());
  for (std::size_t label = 0; label < data.class_names.size(); ++label) {
    std::vector<fs::path> scenes;
    for (const auto& entry : fs::directory_iterator(root / data.class_names[label])) {
      if (entry.is_directory()) scenes.push_back(entry.path());
    }
    std::sort(scenes.begin(), scenes.end());
    for (const auto& scene : scenes) {
      IlluminationGroup group;
      group.scene = data.class_names[label] + "/" + scene.filename().string();
      group.label = static_cast<int>(label);
      for (const auto& entry : fs::directory_iterator(scene)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
          group.paths.push_back(entry.path());
        }
      }
      std::sort(group.paths.begin(), group.paths.end());
      for (const auto& p : group.paths) group.images.push_back(load_image(p));
      data.groups.push_back(std::move(group));
    }
  }
  if (data.groups.empty())
    throw DatasetError(detail::cat("dataset ", root.string(), " has no scenes"));
  validate_groups(data.groups, static_cast<int>(data.class_names.size()));
  return data;
}

namespace {

std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h * 6.0, 6.0);
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1)
    r = c, g = x;
  else if (hp < 2)
    r = x, g = c;
  else if (hp < 3)
    g = c, b = x;
  else if (hp < 4)
    g = x, b = c;
  else if (hp < 5)
    r = x, b = c;
  else
    r = c, b = x;
  const double m = v - c;
  return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

// Swaps every distinct colour of a Mondrian field for a palette colour.
AlbedoField recolor(const AlbedoField& layout, const std::array<float, 3>& base, Rng& rng) {
  std::map<std::array<float, 3>, std::array<float, 3>> palette;
  AlbedoField out(layout.height(), layout.width());
  for (int y = 0; y < layout.height(); ++y) {
    for (int x = 0; x < layout.width(); ++x) {
      const std::array<float, 3> key{layout(y, x, 0), layout(y, x, 1), layout(y, x, 2)};
      auto it = palette.find(key);
      if (it == palette.end()) {
        std::array<float, 3> c{};
        for (int k = 0; k < 3; ++k) {
          c[k] = static_cast<float>(
              std::clamp(base[k] + rng.uniform(-0.12, 0.12), kPatchColorMin, kPatchColorMax));
        }
        it = palette.emplace(key, c).first;
      }
      for (int k = 0; k < 3; ++k) out(y, x, k) = it->second[k];
    }
  }
  return out;
}

}  // namespace

IlluminationDataset make_illumination_corpus(const IlluminationCorpusSpec& spec) {
  if (spec.num_classes < 1 || spec.scenes_per_class < 1 || spec.lights_per_scene < 2) {
    throw std::invalid_argument("illumination corpus needs >= 1 class, >= 1 scene, >= 2 lights");
  }
  IlluminationDataset data;
  for (int c = 0; c < spec.num_classes; ++c) {
    data.class_names.push_back("class" + std::to_string(c));
    const auto base = hsv_to_rgb(static_cast<double>(c) / spec.num_classes, 0.55, 0.8);
    for (int s = 0; s < spec.scenes_per_class; ++s) {
      const std::uint64_t scene_seed = derive_seed(spec.seed, c * 100003ull + s);
      Rng rng(derive_seed(scene_seed, 0));
      MondrianSpec mspec;
      mspec.height = spec.height;
      mspec.width = spec.width;
      mspec.seed = derive_seed(scene_seed, 1);
      const auto albedo = recolor(gen_mondrian(mspec), base, rng);
      const auto geometry = random_lit_scene(spec.height, spec.width, derive_seed(scene_seed, 2));

      IlluminationGroup group;
      group.scene = data.class_names.back() + "/scene" + std::to_string(s);
      group.label = c;
      for (int k = 0; k < spec.lights_per_scene; ++k) {
        const auto light = random_light(derive_seed(scene_seed, 10 + k));
        group.images.push_back(form_image(albedo, lambertian_shading(geometry.normals, light)));
      }
      data.groups.push_back(std::move(group));
    }
  }
  return data;
}

void write_illumination_dataset(const fs::path& root, const IlluminationDataset& data) {
  for (const auto& g : data.groups) {
    const auto dir = root / g.scene;
    fs::create_directories(dir);
    for (std::size_t k = 0; k < g.images.size(); ++k) {
      save_image(dir / ("light" + std::to_string(k) + ".png"), g.images[k]);
    }
  }
}

}  // namespace rpnr
