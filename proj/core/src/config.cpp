#include "rpnr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "rpnr/random.hpp"
#include "strings.hpp"

namespace rpnr {

namespace fs = std::filesystem;
using nlohmann::json;

void PipelineConfig::validate() const {
  if (image_size < 8) throw ConfigError("image_size must be >= 8");
  if (normals.backend != "synthetic" && normals.backend != "pretrained") {
    throw ConfigError(detail::cat("normals.backend must be 'synthetic' or 'pretrained', got '",
                                  normals.backend, "'"));
  }
  try {
    decomposition.train.validate();
    discriminator.train.validate();
    features.pretrain.validate();
    features.train.validate();
    dip.validate();
    job.placement.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (decomposition.samples < 2) throw ConfigError("decomposition.samples must be >= 2");
  if (discriminator.samples < 2) throw ConfigError("discriminator.samples must be >= 2");
  if (!(discriminator.cutmix_probability >= 0.0 && discriminator.cutmix_probability <= 1.0)) {
    throw ConfigError("discriminator.cutmix_probability must lie in [0,1]");
  }
  if (!(features.consistency_weight >= 0.0)) {
    throw ConfigError("features.consistency_weight must be >= 0");
  }
  if (features.classes < 1 || features.scenes_per_class < 1 || features.lights_per_scene < 2) {
    throw ConfigError("features corpus needs >= 1 class, >= 1 scene and >= 2 lights");
  }
  if (!job.bundled() && (job.source.empty() || job.mask.empty() || job.target.empty())) {
    throw ConfigError("job needs all of source, mask and target (or none for the demo)");
  }
}

std::uint64_t stage_seed(const PipelineConfig& config, SeedStream stream) {
  return derive_seed(config.seed, static_cast<std::uint64_t>(stream));
}

namespace {

// Reads keys from one JSON object and rejects any it was not asked for.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(detail::cat("'", name_, "' must be an object"));
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) {
        throw ConfigError(detail::cat("unknown config key '", path(key), "'"));
      }
    }
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(detail::cat("bad value for '", path(key), "': ", e.what()));
    }
  }
  void get(const char* key, fs::path& out) {
    std::string s = out.string();
    get(key, s);
    out = s;
  }
  Section sub(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, path(key));
  }

 private:
  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void read_train(Section& s, TrainConfig& t) {
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  s.get("learning_rate", t.learning_rate);
  s.get("validation_fraction", t.validation_fraction);
  s.get("dataset_dir", t.dataset_dir);
}

json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"validation_fraction", t.validation_fraction},
          {"dataset_dir", t.dataset_dir.string()}};
}

}  // namespace

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  {
    Section root(j, "");
    root.get("seed", c.seed);
    root.get("image_size", c.image_size);
    {
      auto s = root.sub("checkpoints");
      s.get("decomposition", c.checkpoints.decomposition);
      s.get("discriminator", c.checkpoints.discriminator);
      s.get("features", c.checkpoints.features);
      s.get("features_pretrained", c.checkpoints.features_pretrained);
      s.get("normals", c.checkpoints.normals);
    }
    {
      auto s = root.sub("normals");
      s.get("backend", c.normals.backend);
      s.get("relief", c.normals.relief);
    }
    {
      auto s = root.sub("decomposition");
      read_train(s, c.decomposition.train);
      s.get("samples", c.decomposition.samples);
    }
    {
      auto s = root.sub("discriminator");
      read_train(s, c.discriminator.train);
      s.get("samples", c.discriminator.samples);
      s.get("shading_only", c.discriminator.shading_only);
      s.get("cutmix_probability", c.discriminator.cutmix_probability);
      s.get("landscape_dir", c.discriminator.landscape_dir);
    }
    {
      auto s = root.sub("features");
      {
        auto p = s.sub("pretrain");
        read_train(p, c.features.pretrain);
      }
      read_train(s, c.features.train);
      s.get("consistency_weight", c.features.consistency_weight);
      s.get("classes", c.features.classes);
      s.get("scenes_per_class", c.features.scenes_per_class);
      s.get("lights_per_scene", c.features.lights_per_scene);
    }
    {
      auto s = root.sub("dip");
      s.get("iterations", c.dip.iterations);
      s.get("learning_rate", c.dip.learning_rate);
      s.get("noise_channels", c.dip.noise_channels);
      s.get("noise_batch", c.dip.noise_batch);
      s.get("noise_perturb_sigma", c.dip.noise_perturb_sigma);
      s.get("tv_weight", c.dip.tv_weight);
      s.get("pixel_normal_loss", c.dip.pixel_normal_loss);
      s.get("depth", c.dip.depth);
      s.get("base_width", c.dip.base_width);
      s.get("max_width", c.dip.max_width);
      s.get("batch_norm", c.dip.batch_norm);
      auto w = s.sub("loss_weights");
      w.get("shading", c.dip.weights.shading);
      w.get("normal", c.dip.weights.normal);
      w.get("feature", c.dip.weights.feature);
    }
    {
      auto s = root.sub("job");
      s.get("source", c.job.source);
      s.get("mask", c.job.mask);
      s.get("target", c.job.target);
      s.get("dx", c.job.placement.dx);
      s.get("dy", c.job.placement.dy);
      s.get("scale", c.job.placement.scale);
    }
  }
  c.dip.seed = stage_seed(c, SeedStream::dip);
  c.validate();
  return c;
}

json to_json(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["image_size"] = c.image_size;
  j["checkpoints"] = {{"decomposition", c.checkpoints.decomposition.string()},
                      {"discriminator", c.checkpoints.discriminator.string()},
                      {"features", c.checkpoints.features.string()},
                      {"features_pretrained", c.checkpoints.features_pretrained.string()},
                      {"normals", c.checkpoints.normals.string()}};
  j["normals"] = {{"backend", c.normals.backend}, {"relief", c.normals.relief}};
  j["decomposition"] = train_json(c.decomposition.train);
  j["decomposition"]["samples"] = c.decomposition.samples;
  j["discriminator"] = train_json(c.discriminator.train);
  j["discriminator"]["samples"] = c.discriminator.samples;
  j["discriminator"]["shading_only"] = c.discriminator.shading_only;
  j["discriminator"]["cutmix_probability"] = c.discriminator.cutmix_probability;
  j["discriminator"]["landscape_dir"] = c.discriminator.landscape_dir.string();
  j["features"] = train_json(c.features.train);
  j["features"]["pretrain"] = train_json(c.features.pretrain);
  j["features"]["consistency_weight"] = c.features.consistency_weight;
  j["features"]["classes"] = c.features.classes;
  j["features"]["scenes_per_class"] = c.features.scenes_per_class;
  j["features"]["lights_per_scene"] = c.features.lights_per_scene;
  j["dip"] = {{"iterations", c.dip.iterations},
              {"learning_rate", c.dip.learning_rate},
              {"noise_channels", c.dip.noise_channels},
              {"noise_batch", c.dip.noise_batch},
              {"noise_perturb_sigma", c.dip.noise_perturb_sigma},
              {"tv_weight", c.dip.tv_weight},
              {"pixel_normal_loss", c.dip.pixel_normal_loss},
              {"depth", c.dip.depth},
              {"base_width", c.dip.base_width},
              {"max_width", c.dip.max_width},
              {"batch_norm", c.dip.batch_norm},
              {"loss_weights",
               {{"shading", c.dip.weights.shading},
                {"normal", c.dip.weights.normal},
                {"feature", c.dip.weights.feature}}}};
  j["job"] = {{"source", c.job.source.string()}, {"mask", c.job.mask.string()},
              {"target", c.job.target.string()}, {"dx", c.job.placement.dx},
              {"dy", c.job.placement.dy},        {"scale", c.job.placement.scale}};
  return j;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(detail::cat("cannot open config ", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(detail::cat("cannot parse config ", path.string(), ": ", e.what()));
  }
  return config_from_json(j);
}

void save_config(const fs::path& path, const PipelineConfig& config) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << to_json(config).dump(2) << '\n';
  if (!out) throw ConfigError(detail::cat("cannot write config ", path.string()));
}

fs::path cache_dir() {
  if (const char* env = std::getenv("RESHADE_CACHE_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  if (const char* home = std::getenv("HOME"); home != nullptr && *home != '\0') {
    return fs::path(home) / ".cache" / "rpnr";
  }
  return ".rpnr-cache";
}

CheckpointPaths resolve_checkpoints(const CheckpointPaths& paths) {
  const auto dir = cache_dir();
  auto pick = [&](const fs::path& p, const char* name) { return p.empty() ? dir / name : p; };
  return {pick(paths.decomposition, "decomposition.pt"),
          pick(paths.discriminator, "discriminator.pt"), pick(paths.features, "features.pt"),
          pick(paths.features_pretrained, "features_pretrained.pt"),
          pick(paths.normals, "normals.ts")};
}

}  // namespace rpnr
