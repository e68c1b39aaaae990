#include <fstream>

#include "checkpoint_io.hpp"
#include "strings.hpp"

namespace rpnr {

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".json");
}

namespace detail {

using nlohmann::json;

json to_json(const UNetSpec& spec) {
  return {{"in_channels", spec.in_channels},
          {"out_channels", spec.out_channels},
          {"depth", spec.depth},
          {"base_width", spec.base_width},
          {"max_width", spec.max_width},
          {"global_head", spec.global_head},
          {"batch_norm", spec.batch_norm}};
}

UNetSpec unet_spec_from_json(const json& j) {
  UNetSpec spec;
  spec.in_channels = j.at("in_channels").get<int>();
  spec.out_channels = j.at("out_channels").get<int>();
  spec.depth = j.at("depth").get<int>();
  spec.base_width = j.at("base_width").get<int>();
  spec.max_width = j.at("max_width").get<int>();
  spec.global_head = j.at("global_head").get<bool>();
  spec.batch_norm = j.value("batch_norm", false);
  return spec;
}

json to_json(const TrainingLog& log) {
  return {{"train_loss", log.train_loss}, {"validation_loss", log.validation_loss}};
}

TrainingLog training_log_from_json(const json& j) {
  return {j.at("train_loss").get<std::vector<double>>(),
          j.at("validation_loss").get<std::vector<double>>()};
}

void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const std::shared_ptr<torch::nn::Module>& module, json meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  try {
    torch::serialize::OutputArchive archive;
    module->save(archive);
    archive.save_to(path.string());
  } catch (const std::exception& e) {
    throw CheckpointError(cat("cannot write checkpoint ", path.string(), ": ", e.what()));
  }
  meta["kind"] = kind;
  std::ofstream out(sidecar_path(path));
  out << meta.dump(2) << '\n';
  if (!out) throw CheckpointError(cat("cannot write sidecar for ", path.string()));
}

json read_sidecar(const std::filesystem::path& path, const std::string& kind) {
  if (!std::filesystem::exists(path)) {
    throw CheckpointError(cat("checkpoint not found: ", path.string()));
  }
  const auto side = sidecar_path(path);
  std::ifstream in(side);
  if (!in) throw CheckpointError(cat("missing sidecar ", side.string()));
  json meta;
  try {
    meta = json::parse(in);
  } catch (const std::exception& e) {
    throw CheckpointError(cat("malformed sidecar ", side.string(), ": ", e.what()));
  }
  if (meta.value("kind", std::string{}) != kind) {
    throw CheckpointError(cat(path.string(), " is not a ", kind, " checkpoint"));
  }
  return meta;
}

void load_parameters(const std::filesystem::path& path,
                     const std::shared_ptr<torch::nn::Module>& module) {
  try {
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    module->load(archive);
  } catch (const std::exception& e) {
    throw CheckpointError(cat("corrupt checkpoint ", path.string(), ": ", e.what()));
  }
}

}  // namespace detail
}  // namespace rpnr
