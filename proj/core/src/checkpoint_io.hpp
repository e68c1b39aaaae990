#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <nlohmann/json.hpp>

#include "rpnr/checkpoint.hpp"
#include "rpnr/nn.hpp"

namespace rpnr::detail {

nlohmann::json to_json(const UNetSpec& spec);
UNetSpec unet_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainingLog& log);
TrainingLog training_log_from_json(const nlohmann::json& j);

/// Writes parameters with torch::save and the sidecar next to them. `kind`
/// tags the sidecar so a checkpoint cannot be loaded as the wrong model.
void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const std::shared_ptr<torch::nn::Module>& module, nlohmann::json meta);

/// Reads and checks the sidecar; throws CheckpointError on any problem.
nlohmann::json read_sidecar(const std::filesystem::path& path, const std::string& kind);

void load_parameters(const std::filesystem::path& path,
                     const std::shared_ptr<torch::nn::Module>& module);

}  // namespace rpnr::detail
