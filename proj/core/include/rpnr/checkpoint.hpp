#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace rpnr {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loss curves recorded while training an auxiliary model.
struct TrainingLog {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
};

/// Sidecar metadata lives next to the parameter file as `<checkpoint>.json`.
std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

}  // namespace rpnr
