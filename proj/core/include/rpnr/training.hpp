#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

namespace rpnr {

/// Shared knobs for every supervised training stage.
struct TrainConfig {
  int epochs = 20;
  int batch_size = 16;
  double learning_rate = 2e-3;
  std::filesystem::path dataset_dir;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;

  void validate() const;
};

/// Raised when a stage is asked to run on an unusable dataset.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UntrainedModelError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace rpnr
